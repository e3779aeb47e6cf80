#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tubeflow/domain.hpp"

namespace tubeflow::coupling {

/// Time-window information handed to every participant solve.
struct WindowContext {
  std::size_t index = 0;  // index of the state being computed
  double t_new = 0.0;
  double dt = 0.0;
  std::span<const FieldState> history;  // converged states so far, back() is the previous level
};

/// A single-physics solver seen from the coupling loop: interface vector in,
/// interface vector out, both on the shared (matching) interface nodes.
class Participant {
 public:
  virtual ~Participant() = default;
  virtual std::size_t interface_size() const = 0;
  virtual std::vector<double> solve(std::span<const double> input, const WindowContext& window) = 0;
};

/// Fluid side of the coupling: area in, pressure out, with the velocity of
/// the latest solve available to the driver.
class FluidSide : public Participant {
 public:
  virtual std::vector<double> last_velocity() const = 0;
};

}  // namespace tubeflow::coupling
