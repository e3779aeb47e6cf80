#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "tubeflow/errors.hpp"

namespace tubeflow {

/// Uniform node-centered grid; both tube ends are nodes.
struct Grid1D {
  double length = 0.05;
  std::size_t n_points = 100;
  double dx = 0.05 / 99.0;

  double x(std::size_t i) const { return static_cast<double>(i) * dx; }
  friend bool operator==(const Grid1D&, const Grid1D&) = default;
};

inline Grid1D build_grid(double length, std::size_t n_points) {
  if (n_points < 2) throw InvalidArgument("grid needs at least 2 points");
  if (!(length > 0.0) || !std::isfinite(length)) throw InvalidArgument("grid length must be positive");
  return Grid1D{length, n_points, length / static_cast<double>(n_points - 1)};
}

/// Elastic wall constants.
struct TubeParams {
  double r0 = 5e-3;
  double h = 1e-3;
  double elastic_modulus = 1e6;
  double sigma0 = 0.0;

  void validate() const {
    if (!(r0 > 0.0)) throw InvalidArgument("tube r0 must be positive");
    if (!(h > 0.0)) throw InvalidArgument("tube wall thickness h must be positive");
    if (!(elastic_modulus > 0.0)) throw InvalidArgument("tube elastic modulus E must be positive");
    if (!(elastic_modulus > sigma0))
      throw InvalidArgument("tube invariant violated: E must exceed sigma0");
  }
};

/// Fluid constants and boundary forcing.
struct FluidParams {
  double density = 1000.0;
  double inlet_v0 = 0.1;
  double inlet_dv = 0.5;
  double pulse_period = 0.1;
  double outlet_pressure = 1333.0;

  void validate() const {
    if (!(density > 0.0)) throw InvalidArgument("fluid density must be positive");
    if (!(pulse_period > 0.0)) throw InvalidArgument("pulse period must be positive");
  }
};

inline double reference_area(const TubeParams& params) {
  return std::numbers::pi * params.r0 * params.r0;
}

/// Pressure, velocity and area on the grid at one time level.
struct FieldState {
  std::vector<double> pressure;
  std::vector<double> velocity;
  std::vector<double> area;

  FieldState() = default;
  explicit FieldState(std::size_t n) : pressure(n, 0.0), velocity(n, 0.0), area(n, 0.0) {}

  std::size_t size() const { return pressure.size(); }

  void validate(std::size_t n_points) const {
    if (pressure.size() != n_points || velocity.size() != n_points || area.size() != n_points)
      throw InvalidArgument("field state length does not match grid");
    for (std::size_t i = 0; i < n_points; ++i) {
      if (!std::isfinite(pressure[i]) || !std::isfinite(velocity[i]) || !std::isfinite(area[i]))
        throw NumericalError("non-finite field value at node " + std::to_string(i));
      if (!(area[i] > 0.0))
        throw InvalidArgument("non-positive area at node " + std::to_string(i));
    }
  }

  friend bool operator==(const FieldState&, const FieldState&) = default;
};

/// Time-ordered states; states[n] lives at t = n * dt.
struct Trajectory {
  double dt = 1e-3;
  Grid1D grid;
  std::vector<FieldState> states;

  double time(std::size_t n) const { return static_cast<double>(n) * dt; }
  std::size_t size() const { return states.size(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

}  // namespace tubeflow
