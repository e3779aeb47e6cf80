#pragma once

// Serial implicit coupling of two participants within one time window:
//   p <- fluid(a);  a~ <- solid(p);  a <- accelerate(a, a~);  repeat.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/coupling/acceleration.hpp"
#include "tubeflow/coupling/participant.hpp"
#include "tubeflow/errors.hpp"

namespace tubeflow::coupling {

struct WindowResult {
  std::vector<double> pressure;  // fluid output for `area`
  std::vector<double> area;      // the iterate the fluid last consumed
  int iterations = 0;
  std::vector<double> residuals;  // convergence measure per iteration
};

inline void check_interface(const std::vector<double>& v, std::size_t n, const char* who) {
  if (v.size() != n)
    throw InvalidArgument(std::string(who) + " participant returned " + std::to_string(v.size()) +
                          " values, interface has " + std::to_string(n));
}

inline WindowResult run_time_window(Participant& fluid, Participant& solid, std::span<const double> a_init,
                                    const WindowContext& window, Accelerator& accelerator) {
  const CouplingConfig& cfg = accelerator.config();
  const std::size_t n = a_init.size();
  if (fluid.interface_size() != n || solid.interface_size() != n)
    throw InvalidArgument("participants do not share the interface length");

  WindowResult out;
  std::vector<double> a(a_init.begin(), a_init.end());
  std::vector<double> residual(n);
  for (int k = 1; k <= cfg.max_iters; ++k) {
    std::vector<double> p = fluid.solve(a, window);
    check_interface(p, n, "fluid");
    std::vector<double> a_tilde = solid.solve(p, window);
    check_interface(a_tilde, n, "solid");
    for (std::size_t i = 0; i < n; ++i) residual[i] = a_tilde[i] - a[i];
    const ConvergenceMeasure m = convergence_measure(residual, a_tilde, cfg.tol);
    out.residuals.push_back(m.value);
    if (m.converged) {
      accelerator.end_window();
      out.pressure = std::move(p);
      out.area = std::move(a);
      out.iterations = k;
      return out;
    }
    a = accelerator.next(a, a_tilde);
  }
  accelerator.end_window();
  throw CouplingDivergence("coupling did not converge in window " + std::to_string(window.index) + " within " +
                               std::to_string(cfg.max_iters) + " iterations",
                           out.residuals);
}

inline WindowResult run_time_window(Participant& fluid, Participant& solid, std::span<const double> a_init,
                                    const WindowContext& window, const CouplingConfig& cfg) {
  Accelerator accelerator(cfg);
  return run_time_window(fluid, solid, a_init, window, accelerator);
}

}  // namespace tubeflow::coupling
