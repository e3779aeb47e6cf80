#pragma once

// Classical partitioned simulation: the implicit fluid solver and the wall
// law wrapped as coupling participants and marched over time windows.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/coupling/time_window.hpp"
#include "tubeflow/domain.hpp"
#include "tubeflow/fluid.hpp"
#include "tubeflow/structure.hpp"

namespace tubeflow {

struct SimulationConfig {
  Grid1D grid = build_grid(0.05, 100);
  TubeParams tube;
  FluidParams fluid;
  double dt = 1e-3;
  std::size_t steps = 200;
  fluid::FluidSolverConfig solver;
  coupling::CouplingConfig coupling;

  void validate() const {
    tube.validate();
    fluid.validate();
    solver.newton.validate();
    coupling.validate();
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  }
};

/// Area in, pressure out. The full state of the latest solve is kept for
/// the driver (velocity rides along with the converged window).
class FluidParticipant final : public coupling::FluidSide {
 public:
  FluidParticipant(Grid1D grid, FluidParams params, fluid::FluidSolverConfig cfg)
      : grid_(grid), params_(params), cfg_(cfg) {}

  std::size_t interface_size() const override { return grid_.n_points; }

  std::vector<double> solve(std::span<const double> area, const coupling::WindowContext& window) override {
    if (window.history.empty()) throw InvalidArgument("fluid participant needs a previous state");
    last_ = fluid::solve_fluid_step(window.history.back(), area, window.dt, grid_, params_, cfg_, window.t_new);
    return last_.state.pressure;
  }

  const fluid::FluidStepResult& last_solution() const { return last_; }
  std::vector<double> last_velocity() const override { return last_.state.velocity; }

 private:
  Grid1D grid_;
  FluidParams params_;
  fluid::FluidSolverConfig cfg_;
  fluid::FluidStepResult last_;
};

/// Pressure in, area out.
class StructureParticipant final : public coupling::Participant {
 public:
  StructureParticipant(std::size_t n_points, TubeParams params) : n_(n_points), params_(params) {}

  std::size_t interface_size() const override { return n_; }

  std::vector<double> solve(std::span<const double> pressure, const coupling::WindowContext&) override {
    return structure::solve_structure(pressure, params_).area;
  }

 private:
  std::size_t n_;
  TubeParams params_;
};

/// Uniform rest state: outlet pressure everywhere, baseline inlet velocity,
/// wall in equilibrium with that pressure.
inline FieldState initial_state(const SimulationConfig& cfg) {
  const std::size_t n = cfg.grid.n_points;
  FieldState s(n);
  const double a = structure::area_from_pressure(cfg.fluid.outlet_pressure, cfg.tube);
  const double v = fluid::inlet_velocity(0.0, cfg.fluid);
  for (std::size_t i = 0; i < n; ++i) {
    s.pressure[i] = cfg.fluid.outlet_pressure;
    s.velocity[i] = v;
    s.area[i] = a;
  }
  return s;
}

struct SimulationResult {
  Trajectory trajectory;
  std::vector<int> iterations;  // coupling iterations per window, window n produces state n
  std::vector<std::vector<double>> residuals;
};

/// Advances one window from `history` with the classical participants.
inline FieldState classical_window(FluidParticipant& fluid, StructureParticipant& solid,
                                   std::span<const FieldState> history, double dt,
                                   coupling::Accelerator& accelerator, coupling::WindowResult* info = nullptr) {
  coupling::WindowContext ctx{history.size(), static_cast<double>(history.size()) * dt, dt, history};
  coupling::WindowResult res = coupling::run_time_window(fluid, solid, history.back().area, ctx, accelerator);
  FieldState next = fluid.last_solution().state;
  if (info) *info = std::move(res);
  return next;
}

inline SimulationResult simulate(const SimulationConfig& cfg) {
  cfg.validate();
  SimulationResult out;
  out.trajectory.dt = cfg.dt;
  out.trajectory.grid = cfg.grid;
  out.trajectory.states.reserve(cfg.steps + 1);
  out.trajectory.states.push_back(initial_state(cfg));

  FluidParticipant fluid(cfg.grid, cfg.fluid, cfg.solver);
  StructureParticipant solid(cfg.grid.n_points, cfg.tube);
  coupling::Accelerator accelerator(cfg.coupling);
  for (std::size_t n = 1; n <= cfg.steps; ++n) {
    coupling::WindowResult info;
    try {
      FieldState next = classical_window(fluid, solid, out.trajectory.states, cfg.dt, accelerator, &info);
      out.trajectory.states.push_back(std::move(next));
    } catch (const NonConvergence& e) {
      throw NonConvergence("window " + std::to_string(n) + ": " + e.what(), e.trace());
    } catch (const CouplingDivergence& e) {
      throw CouplingDivergence("window " + std::to_string(n) + ": " + e.what(), e.residuals());
    } catch (const NumericalError& e) {
      throw NumericalError("window " + std::to_string(n) + ": " + e.what());
    }
    out.iterations.push_back(info.iterations);
    out.residuals.push_back(std::move(info.residuals));
  }
  return out;
}

}  // namespace tubeflow
