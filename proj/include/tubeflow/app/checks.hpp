#pragma once

// Self-checks run by `tubeflow verify`.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/coupling/acceleration.hpp"
#include "tubeflow/fluid.hpp"
#include "tubeflow/nn/grad_check.hpp"
#include "tubeflow/nn/rng.hpp"
#include "tubeflow/simulation.hpp"
#include "tubeflow/structure.hpp"
#include "tubeflow/surrogate/train.hpp"

namespace tubeflow::app {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Largest normalized equilibrium residual over random admissible pressures.
inline double structure_equilibrium_error(const TubeParams& tube, std::size_t samples, std::uint64_t seed) {
  nn::Rng rng(seed);
  const double p_sing = structure::singular_pressure(tube);
  const double lo = -10.0 * std::abs(p_sing);
  const double hi = p_sing - 10.0 * structure::kSingularityMargin * std::max(1.0, std::abs(p_sing));
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double p = rng.uniform(lo, hi);
    const double r = structure::radius_from_pressure(p, tube);
    worst = std::max(worst, std::abs(structure::equilibrium_residual(p, r, tube)) / std::max(1.0, std::abs(p * r)));
  }
  return worst;
}

struct SteadyStateCheck {
  double residual_inf = 0.0;
  int newton_iters = 0;
};

/// Uniform flow through a uniform tube with a constant inlet: the rest
/// state must satisfy the discrete equations exactly.
inline SteadyStateCheck fluid_steady_state(const SimulationConfig& base) {
  FluidParams fp = base.fluid;
  fp.inlet_dv = 0.0;
  const std::size_t n = base.grid.n_points;
  FieldState s(n);
  const double a = reference_area(base.tube);
  for (std::size_t i = 0; i < n; ++i) {
    s.pressure[i] = fp.outlet_pressure;
    s.velocity[i] = fp.inlet_v0;
    s.area[i] = a;
  }
  const auto r = fluid::assemble_residual(s, s.pressure, s.velocity, s.area, base.dt, base.grid, fp, base.dt,
                                          base.solver.stabilization);
  SteadyStateCheck out;
  for (double x : r) out.residual_inf = std::max(out.residual_inf, std::abs(x));
  out.newton_iters = fluid::solve_fluid_step(s, s.area, base.dt, base.grid, fp, base.solver, base.dt).newton_iters;
  return out;
}

struct AffineCheck {
  int updates = 0;      // accelerated updates until the iterate matched the solution
  double error = 0.0;   // max-norm distance of that iterate from the direct solve
};

/// Fixed point of x = A x + c with a contractive random A, accelerated by
/// IQN-ILS; compared with the direct solve of (I - A) x = c.
inline AffineCheck iqn_affine(std::size_t d, std::uint64_t seed, double match_tol = 1e-12) {
  nn::Rng rng(seed);
  Eigen::MatrixXd A(d, d);
  Eigen::VectorXd c(d);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    c(i) = rng.uniform(-1.0, 1.0);
    for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = rng.uniform(-0.4, 0.4) / static_cast<double>(d);
  }
  const Eigen::VectorXd direct = (Eigen::MatrixXd::Identity(d, d) - A).partialPivLu().solve(c);

  coupling::CouplingConfig cfg;
  cfg.omega0 = 0.5;
  cfg.max_columns = d + 5;
  coupling::Accelerator acc(cfg);
  std::vector<double> x(d, 0.0);
  AffineCheck out;
  for (int k = 1; k <= static_cast<int>(d) + 5; ++k) {
    const Eigen::VectorXd gx = A * Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(d)) + c;
    const std::vector<double> g(gx.data(), gx.data() + d);
    x = acc.next(x, g);
    double err = 0.0;
    for (std::size_t i = 0; i < d; ++i) err = std::max(err, std::abs(x[i] - direct(static_cast<Eigen::Index>(i))));
    out.updates = k;
    out.error = err;
    if (err <= match_tol) break;
  }
  return out;
}

/// Gradient check of an architecture on a reduced grid.
inline nn::GradCheckReport architecture_grad_check(const std::string& arch, std::size_t channels, std::size_t outputs_per_node,
                                                   std::uint64_t seed, const nn::GradCheckOptions& opt = {},
                                                   std::size_t n_points = 8, std::size_t history = 4) {
  auto specs = surrogate::build_architecture(arch, channels, n_points, outputs_per_node * n_points, 0.1);
  nn::Network net(specs, channels * n_points, seed);
  nn::Rng rng(nn::derive_seed(seed, 7));
  nn::Tensor x({history, channels * n_points});
  for (double& v : x.storage()) v = rng.uniform(-1.0, 1.0);
  std::vector<double> target(net.output_features());
  for (double& v : target) v = rng.uniform(-1.0, 1.0);
  return nn::grad_check_report(net, x, target, opt);
}

struct VerifyOptions {
  // Corrupts one backprop gradient entry so the gradient checks must fail.
  bool inject_gradient_bug = false;
  double grad_tol = 1e-5;
};

inline std::vector<CheckResult> run_checks(const SimulationConfig& sim, const surrogate::TrainConfig& train,
                                           const VerifyOptions& opt = {}) {
  std::vector<CheckResult> out;
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return std::string(buf);
  };

  nn::GradCheckOptions gopt;
  if (opt.inject_gradient_bug)
    gopt.tamper = [](std::vector<double>& g) {
      if (!g.empty()) g[g.size() / 2] += 1.0 + std::abs(g[g.size() / 2]);
    };
  for (auto [name, arch, channels, outputs] :
       {std::tuple{"fluid", train.fluid_architecture, std::size_t{3}, std::size_t{2}},
        std::tuple{"solid", train.solid_architecture, std::size_t{2}, std::size_t{1}}}) {
    const auto rep = architecture_grad_check(arch, channels, outputs, train.seed, gopt);
    out.push_back({std::string("grad_check ") + name, rep.max_relative_error < opt.grad_tol,
                   "max relative error " + fmt(rep.max_relative_error) + " at " + rep.worst_parameter});
  }

  const double eq = structure_equilibrium_error(sim.tube, 1000, 12345);
  out.push_back({"structure equilibrium", eq < 1e-9, "max residual " + fmt(eq)});
  const double r0 = structure::radius_from_pressure(sim.tube.sigma0 * sim.tube.h / sim.tube.r0, sim.tube);
  const double r0_err = std::abs(r0 - sim.tube.r0) / sim.tube.r0;
  out.push_back({"structure reference radius", r0_err < 1e-12, "relative error " + fmt(r0_err)});

  const auto ss = fluid_steady_state(sim);
  out.push_back({"fluid steady state", ss.residual_inf == 0.0 && ss.newton_iters == 1,
                 "residual " + fmt(ss.residual_inf) + ", newton iterations " + std::to_string(ss.newton_iters)});

  for (std::size_t d = 1; d <= 3; ++d) {
    const auto aff = iqn_affine(d, 1000 + d);
    out.push_back({"iqn affine d=" + std::to_string(d),
                   aff.updates <= static_cast<int>(d) + 1 && aff.error <= 1e-12,
                   std::to_string(aff.updates) + " updates, error " + fmt(aff.error)});
  }
  return out;
}

}  // namespace tubeflow::app
