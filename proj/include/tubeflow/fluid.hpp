#pragma once

// Implicit 1D flow in a compliant tube: backward Euler in time, central
// differences in space, Newton iteration on the interleaved unknown vector
// u = (p_0, v_0, p_1, v_1, ..., p_{N-1}, v_{N-1}).
//
// Row 2i is the continuity equation at node i, row 2i+1 the momentum
// equation. Boundary closure: node 0 keeps a one-sided continuity row and
// replaces momentum by the inlet velocity; node N-1 replaces continuity by
// the outlet pressure and keeps a one-sided momentum row.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/domain.hpp"
#include "tubeflow/errors.hpp"

namespace tubeflow::fluid {

enum class JacobianMode { analytic, finite_difference };

struct NewtonConfig {
  double tol = 1e-10;
  int max_iters = 100;
  JacobianMode jacobian_mode = JacobianMode::finite_difference;
  double fd_step = 1e-8;  // relative: h = fd_step * max(1, |u|)

  void validate() const {
    if (!(tol > 0.0)) throw InvalidArgument("newton tol must be positive");
    if (max_iters < 1) throw InvalidArgument("newton max_iters must be >= 1");
  }
};

struct FluidSolverConfig {
  NewtonConfig newton;
  bool stabilization = true;  // pressure-Laplacian term in the continuity rows
};

struct FluidStepResult {
  FieldState state;
  int newton_iters = 0;
  double final_residual = 0.0;
};

inline double inlet_velocity(double t, const FluidParams& params) {
  const double s = std::sin(std::numbers::pi * t / params.pulse_period);
  return params.inlet_v0 + params.inlet_dv * s * s;
}

/// Everything about a step that stays fixed while Newton iterates.
struct StepProblem {
  const FieldState& prev;
  std::span<const double> a_new;
  double dt;
  const Grid1D& grid;
  const FluidParams& params;
  double t_new;
  bool stabilization = true;

  void validate() const {
    const std::size_t n = grid.n_points;
    if (a_new.size() != n) throw InvalidArgument("area vector length does not match grid");
    if (prev.size() != n) throw InvalidArgument("previous state length does not match grid");
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    for (std::size_t i = 0; i < n; ++i)
      if (!(a_new[i] > 0.0) || !std::isfinite(a_new[i]))
        throw InvalidArgument("non-positive area at node " + std::to_string(i));
  }

  /// Pressure-stabilization weight s = dx / (dt rho c_ref), c_ref = max|v^n| + 1.
  double stabilization_weight() const {
    if (!stabilization) return 0.0;
    double vmax = 0.0;
    for (double v : prev.velocity) vmax = std::max(vmax, std::abs(v));
    return grid.dx / (dt * params.density * (vmax + 1.0));
  }

  /// Row scale dt / a_ref applied to PDE rows inside Newton (a_ref = mean previous area).
  double row_scale() const {
    double sum = 0.0;
    for (double a : prev.area) sum += a;
    return dt / (sum / static_cast<double>(prev.size()));
  }
};

namespace detail {

inline void assemble_into(const StepProblem& prob, std::span<const double> p, std::span<const double> v,
                          double s, std::span<double> r) {
  const std::size_t n = prob.grid.n_points;
  const auto& an = prob.prev.area;
  const auto& vn = prob.prev.velocity;
  const auto a = prob.a_new;
  const double dt = prob.dt, dx = prob.grid.dx, rho = prob.params.density;
  const double inv2dx = 1.0 / (2.0 * dx);

  r[0] = (a[0] - an[0]) / dt + (a[1] * v[1] - a[0] * v[0]) / dx;
  r[1] = v[0] - inlet_velocity(prob.t_new, prob.params);

  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double cont = (a[i] - an[i]) / dt + (a[i + 1] * v[i + 1] - a[i - 1] * v[i - 1]) * inv2dx -
                        s * (p[i - 1] - 2.0 * p[i] + p[i + 1]);
    const double mom = (a[i] * v[i] - an[i] * vn[i]) / dt +
                       (a[i + 1] * v[i + 1] * v[i + 1] - a[i - 1] * v[i - 1] * v[i - 1]) * inv2dx +
                       ((a[i + 1] * p[i + 1] - a[i - 1] * p[i - 1]) * inv2dx -
                        p[i] * (a[i + 1] - a[i - 1]) * inv2dx) /
                           rho;
    r[2 * i] = cont;
    r[2 * i + 1] = mom;
  }

  const std::size_t m = n - 1, l = n - 2;
  r[2 * m] = p[m] - prob.params.outlet_pressure;
  r[2 * m + 1] = (a[m] * v[m] - an[m] * vn[m]) / dt + (a[m] * v[m] * v[m] - a[l] * v[l] * v[l]) / dx +
                 ((a[m] * p[m] - a[l] * p[l]) / dx - p[m] * (a[m] - a[l]) / dx) / rho;
}

inline bool is_pde_row(std::size_t row, std::size_t n) {
  return row != 1 && row != 2 * (n - 1);
}

}  // namespace detail

/// Discrete residual of the continuity and momentum equations (unscaled).
inline std::vector<double> assemble_residual(const FieldState& prev, std::span<const double> p,
                                             std::span<const double> v, std::span<const double> a_new,
                                             double dt, const Grid1D& grid, const FluidParams& params,
                                             double t_new, bool stabilization = true) {
  StepProblem prob{prev, a_new, dt, grid, params, t_new, stabilization};
  prob.validate();
  if (p.size() != grid.n_points || v.size() != grid.n_points)
    throw InvalidArgument("guess length does not match grid");
  std::vector<double> r(2 * grid.n_points);
  detail::assemble_into(prob, p, v, prob.stabilization_weight(), r);
  return r;
}

/// Row-wise derivative of the residual with respect to the interleaved unknowns.
inline Eigen::MatrixXd analytic_jacobian(const StepProblem& prob, std::span<const double> /*p*/,
                                         std::span<const double> v, double s) {
  const std::size_t n = prob.grid.n_points;
  const auto a = prob.a_new;
  const double dt = prob.dt, dx = prob.grid.dx, rho = prob.params.density;
  const double inv2dx = 1.0 / (2.0 * dx);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  auto P = [](std::size_t i) { return static_cast<Eigen::Index>(2 * i); };
  auto V = [](std::size_t i) { return static_cast<Eigen::Index>(2 * i + 1); };

  J(0, V(0)) = -a[0] / dx;
  J(0, V(1)) = a[1] / dx;
  J(1, V(0)) = 1.0;

  for (std::size_t i = 1; i + 1 < n; ++i) {
    const auto rc = static_cast<Eigen::Index>(2 * i), rm = rc + 1;
    J(rc, V(i + 1)) = a[i + 1] * inv2dx;
    J(rc, V(i - 1)) = -a[i - 1] * inv2dx;
    J(rc, P(i - 1)) = -s;
    J(rc, P(i)) = 2.0 * s;
    J(rc, P(i + 1)) = -s;

    J(rm, V(i)) = a[i] / dt;
    J(rm, V(i + 1)) = 2.0 * a[i + 1] * v[i + 1] * inv2dx;
    J(rm, V(i - 1)) = -2.0 * a[i - 1] * v[i - 1] * inv2dx;
    J(rm, P(i + 1)) = a[i + 1] * inv2dx / rho;
    J(rm, P(i - 1)) = -a[i - 1] * inv2dx / rho;
    J(rm, P(i)) = -(a[i + 1] - a[i - 1]) * inv2dx / rho;
  }

  const std::size_t m = n - 1, l = n - 2;
  const auto ro = static_cast<Eigen::Index>(2 * m);
  J(ro, P(m)) = 1.0;
  J(ro + 1, V(m)) = a[m] / dt + 2.0 * a[m] * v[m] / dx;
  J(ro + 1, V(l)) = -2.0 * a[l] * v[l] / dx;
  J(ro + 1, P(m)) += a[l] / (rho * dx);
  J(ro + 1, P(l)) += -a[l] / (rho * dx);
  return J;
}

/// Finite-difference Jacobian. Columns of nodes three apart touch disjoint
/// rows, so six residual evaluations cover every column.
inline Eigen::MatrixXd fd_jacobian(const StepProblem& prob, std::span<const double> p,
                                   std::span<const double> v, double s, std::span<const double> r0,
                                   double rel_step) {
  const std::size_t n = prob.grid.n_points;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  std::vector<double> pp(p.begin(), p.end()), vv(v.begin(), v.end()), r(2 * n), steps(n);
  for (int var = 0; var < 2; ++var) {
    std::vector<double>& u = var == 0 ? pp : vv;
    for (std::size_t color = 0; color < 3; ++color) {
      for (std::size_t j = color; j < n; j += 3) {
        steps[j] = rel_step * std::max(1.0, std::abs(u[j]));
        u[j] += steps[j];
      }
      detail::assemble_into(prob, pp, vv, s, r);
      for (std::size_t j = color; j < n; j += 3) {
        u[j] = var == 0 ? p[j] : v[j];
        const auto col = static_cast<Eigen::Index>(2 * j + var);
        const std::size_t lo = j == 0 ? 0 : j - 1, hi = std::min(n - 1, j + 1);
        for (std::size_t node = lo; node <= hi; ++node)
          for (std::size_t row = 2 * node; row <= 2 * node + 1; ++row)
            J(static_cast<Eigen::Index>(row), col) = (r[row] - r0[row]) / steps[j];
      }
    }
  }
  return J;
}

/// One implicit time step for the given new-time-level area.
inline FluidStepResult solve_fluid_step(const FieldState& prev, std::span<const double> a_new, double dt,
                                        const Grid1D& grid, const FluidParams& params,
                                        const FluidSolverConfig& cfg, double t_new,
                                        const FieldState* guess = nullptr) {
  StepProblem prob{prev, a_new, dt, grid, params, t_new, cfg.stabilization};
  prob.validate();
  cfg.newton.validate();
  // A step longer than half the pulse period samples the inlet forcing below
  // its Nyquist rate; the iteration would converge to an aliased answer.
  if (params.inlet_dv != 0.0 && dt > 0.5 * params.pulse_period)
    throw NonConvergence("time step " + std::to_string(dt) + " s does not resolve the inlet pulse (period " +
                             std::to_string(params.pulse_period) + " s); Newton iteration rejected",
                         {});
  const std::size_t n = grid.n_points;
  const double s = prob.stabilization_weight();
  const double scale = prob.row_scale();

  const FieldState& init = guess ? *guess : prev;
  std::vector<double> p = init.pressure, v = init.velocity;
  std::vector<double> r(2 * n);
  std::vector<double> trace;
  Eigen::VectorXd rhs(2 * n);

  for (int iter = 1; iter <= cfg.newton.max_iters; ++iter) {
    detail::assemble_into(prob, p, v, s, r);
    double norm = 0.0;
    bool finite = true;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double rk = detail::is_pde_row(k, n) ? r[k] * scale : r[k];
      if (!std::isfinite(rk)) finite = false;
      norm = std::max(norm, std::abs(rk));
    }
    trace.push_back(finite ? norm : std::nan(""));
    if (!finite)
      throw NonConvergence("fluid Newton produced a non-finite residual at iteration " + std::to_string(iter),
                           trace);
    if (norm <= cfg.newton.tol) {
      FluidStepResult out;
      out.state.pressure = std::move(p);
      out.state.velocity = std::move(v);
      out.state.area.assign(a_new.begin(), a_new.end());
      out.newton_iters = iter;
      out.final_residual = norm;
      return out;
    }
    if (iter == cfg.newton.max_iters) break;

    Eigen::MatrixXd J = cfg.newton.jacobian_mode == JacobianMode::analytic
                            ? analytic_jacobian(prob, p, v, s)
                            : fd_jacobian(prob, p, v, s, r, cfg.newton.fd_step);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double w = detail::is_pde_row(k, n) ? scale : 1.0;
      rhs(static_cast<Eigen::Index>(k)) = -r[k] * w;
      J.row(static_cast<Eigen::Index>(k)) *= w;
    }
    const Eigen::VectorXd du = J.partialPivLu().solve(rhs);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] += du(static_cast<Eigen::Index>(2 * i));
      v[i] += du(static_cast<Eigen::Index>(2 * i + 1));
    }
  }
  throw NonConvergence("fluid Newton did not converge in " + std::to_string(cfg.newton.max_iters) +
                           " iterations (last residual " + std::to_string(trace.back()) + ")",
                       trace);
}

}  // namespace tubeflow::fluid
