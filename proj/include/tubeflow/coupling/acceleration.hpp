#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/coupling/least_squares.hpp"
#include "tubeflow/errors.hpp"

namespace tubeflow::coupling {

enum class AcceleratorKind { constant_relaxation, iqn_ils };

struct CouplingConfig {
  double tol = 1e-6;
  int max_iters = 100;
  AcceleratorKind accelerator = AcceleratorKind::iqn_ils;
  double omega0 = 0.1;
  std::size_t max_columns = 20;
  double filter_eps = 1e-7;
  std::size_t reuse_windows = 0;

  void validate() const {
    if (!(omega0 > 0.0 && omega0 <= 1.0)) throw InvalidArgument("omega0 must lie in (0, 1]");
    if (!(tol > 0.0)) throw InvalidArgument("coupling tol must be positive");
    if (max_columns < 1) throw InvalidArgument("max_columns must be >= 1");
    if (max_iters < 1) throw InvalidArgument("coupling max_iters must be >= 1");
  }
};

struct ConvergenceMeasure {
  double value = 0.0;
  bool converged = false;
};

/// ||residual|| / ||reference||, or the absolute norm when the reference vanishes.
inline ConvergenceMeasure convergence_measure(std::span<const double> residual,
                                              std::span<const double> reference, double tol) {
  if (residual.size() != reference.size())
    throw InvalidArgument("convergence measure: length mismatch");
  const double rn = norm2(residual), refn = norm2(reference);
  const double value = refn > 1e-30 ? rn / refn : rn;
  return {value, value <= tol};
}

inline std::vector<double> constant_relaxation(std::span<const double> x_k, std::span<const double> x_tilde,
                                               double omega) {
  if (x_k.size() != x_tilde.size()) throw InvalidArgument("relaxation: length mismatch");
  if (!(omega > 0.0 && omega <= 1.0)) throw InvalidArgument("relaxation factor must lie in (0, 1]");
  std::vector<double> out(x_k.size());
  for (std::size_t i = 0; i < x_k.size(); ++i) out[i] = x_k[i] + omega * (x_tilde[i] - x_k[i]);
  return out;
}

/// Secant information for IQN-ILS. Columns are stored newest first;
/// V[j] = r^i - r^k and W[j] = x~^i - x~^k for the running window, where k
/// is the latest iterate. Columns of finished windows are kept frozen when
/// reuse is enabled; window_age[j] is 0 for the running window.
struct IqnHistory {
  std::vector<std::vector<double>> V;
  std::vector<std::vector<double>> W;
  std::vector<std::size_t> window_age;
  std::optional<std::vector<double>> last_residual;
  std::optional<std::vector<double>> last_value;

  std::size_t columns() const { return V.size(); }

  void erase_column(std::size_t j) {
    V.erase(V.begin() + static_cast<std::ptrdiff_t>(j));
    W.erase(W.begin() + static_cast<std::ptrdiff_t>(j));
    window_age.erase(window_age.begin() + static_cast<std::ptrdiff_t>(j));
  }

  /// Closes the running window: drops the latest iterate, ages the columns
  /// and keeps only those of the last `reuse_windows` windows.
  void end_window(std::size_t reuse_windows) {
    last_residual.reset();
    last_value.reset();
    for (std::size_t j = V.size(); j-- > 0;) {
      if (++window_age[j] > reuse_windows) erase_column(j);
    }
  }
};

/// One IQN-ILS update. Returns x^{k+1}; `history` is updated in place.
inline std::vector<double> iqn_ils_step(IqnHistory& history, std::span<const double> x_k,
                                        std::span<const double> x_tilde, const CouplingConfig& cfg) {
  const std::size_t n = x_k.size();
  if (x_tilde.size() != n) throw InvalidArgument("iqn: length mismatch");
  std::vector<double> r(n);
  bool zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x_k[i]) || !std::isfinite(x_tilde[i]))
      throw NumericalError("iqn: non-finite interface value at node " + std::to_string(i));
    r[i] = x_tilde[i] - x_k[i];
    if (r[i] != 0.0) zero = false;
  }
  if (zero) return {x_tilde.begin(), x_tilde.end()};

  if (history.last_residual) {
    if (history.last_residual->size() != n) throw InvalidArgument("iqn: history length mismatch");
    std::vector<double> dr(n), dw(n);
    for (std::size_t i = 0; i < n; ++i) {
      dr[i] = (*history.last_residual)[i] - r[i];
      dw[i] = (*history.last_value)[i] - x_tilde[i];
    }
    for (std::size_t j = 0; j < history.columns(); ++j) {
      if (history.window_age[j] != 0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        history.V[j][i] += dr[i];
        history.W[j][i] += dw[i];
      }
    }
    history.V.insert(history.V.begin(), std::move(dr));
    history.W.insert(history.W.begin(), std::move(dw));
    history.window_age.insert(history.window_age.begin(), 0);
    while (history.columns() > cfg.max_columns) history.erase_column(history.columns() - 1);
  }
  history.last_residual = r;
  history.last_value = std::vector<double>(x_tilde.begin(), x_tilde.end());

  if (history.columns() == 0) return constant_relaxation(x_k, x_tilde, cfg.omega0);

  for (const auto& col : history.V)
    if (col.size() != n) throw InvalidArgument("iqn: column length mismatch");
  std::vector<double> minus_r(n);
  for (std::size_t i = 0; i < n; ++i) minus_r[i] = -r[i];
  FilteredSolution ls = filtered_least_squares(history.V, minus_r, cfg.filter_eps);
  for (std::size_t d = ls.dropped.size(); d-- > 0;) {
    ls.lambda.erase(ls.lambda.begin() + static_cast<std::ptrdiff_t>(ls.dropped[d]));
    history.erase_column(ls.dropped[d]);
  }
  if (ls.rank == 0) return constant_relaxation(x_k, x_tilde, cfg.omega0);

  std::vector<double> next(x_tilde.begin(), x_tilde.end());
  for (std::size_t j = 0; j < history.columns(); ++j)
    for (std::size_t i = 0; i < n; ++i) next[i] += history.W[j][i] * ls.lambda[j];
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(next[i])) throw NumericalError("iqn: non-finite update");
  return next;
}

/// Stateful post-processing of the interface vector across iterations.
class Accelerator {
 public:
  explicit Accelerator(CouplingConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  std::vector<double> next(std::span<const double> x_k, std::span<const double> x_tilde) {
    if (cfg_.accelerator == AcceleratorKind::constant_relaxation)
      return constant_relaxation(x_k, x_tilde, cfg_.omega0);
    return iqn_ils_step(history_, x_k, x_tilde, cfg_);
  }

  void end_window() { history_.end_window(cfg_.reuse_windows); }

  const IqnHistory& history() const { return history_; }
  const CouplingConfig& config() const { return cfg_; }

 private:
  CouplingConfig cfg_;
  IqnHistory history_;
};

}  // namespace tubeflow::coupling
