#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/coupling/least_squares.hpp"
#include "tubeflow/domain.hpp"
#include "tubeflow/errors.hpp"
#include "tubeflow/trajectory_io.hpp"

namespace tubeflow::surrogate {

/// ||pred - ref|| / ||ref||, or the absolute norm when the reference vanishes.
inline double relative_l2(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size()) throw InvalidArgument("relative_l2: size mismatch");
  double num = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) num += (pred[i] - ref[i]) * (pred[i] - ref[i]);
  const double den = coupling::norm2(ref);
  return den > 0.0 ? std::sqrt(num) / den : std::sqrt(num);
}

struct StepError {
  std::size_t step = 0;
  double t = 0.0;
  double pressure = 0.0;
  double velocity = 0.0;
  double area = 0.0;
  int coupling_iters = 0;
};

struct RolloutReport {
  std::vector<StepError> steps;  // one entry per predicted state
};

/// Errors of predicted states [first_predicted, end) against the reference
/// levels with the same index.
inline RolloutReport error_report(const Trajectory& predicted, const Trajectory& reference,
                                  std::size_t first_predicted, std::span<const int> iterations = {}) {
  if (predicted.grid.n_points != reference.grid.n_points)
    throw InvalidArgument("predicted and reference grids differ");
  if (predicted.states.size() > reference.states.size())
    throw InvalidArgument("reference has " + std::to_string(reference.states.size()) + " states, prediction " +
                          std::to_string(predicted.states.size()));
  if (std::abs(predicted.dt - reference.dt) > 1e-12 * std::max(1.0, std::abs(reference.dt)))
    throw InvalidArgument("predicted and reference time steps differ");
  RolloutReport rep;
  for (std::size_t k = first_predicted; k < predicted.states.size(); ++k) {
    const FieldState& p = predicted.states[k];
    const FieldState& r = reference.states[k];
    StepError e;
    e.step = k;
    e.t = predicted.time(k);
    e.pressure = relative_l2(p.pressure, r.pressure);
    e.velocity = relative_l2(p.velocity, r.velocity);
    e.area = relative_l2(p.area, r.area);
    const std::size_t j = k - first_predicted;
    e.coupling_iters = j < iterations.size() ? iterations[j] : 0;
    rep.steps.push_back(e);
  }
  return rep;
}

/// Nearest time level of `t`; throws when it is not within half a step of one.
inline std::size_t step_for_time(double t, double dt) {
  if (!(dt > 0.0) || !(t >= 0.0)) throw InvalidArgument("checkpoint time must be non-negative");
  const double k = std::round(t / dt);
  if (std::abs(k * dt - t) > 0.5 * dt * (1.0 + 1e-9))
    throw InvalidArgument("checkpoint time " + std::to_string(t) + " is not on the time grid");
  return static_cast<std::size_t>(k);
}

inline const StepError& error_at_time(const RolloutReport& rep, double t, double dt) {
  const std::size_t step = step_for_time(t, dt);
  for (const auto& e : rep.steps)
    if (e.step == step) return e;
  throw InvalidArgument("no predicted state at t = " + std::to_string(t) + " (step " + std::to_string(step) + ")");
}

/// Trailing moving average; entry k averages values[k-w+1..k], shorter at the start.
inline std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw InvalidArgument("moving average window must be positive");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    sum += values[k];
    if (k >= window) sum -= values[k - window];
    out[k] = sum / static_cast<double>(std::min(k + 1, window));
  }
  return out;
}

/// Full windows only: averages of values[k-w+1..k] for k >= w-1.
inline std::vector<double> full_moving_average(std::span<const double> values, std::size_t window) {
  const auto all = moving_average(values, window);
  if (values.size() < window) return {};
  return {all.begin() + static_cast<std::ptrdiff_t>(window - 1), all.end()};
}

inline bool is_non_decreasing(std::span<const double> values, double slack = 0.0) {
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] < values[k - 1] - slack) return false;
  return true;
}

inline double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

inline std::vector<double> field_errors(const RolloutReport& rep, double StepError::*field) {
  std::vector<double> out;
  out.reserve(rep.steps.size());
  for (const auto& e : rep.steps) out.push_back(e.*field);
  return out;
}

inline void write_report(const RolloutReport& rep, std::ostream& out) {
  out << "step,t,err_p,err_v,err_a,coupling_iters\n";
  for (const auto& e : rep.steps)
    out << e.step << ',' << tubeflow::detail::format_double(e.t) << ',' << tubeflow::detail::format_double(e.pressure) << ','
        << tubeflow::detail::format_double(e.velocity) << ',' << tubeflow::detail::format_double(e.area) << ',' << e.coupling_iters
        << '\n';
}

inline void write_report(const RolloutReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  write_report(rep, out);
}

}  // namespace tubeflow::surrogate
