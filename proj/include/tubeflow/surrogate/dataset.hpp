#pragma once

// Windowed samples for the two subdomain networks.
//
// A window covers H consecutive states j..j+H-1 and targets state j+H. Each
// network also sees the interface quantity of the level it predicts, coming
// from the other subdomain:
//   fluid row k: (p_{j+k}, v_{j+k}, a_{j+k+1})    target (p, v)_{j+H}
//   solid row k: (a_{j+k}, p_{j+k+1})             target a_{j+H}
// so the last fluid row carries the area of the predicted level and the last
// solid row its pressure. Rows are channel-major: [ch0 nodes..., ch1 nodes...].

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/domain.hpp"
#include "tubeflow/errors.hpp"
#include "tubeflow/nn/tensor.hpp"

namespace tubeflow::surrogate {

enum Channel : std::size_t { kPressure = 0, kVelocity = 1, kArea = 2 };

/// Per-field z-score statistics of the training split.
struct NormStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};

  double normalize(double x, Channel c) const { return (x - mean[c]) / std[c]; }
  double denormalize(double z, Channel c) const { return std::fma(z, std[c], mean[c]); }

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double kStdGuard = 1e-12;

inline NormStats fit_norm_stats(std::span<const FieldState> states) {
  if (states.empty()) throw InsufficientData("cannot fit normalization on an empty split");
  NormStats s;
  for (std::size_t c = 0; c < 3; ++c) {
    auto field = [&](const FieldState& st) -> const std::vector<double>& {
      return c == kPressure ? st.pressure : c == kVelocity ? st.velocity : st.area;
    };
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& st : states)
      for (double x : field(st)) {
        sum += x;
        ++count;
      }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& st : states)
      for (double x : field(st)) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    s.mean[c] = mean;
    s.std[c] = (sd < kStdGuard || !std::isfinite(sd)) ? 1.0 : sd;
  }
  return s;
}

inline double norm_or_identity(double x, Channel c, const NormStats* stats) {
  return stats ? stats->normalize(x, c) : x;
}

/// Fluid network input for the level after `window`, given that level's area.
inline nn::Tensor make_fluid_input(std::span<const FieldState> window, std::span<const double> next_area,
                                   const NormStats* stats = nullptr) {
  const std::size_t H = window.size(), n = next_area.size();
  nn::Tensor x({H, 3 * n});
  for (std::size_t k = 0; k < H; ++k) {
    const FieldState& st = window[k];
    const std::vector<double>* area_next = k + 1 < H ? &window[k + 1].area : nullptr;
    auto row = x.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = norm_or_identity(st.pressure[i], kPressure, stats);
      row[n + i] = norm_or_identity(st.velocity[i], kVelocity, stats);
      row[2 * n + i] = norm_or_identity(area_next ? (*area_next)[i] : next_area[i], kArea, stats);
    }
  }
  return x;
}

/// Solid network input for the level after `window`, given that level's pressure.
inline nn::Tensor make_solid_input(std::span<const FieldState> window, std::span<const double> next_pressure,
                                   const NormStats* stats = nullptr) {
  const std::size_t H = window.size(), n = next_pressure.size();
  nn::Tensor x({H, 2 * n});
  for (std::size_t k = 0; k < H; ++k) {
    const FieldState& st = window[k];
    const std::vector<double>* p_next = k + 1 < H ? &window[k + 1].pressure : nullptr;
    auto row = x.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = norm_or_identity(st.area[i], kArea, stats);
      row[n + i] = norm_or_identity(p_next ? (*p_next)[i] : next_pressure[i], kPressure, stats);
    }
  }
  return x;
}

struct WindowSample {
  std::size_t first_state = 0;
  nn::Tensor fluid_input;             // [H, 3n]
  std::vector<double> fluid_target;   // (p, v) of state first+H, length 2n
  nn::Tensor solid_input;             // [H, 2n]
  std::vector<double> solid_target;   // a of state first+H, length n
};

/// Physical-unit samples; sample j uses states [j, j+H) and targets j+H.
inline std::vector<WindowSample> build_windows(const Trajectory& traj, std::size_t H) {
  if (H < 1) throw InvalidArgument("window length must be >= 1");
  const std::size_t T = traj.states.size();
  if (T <= H)
    throw InsufficientData("trajectory has " + std::to_string(T) + " states; window length " + std::to_string(H) +
                           " needs at least " + std::to_string(H + 1));
  std::vector<WindowSample> out;
  out.reserve(T - H);
  const std::span<const FieldState> all(traj.states);
  for (std::size_t j = 0; j + H < T; ++j) {
    const auto window = all.subspan(j, H);
    const FieldState& next = traj.states[j + H];
    WindowSample s;
    s.first_state = j;
    s.fluid_input = make_fluid_input(window, next.area);
    s.solid_input = make_solid_input(window, next.pressure);
    s.fluid_target = next.pressure;
    s.fluid_target.insert(s.fluid_target.end(), next.velocity.begin(), next.velocity.end());
    s.solid_target = next.area;
    out.push_back(std::move(s));
  }
  return out;
}

/// Number of leading samples in the training split.
inline std::size_t training_sample_count(std::size_t samples, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(samples)));
  if (n == 0) throw InsufficientData("training split is empty");
  return n;
}

/// Normalization statistics over exactly the states the training samples touch.
inline NormStats fit_norm_stats(const Trajectory& traj, std::span<const WindowSample> training, std::size_t H) {
  if (training.empty()) throw InsufficientData("cannot fit normalization on an empty split");
  std::size_t last = 0;
  for (const auto& s : training) last = std::max(last, s.first_state + H);
  return fit_norm_stats(std::span<const FieldState>(traj.states).subspan(0, last + 1));
}

struct Dataset {
  std::vector<nn::Tensor> inputs;
  std::vector<std::vector<double>> targets;
  std::size_t size() const { return inputs.size(); }
};

inline nn::Tensor normalize_rows(const nn::Tensor& x, std::span<const Channel> channels, const NormStats& stats) {
  nn::Tensor out = x;
  const std::size_t n = x.dim(1) / channels.size();
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < channels.size(); ++c)
      for (std::size_t i = 0; i < n; ++i) row[c * n + i] = stats.normalize(row[c * n + i], channels[c]);
  }
  return out;
}

inline std::vector<double> normalize_vector(std::span<const double> x, std::span<const Channel> channels,
                                            const NormStats& stats) {
  std::vector<double> out(x.begin(), x.end());
  const std::size_t n = x.size() / channels.size();
  for (std::size_t c = 0; c < channels.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = stats.normalize(out[c * n + i], channels[c]);
  return out;
}

inline constexpr std::array<Channel, 3> kFluidInputChannels{kPressure, kVelocity, kArea};
inline constexpr std::array<Channel, 2> kFluidTargetChannels{kPressure, kVelocity};
inline constexpr std::array<Channel, 2> kSolidInputChannels{kArea, kPressure};
inline constexpr std::array<Channel, 1> kSolidTargetChannels{kArea};

inline Dataset fluid_dataset(std::span<const WindowSample> samples, const NormStats& stats) {
  Dataset d;
  for (const auto& s : samples) {
    d.inputs.push_back(normalize_rows(s.fluid_input, kFluidInputChannels, stats));
    d.targets.push_back(normalize_vector(s.fluid_target, kFluidTargetChannels, stats));
  }
  return d;
}

inline Dataset solid_dataset(std::span<const WindowSample> samples, const NormStats& stats) {
  Dataset d;
  for (const auto& s : samples) {
    d.inputs.push_back(normalize_rows(s.solid_input, kSolidInputChannels, stats));
    d.targets.push_back(normalize_vector(s.solid_target, kSolidTargetChannels, stats));
  }
  return d;
}

}  // namespace tubeflow::surrogate
