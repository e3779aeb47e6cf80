#pragma once

// Trajectory in, trained subdomain networks out.

#include <cstddef>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/domain.hpp"
#include "tubeflow/simulation.hpp"
#include "tubeflow/surrogate/dataset.hpp"
#include "tubeflow/surrogate/rollout.hpp"
#include "tubeflow/surrogate/train.hpp"
#include "tubeflow/trajectory_io.hpp"

namespace tubeflow::surrogate {

struct SurrogateTraining {
  SurrogateModels models;
  std::vector<EpochLoss> fluid_curve;
  std::vector<EpochLoss> solid_curve;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
};

/// Off-solution samples for window j: the fluid sees area a + c (a - a_prev)
/// at the predicted level and is trained on the classical fluid response;
/// the solid sees p + c (p - p_prev) and the wall-law area. Without them the
/// networks only ever observe converged interface pairs and learn almost no
/// dependence on the coupled quantity.
inline std::vector<WindowSample> interface_samples(const Trajectory& traj, std::span<const WindowSample> windows,
                                                   std::size_t H, std::span<const double> offsets,
                                                   const SimulationConfig& physics) {
  if (traj.grid.n_points != physics.grid.n_points || std::abs(traj.dt - physics.dt) > 1e-12 * physics.dt)
    throw InvalidArgument("interface samples need a dataset produced with the configured grid and dt");
  std::vector<WindowSample> out;
  const std::span<const FieldState> all(traj.states);
  for (const auto& w : windows) {
    const std::size_t target = w.first_state + H;
    const FieldState& prev = traj.states[target - 1];
    const FieldState& next = traj.states[target];
    const auto window = all.subspan(w.first_state, H);
    for (double c : offsets) {
      std::vector<double> area(next.area.size()), pressure(next.pressure.size());
      for (std::size_t i = 0; i < area.size(); ++i) {
        area[i] = next.area[i] + c * (next.area[i] - prev.area[i]);
        pressure[i] = next.pressure[i] + c * (next.pressure[i] - prev.pressure[i]);
      }
      const auto fl = fluid::solve_fluid_step(prev, area, traj.dt, physics.grid, physics.fluid, physics.solver,
                                              traj.time(target));
      WindowSample s;
      s.first_state = w.first_state;
      s.fluid_input = make_fluid_input(window, area);
      s.fluid_target = fl.state.pressure;
      s.fluid_target.insert(s.fluid_target.end(), fl.state.velocity.begin(), fl.state.velocity.end());
      s.solid_input = make_solid_input(window, pressure);
      s.solid_target = structure::solve_structure(pressure, physics.tube).area;
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct TrainProgress {
  const char* network;  // "fluid" or "solid"
  EpochLoss loss;
};

/// Chronological split: the first train_fraction of the windows train, the
/// rest validate. Normalization is fitted on the training windows only.
inline SurrogateTraining train_surrogates(const Trajectory& data, const TrainConfig& cfg,
                                          const SimulationConfig* physics = nullptr,
                                          const std::function<void(const TrainProgress&)>& progress = {}) {
  cfg.validate();
  const std::size_t H = cfg.history;
  const std::size_t n = data.grid.n_points;
  const std::vector<WindowSample> samples = build_windows(data, H);
  const std::size_t n_train = training_sample_count(samples.size(), cfg.train_fraction);
  const std::span<const WindowSample> train(samples.data(), n_train);
  const std::span<const WindowSample> validation(samples.data() + n_train, samples.size() - n_train);

  SurrogateTraining out;
  out.train_samples = n_train;
  out.validation_samples = validation.size();
  out.models.history = H;
  out.models.n_points = n;
  out.models.stats = fit_norm_stats(data, train, H);
  const NormStats& stats = out.models.stats;

  std::vector<WindowSample> train_set(train.begin(), train.end());
  if (physics && !cfg.interface_offsets.empty()) {
    auto extra = interface_samples(data, train, H, cfg.interface_offsets, *physics);
    train_set.insert(train_set.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
  }
  out.train_samples = train_set.size();

  auto report = [&](const char* name) {
    return [&progress, name](const EpochLoss& l) {
      if (progress) progress({name, l});
    };
  };

  TrainConfig fluid_cfg = cfg;
  auto fluid_run = train_network(build_architecture(cfg.fluid_architecture, 3, n, 2 * n, cfg.dropout_rate), 3 * n,
                                 fluid_dataset(train_set, stats), fluid_dataset(validation, stats), fluid_cfg,
                                 report("fluid"));
  TrainConfig solid_cfg = cfg;
  solid_cfg.seed = nn::derive_seed(cfg.seed, 0x501d);
  auto solid_run = train_network(build_architecture(cfg.solid_architecture, 2, n, n, cfg.dropout_rate), 2 * n,
                                 solid_dataset(train_set, stats), solid_dataset(validation, stats), solid_cfg,
                                 report("solid"));
  out.models.fluid = std::move(fluid_run.network);
  out.models.solid = std::move(solid_run.network);
  out.fluid_curve = std::move(fluid_run.curve);
  out.solid_curve = std::move(solid_run.curve);
  return out;
}

inline void write_loss_curve(std::span<const EpochLoss> curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out << "epoch,train_loss,validation_loss\n";
  for (const auto& e : curve)
    out << e.epoch << ',' << tubeflow::detail::format_double(e.train) << ','
        << tubeflow::detail::format_double(e.validation) << '\n';
}

}  // namespace tubeflow::surrogate
