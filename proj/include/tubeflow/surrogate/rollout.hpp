#pragma once

// Coupled rollout: two participants (networks or classical solvers) advanced
// window by window under the same coupling loop as the classical simulation.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tubeflow/coupling/time_window.hpp"
#include "tubeflow/domain.hpp"
#include "tubeflow/errors.hpp"
#include "tubeflow/nn/checkpoint.hpp"
#include "tubeflow/nn/network.hpp"
#include "tubeflow/surrogate/dataset.hpp"

namespace tubeflow::surrogate {

/// Trained pair plus everything needed to feed it.
struct SurrogateModels {
  nn::Network fluid;
  nn::Network solid;
  NormStats stats;
  std::size_t history = 0;
  std::size_t n_points = 0;
};

inline void check_prediction(std::span<const double> values, const char* who) {
  for (double v : values)
    if (!std::isfinite(v)) throw NumericalError(std::string(who) + " network produced a non-finite value");
}

/// Fluid network as a participant: area of the new level in, pressure out.
class NetworkFluidParticipant final : public coupling::FluidSide {
 public:
  NetworkFluidParticipant(nn::Network net, NormStats stats, std::size_t history, std::size_t n_points)
      : net_(std::move(net)), stats_(stats), history_(history), n_(n_points) {
    net_.set_mode(nn::Mode::eval);
    if (net_.output_features() != 2 * n_) throw InvalidArgument("fluid network output does not match 2 x n_points");
  }

  std::size_t interface_size() const override { return n_; }

  std::vector<double> solve(std::span<const double> area, const coupling::WindowContext& window) override {
    if (window.history.size() < history_) throw InsufficientData("fluid network needs " + std::to_string(history_) + " previous states");
    const auto past = window.history.subspan(window.history.size() - history_);
    const std::vector<double> z = net_.forward(make_fluid_input(past, area, &stats_));
    std::vector<double> p(n_);
    velocity_.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      p[i] = stats_.denormalize(z[i], kPressure);
      velocity_[i] = stats_.denormalize(z[n_ + i], kVelocity);
    }
    check_prediction(p, "fluid");
    check_prediction(velocity_, "fluid");
    return p;
  }

  std::vector<double> last_velocity() const override { return velocity_; }

 private:
  nn::Network net_;
  NormStats stats_;
  std::size_t history_;
  std::size_t n_;
  std::vector<double> velocity_;
};

/// Solid network as a participant: pressure of the new level in, area out.
class NetworkSolidParticipant final : public coupling::Participant {
 public:
  NetworkSolidParticipant(nn::Network net, NormStats stats, std::size_t history, std::size_t n_points)
      : net_(std::move(net)), stats_(stats), history_(history), n_(n_points) {
    net_.set_mode(nn::Mode::eval);
    if (net_.output_features() != n_) throw InvalidArgument("solid network output does not match n_points");
  }

  std::size_t interface_size() const override { return n_; }

  std::vector<double> solve(std::span<const double> pressure, const coupling::WindowContext& window) override {
    if (window.history.size() < history_) throw InsufficientData("solid network needs " + std::to_string(history_) + " previous states");
    const auto past = window.history.subspan(window.history.size() - history_);
    const std::vector<double> z = net_.forward(make_solid_input(past, pressure, &stats_));
    std::vector<double> a(n_);
    for (std::size_t i = 0; i < n_; ++i) a[i] = stats_.denormalize(z[i], kArea);
    check_prediction(a, "solid");
    for (std::size_t i = 0; i < n_; ++i)
      if (!(a[i] > 0.0)) throw NumericalError("solid network predicted a non-positive area at node " + std::to_string(i));
    return a;
  }

 private:
  nn::Network net_;
  NormStats stats_;
  std::size_t history_;
  std::size_t n_;
};

/// Failure during a rollout; carries the states produced before it.
class RolloutError : public NumericalError {
 public:
  RolloutError(const std::string& what, std::size_t step, Trajectory partial)
      : NumericalError(what), step_(step), partial_(std::move(partial)) {}
  std::size_t step() const noexcept { return step_; }
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  std::size_t step_;
  Trajectory partial_;
};

enum class CouplingScheme { implicit, explicit_ };

struct RolloutResult {
  Trajectory trajectory;              // seed states followed by predicted ones
  std::size_t first_predicted = 0;    // index of the first predicted state
  std::vector<int> iterations;        // coupling iterations per predicted step
};

/// Advances `seed` by `n_steps` windows. The implicit scheme iterates the
/// interface area to the coupling tolerance; the explicit scheme does one
/// fluid solve on the previous area followed by one solid solve.
inline RolloutResult coupled_rollout(coupling::FluidSide& fluid, coupling::Participant& solid,
                                     const Trajectory& seed, std::size_t n_steps,
                                     const coupling::CouplingConfig& cfg,
                                     CouplingScheme scheme = CouplingScheme::implicit) {
  if (seed.states.empty()) throw InsufficientData("rollout needs at least one seed state");
  RolloutResult out;
  out.trajectory = seed;
  out.first_predicted = seed.states.size();
  out.trajectory.states.reserve(seed.states.size() + n_steps);
  coupling::Accelerator accelerator(cfg);
  const double dt = seed.dt;
  for (std::size_t k = 0; k < n_steps; ++k) {
    auto& states = out.trajectory.states;
    const std::size_t index = states.size();
    coupling::WindowContext ctx{index, static_cast<double>(index) * dt, dt, states};
    try {
      FieldState next(fluid.interface_size());
      if (scheme == CouplingScheme::implicit) {
        coupling::WindowResult res = coupling::run_time_window(fluid, solid, states.back().area, ctx, accelerator);
        next.pressure = std::move(res.pressure);
        next.area = std::move(res.area);
        out.iterations.push_back(res.iterations);
      } else {
        next.pressure = fluid.solve(states.back().area, ctx);
        next.area = solid.solve(next.pressure, ctx);
        out.iterations.push_back(1);
      }
      next.velocity = fluid.last_velocity();
      states.push_back(std::move(next));
    } catch (const NumericalError& e) {
      Trajectory partial = out.trajectory;
      throw RolloutError("rollout step " + std::to_string(index) + ": " + e.what(), index, std::move(partial));
    }
  }
  return out;
}

/// Rollout of a trained pair from the first `history` states of `reference`.
inline RolloutResult surrogate_rollout(const SurrogateModels& models, const Trajectory& reference, std::size_t n_steps,
                                       const coupling::CouplingConfig& cfg,
                                       CouplingScheme scheme = CouplingScheme::implicit) {
  if (reference.states.size() < models.history)
    throw InsufficientData("reference has fewer states than the network history");
  if (reference.grid.n_points != models.n_points)
    throw InvalidArgument("reference grid has " + std::to_string(reference.grid.n_points) +
                          " nodes, networks expect " + std::to_string(models.n_points));
  Trajectory seed{reference.dt, reference.grid,
                  std::vector<FieldState>(reference.states.begin(),
                                          reference.states.begin() + static_cast<std::ptrdiff_t>(models.history))};
  NetworkFluidParticipant fluid(models.fluid, models.stats, models.history, models.n_points);
  NetworkSolidParticipant solid(models.solid, models.stats, models.history, models.n_points);
  return coupled_rollout(fluid, solid, seed, n_steps, cfg, scheme);
}

// Model directory layout.
inline constexpr const char* kFluidCheckpoint = "fluid.ckpt";
inline constexpr const char* kFluidSpec = "fluid.spec.json";
inline constexpr const char* kSolidCheckpoint = "solid.ckpt";
inline constexpr const char* kSolidSpec = "solid.spec.json";
inline constexpr const char* kNormStats = "norm_stats.json";

inline void save_models(SurrogateModels& models, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(models.fluid, (dir / kFluidCheckpoint).string());
  nn::save_spec({models.fluid.specs(), models.fluid.input_features()}, (dir / kFluidSpec).string());
  nn::save_checkpoint(models.solid, (dir / kSolidCheckpoint).string());
  nn::save_spec({models.solid.specs(), models.solid.input_features()}, (dir / kSolidSpec).string());
  nlohmann::json j{{"mean", {{"pressure", models.stats.mean[kPressure]},
                             {"velocity", models.stats.mean[kVelocity]},
                             {"area", models.stats.mean[kArea]}}},
                   {"std", {{"pressure", models.stats.std[kPressure]},
                            {"velocity", models.stats.std[kVelocity]},
                            {"area", models.stats.std[kArea]}}},
                   {"history", models.history},
                   {"n_points", models.n_points}};
  std::ofstream out(dir / kNormStats);
  if (!out) throw CheckpointError("cannot write " + (dir / kNormStats).string());
  out << j.dump(2) << '\n';
}

inline SurrogateModels load_models(const std::filesystem::path& dir) {
  SurrogateModels m;
  for (const char* f : {kFluidCheckpoint, kFluidSpec, kSolidCheckpoint, kSolidSpec, kNormStats})
    if (!std::filesystem::exists(dir / f)) throw CheckpointError("missing model file " + (dir / f).string());
  m.fluid = nn::load_checkpoint((dir / kFluidCheckpoint).string(), nn::load_spec((dir / kFluidSpec).string()));
  m.solid = nn::load_checkpoint((dir / kSolidCheckpoint).string(), nn::load_spec((dir / kSolidSpec).string()));
  std::ifstream in(dir / kNormStats);
  try {
    const auto j = nlohmann::json::parse(in);
    for (auto [c, name] : {std::pair{kPressure, "pressure"}, {kVelocity, "velocity"}, {kArea, "area"}}) {
      m.stats.mean[c] = j.at("mean").at(name).get<double>();
      m.stats.std[c] = j.at("std").at(name).get<double>();
    }
    m.history = j.at("history").get<std::size_t>();
    m.n_points = j.at("n_points").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed " + (dir / kNormStats).string() + ": " + e.what());
  }
  return m;
}

}  // namespace tubeflow::surrogate
