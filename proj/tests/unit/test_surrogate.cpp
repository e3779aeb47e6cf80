#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <vector>

#include "tubeflow/simulation.hpp"
#include "tubeflow/surrogate/dataset.hpp"
#include "tubeflow/surrogate/pipeline.hpp"
#include "tubeflow/surrogate/report.hpp"
#include "tubeflow/surrogate/rollout.hpp"
#include "tubeflow/surrogate/train.hpp"

using namespace tubeflow;
using namespace tubeflow::surrogate;

namespace {

Trajectory counting_trajectory(std::size_t T, std::size_t n) {
  Trajectory t;
  t.dt = 1e-3;
  t.grid = build_grid(1.0, n);
  for (std::size_t s = 0; s < T; ++s) {
    FieldState st(n);
    for (std::size_t i = 0; i < n; ++i) {
      st.pressure[i] = 1000.0 * static_cast<double>(s) + static_cast<double>(i);
      st.velocity[i] = 0.1 * static_cast<double>(s) - 0.01 * static_cast<double>(i);
      st.area[i] = 1e-4 * (1.0 + 0.01 * static_cast<double>(s) + 0.001 * static_cast<double>(i));
    }
    t.states.push_back(st);
  }
  return t;
}

SimulationConfig small_simulation(std::size_t steps = 30) {
  SimulationConfig sim;
  sim.grid = build_grid(0.05, 8);
  sim.steps = steps;
  return sim;
}

TrainConfig small_training() {
  TrainConfig cfg;
  cfg.history = 3;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.fluid_architecture = "conv1d:2:3,leaky_relu,lstm:6,dense";
  cfg.solid_architecture = "conv1d:2:3,leaky_relu,lstm:6,dense";
  return cfg;
}

std::vector<double> flat(const nn::Network& net) {
  std::vector<double> out;
  for (nn::Parameter* p : const_cast<nn::Network&>(net).parameters())
    out.insert(out.end(), p->value.storage().begin(), p->value.storage().end());
  return out;
}

}  // namespace

TEST(Windows, Counts) {
  EXPECT_EQ(build_windows(counting_trajectory(11, 4), 10).size(), 1u);
  EXPECT_EQ(build_windows(counting_trajectory(12, 4), 10).size(), 2u);
  EXPECT_THROW(build_windows(counting_trajectory(10, 4), 10), InsufficientData);
  EXPECT_THROW(build_windows(counting_trajectory(5, 4), 10), InsufficientData);
}

TEST(Windows, SingleSampleUsesFirstTenStates) {
  const Trajectory t = counting_trajectory(11, 4);
  const auto w = build_windows(t, 10);
  EXPECT_EQ(w[0].first_state, 0u);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(w[0].fluid_input(k, 0), t.states[k].pressure[0]);
  EXPECT_EQ(w[0].solid_target, t.states[10].area);
}

TEST(Windows, InputAndTargetAlignWithSource) {
  const std::size_t n = 5, H = 4;
  const Trajectory t = counting_trajectory(20, n);
  const auto w = build_windows(t, H);
  for (const auto& s : w) {
    const std::size_t j = s.first_state;
    for (std::size_t k = 0; k < H; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        // Each fluid row carries (p, v) of its own level and the area of the
        // level after it; each solid row the area of its level and the
        // pressure of the next.
        EXPECT_EQ(s.fluid_input(k, i), t.states[j + k].pressure[i]);
        EXPECT_EQ(s.fluid_input(k, n + i), t.states[j + k].velocity[i]);
        EXPECT_EQ(s.fluid_input(k, 2 * n + i), t.states[j + k + 1].area[i]);
        EXPECT_EQ(s.solid_input(k, i), t.states[j + k].area[i]);
        EXPECT_EQ(s.solid_input(k, n + i), t.states[j + k + 1].pressure[i]);
      }
    // The last input row and the target together reconstruct levels j+H-1 and j+H.
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(s.fluid_input(H - 1, i), t.states[j + H - 1].pressure[i]);
      EXPECT_EQ(s.solid_input(H - 1, i), t.states[j + H - 1].area[i]);
      EXPECT_EQ(s.fluid_target[i], t.states[j + H].pressure[i]);
      EXPECT_EQ(s.fluid_target[n + i], t.states[j + H].velocity[i]);
      EXPECT_EQ(s.solid_target[i], t.states[j + H].area[i]);
    }
  }
}

TEST(NormStats, ConstantChannelGuarded) {
  std::vector<FieldState> states(3, FieldState(4));
  for (auto& s : states) {
    std::fill(s.pressure.begin(), s.pressure.end(), 7.0);
    std::fill(s.area.begin(), s.area.end(), 1e-4);
  }
  states[1].velocity[2] = 1.0;
  const NormStats st = fit_norm_stats(states);
  EXPECT_EQ(st.mean[kPressure], 7.0);
  EXPECT_EQ(st.std[kPressure], 1.0);
  EXPECT_EQ(st.normalize(7.0, kPressure), 0.0);
  EXPECT_NE(st.std[kVelocity], 1.0);
  EXPECT_THROW(fit_norm_stats(std::span<const FieldState>{}), InsufficientData);
}

TEST(NormStats, ConstructedMoments) {
  // Values 5 +- 2 in equal numbers: mean 5, population std 2.
  std::vector<FieldState> states(2, FieldState(6));
  for (std::size_t i = 0; i < 6; ++i) {
    states[0].pressure[i] = 3.0;
    states[1].pressure[i] = 7.0;
    states[0].area[i] = states[1].area[i] = 1.0;
  }
  const NormStats st = fit_norm_stats(states);
  EXPECT_DOUBLE_EQ(st.mean[kPressure], 5.0);
  EXPECT_DOUBLE_EQ(st.std[kPressure], 2.0);
  double m = 0.0, v = 0.0;
  for (const auto& s : states)
    for (double x : s.pressure) m += st.normalize(x, kPressure) / 12.0;
  for (const auto& s : states)
    for (double x : s.pressure) v += std::pow(st.normalize(x, kPressure) - m, 2) / 12.0;
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(v), 1.0, 1e-12);
}

TEST(NormStats, RoundTripWithinOneUlp) {
  // Random fields at the scales of the benchmark, normalized with their own statistics.
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd;
  std::vector<FieldState> states(20, FieldState(50));
  for (auto& s : states)
    for (std::size_t i = 0; i < 50; ++i) {
      s.pressure[i] = 1333.0 + 800.0 * nd(gen);
      s.velocity[i] = 0.3 + 0.2 * nd(gen);
      s.area[i] = 7.9e-5 * (1.0 + 0.02 * nd(gen));
    }
  const NormStats st = fit_norm_stats(states);
  for (const auto& s : states)
    for (std::size_t i = 0; i < 50; ++i)
      for (auto [c, x] : {std::pair{kPressure, s.pressure[i]}, {kVelocity, s.velocity[i]}, {kArea, s.area[i]}}) {
        const double back = st.denormalize(st.normalize(x, c), c);
        const double scale = std::max(std::abs(x), std::abs(st.mean[c]));
        EXPECT_LE(std::abs(back - x), std::nextafter(scale, 2 * scale) - scale) << x;
      }
}

TEST(NormStats, NoValidationLeakage) {
  const Trajectory t = counting_trajectory(40, 3);
  const std::size_t H = 5;
  const auto w = build_windows(t, H);
  const std::size_t n_train = training_sample_count(w.size(), 0.8);
  EXPECT_EQ(n_train, 28u);
  const NormStats st = fit_norm_stats(t, std::span(w.data(), n_train), H);
  // Training windows touch states 0 .. (n_train - 1) + H.
  const NormStats direct = fit_norm_stats(std::span(t.states.data(), n_train + H));
  EXPECT_EQ(st, direct);
  const NormStats all = fit_norm_stats(t.states);
  EXPECT_NE(st.mean[kPressure], all.mean[kPressure]);
}

TEST(Architecture, DefaultParses) {
  const auto specs = build_architecture(kDefaultArchitecture, 3, 100, 200, 0.1);
  ASSERT_EQ(specs.size(), 9u);
  EXPECT_EQ(std::get<nn::Conv1dSpec>(specs[0]), (nn::Conv1dSpec{3, 8, 3}));
  EXPECT_EQ(std::get<nn::LstmSpec>(specs[4]), (nn::LstmSpec{800, 32}));
  EXPECT_EQ(std::get<nn::DropoutSpec>(specs[5]).rate, 0.1);
  EXPECT_EQ(std::get<nn::DenseSpec>(specs[8]), (nn::DenseSpec{64, 200}));
}

TEST(Architecture, Rejected) {
  EXPECT_THROW(build_architecture("conv1d:8", 3, 10, 20, 0.0), InvalidArgument);
  EXPECT_THROW(build_architecture("lstm:4,conv1d:2:3,dense", 3, 10, 20, 0.0), InvalidArgument);
  EXPECT_THROW(build_architecture("lstm:4,dense:5", 3, 10, 20, 0.0), InvalidArgument);
  EXPECT_THROW(build_architecture("gru:4,dense", 3, 10, 20, 0.0), InvalidArgument);
  EXPECT_THROW(build_architecture("lstm:x,dense", 3, 10, 20, 0.0), InvalidArgument);
}

TEST(Training, ZeroEpochsKeepsInitialization) {
  const Trajectory data = simulate(small_simulation()).trajectory;
  TrainConfig cfg = small_training();
  cfg.epochs = 0;
  const auto res = train_surrogates(data, cfg);
  EXPECT_TRUE(res.fluid_curve.empty());
  EXPECT_TRUE(res.solid_curve.empty());
  const auto specs = build_architecture(cfg.fluid_architecture, 3, 8, 16, cfg.dropout_rate);
  const nn::Network fresh(specs, 24, nn::derive_seed(cfg.seed, 0));
  EXPECT_EQ(flat(res.models.fluid), flat(fresh));
}

TEST(Training, MemorizesSingleSample) {
  const Trajectory data = counting_trajectory(4, 4);
  const auto w = build_windows(data, 3);
  const NormStats st = fit_norm_stats(data.states);
  const Dataset ds = fluid_dataset(std::span(w.data(), 1), st);
  TrainConfig cfg;
  cfg.epochs = 5000;
  cfg.batch_size = 1;
  cfg.final_lr_fraction = 1.0;
  const auto specs = build_architecture(kDefaultArchitecture, 3, 4, 8, 0.0);
  const auto res = train_network(specs, 12, ds, ds, cfg);
  EXPECT_LT(res.curve.back().train, 1e-6);
  EXPECT_LE(res.curve.back().train, res.curve.front().train);
}

TEST(Training, SameSeedSameParameters) {
  const SimulationConfig sim = small_simulation();
  const Trajectory data = simulate(sim).trajectory;
  TrainConfig cfg = small_training();
  cfg.dropout_rate = 0.2;
  cfg.fluid_architecture = "conv1d:2:3,leaky_relu,lstm:6,dropout,dense";
  const auto a = train_surrogates(data, cfg, &sim);
  const auto b = train_surrogates(data, cfg, &sim);
  EXPECT_EQ(flat(a.models.fluid), flat(b.models.fluid));
  EXPECT_EQ(flat(a.models.solid), flat(b.models.solid));
  ASSERT_EQ(a.fluid_curve.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.fluid_curve[k].train, b.fluid_curve[k].train);
  // Worker threads only change who computes each per-sample gradient.
  cfg.threads = 3;
  const auto c = train_surrogates(data, cfg, &sim);
  EXPECT_EQ(flat(a.models.fluid), flat(c.models.fluid));
  cfg.threads = 1;
  cfg.seed = 43;
  const auto d = train_surrogates(data, cfg, &sim);
  EXPECT_NE(flat(a.models.fluid), flat(d.models.fluid));
}

TEST(Training, InterfaceSamplesFollowThePhysics) {
  const SimulationConfig sim = small_simulation(12);
  const Trajectory data = simulate(sim).trajectory;
  const auto w = build_windows(data, 3);
  const std::vector<double> offsets{0.0};
  const auto extra = interface_samples(data, std::span(w.data(), 2), 3, offsets, sim);
  ASSERT_EQ(extra.size(), 2u);
  // Offset 0 re-solves the converged level, so the targets reproduce it up
  // to the coupling tolerance (the stored area is the last accepted iterate).
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_NEAR(extra[k].solid_target[i], w[k].solid_target[i], 10 * sim.coupling.tol * w[k].solid_target[i]);
      EXPECT_NEAR(extra[k].fluid_target[i], w[k].fluid_target[i], 1e-6 * std::abs(w[k].fluid_target[i]) + 1e-6);
    }
  }
  SimulationConfig other = sim;
  other.dt = 2e-3;
  EXPECT_THROW(interface_samples(data, w, 3, offsets, other), InvalidArgument);
}

TEST(Training, DivergenceNamesEpoch) {
  Dataset ds;
  ds.inputs.push_back(nn::Tensor({2, 2}, 1.0));
  ds.targets.push_back({1e200});
  TrainConfig cfg;
  cfg.epochs = 2;
  try {
    train_network({nn::DenseSpec{2, 1}}, 2, ds, ds, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 1u);
  }
}

TEST(Training, TooFewStatesIsInsufficientData) {
  TrainConfig cfg = small_training();
  cfg.history = 10;
  EXPECT_THROW(train_surrogates(counting_trajectory(5, 4), cfg), InsufficientData);
}

TEST(LearningRate, CosineSchedule) {
  TrainConfig cfg;
  cfg.epochs = 11;
  cfg.learning_rate = 1e-3;
  cfg.final_lr_fraction = 0.1;
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 1), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 11), 1e-4);
  EXPECT_NEAR(learning_rate_at(cfg, 6), 0.55e-3, 1e-15);
  for (std::size_t e = 2; e <= 11; ++e) EXPECT_LT(learning_rate_at(cfg, e), learning_rate_at(cfg, e - 1));
}

TEST(Rollout, ZeroStepsReturnsSeed) {
  const SimulationConfig sim = small_simulation(10);
  const Trajectory ref = simulate(sim).trajectory;
  FluidParticipant fluid(sim.grid, sim.fluid, sim.solver);
  StructureParticipant solid(sim.grid.n_points, sim.tube);
  const auto res = coupled_rollout(fluid, solid, ref, 0, sim.coupling);
  EXPECT_EQ(res.trajectory, ref);
  EXPECT_TRUE(res.iterations.empty());
}

TEST(Rollout, ClassicalParticipantsReproduceReference) {
  SimulationConfig sim;
  sim.steps = 40;
  const auto classical = simulate(sim);
  const Trajectory& ref = classical.trajectory;
  const std::size_t H = 10;
  Trajectory seed{ref.dt, ref.grid, {ref.states.begin(), ref.states.begin() + H}};
  FluidParticipant fluid(sim.grid, sim.fluid, sim.solver);
  StructureParticipant solid(sim.grid.n_points, sim.tube);
  const auto res = coupled_rollout(fluid, solid, seed, ref.states.size() - H, sim.coupling);
  ASSERT_EQ(res.trajectory.states.size(), ref.states.size());
  const auto rep = error_report(res.trajectory, ref, H, res.iterations);
  for (const auto& e : rep.steps) {
    EXPECT_LE(e.area, 10 * sim.coupling.tol) << "step " << e.step;
    EXPECT_LE(e.pressure, 10 * sim.coupling.tol) << "step " << e.step;
    EXPECT_LE(e.velocity, 10 * sim.coupling.tol) << "step " << e.step;
  }
}

TEST(Rollout, TrainedModelsRoundTripThroughDisk) {
  const SimulationConfig sim = small_simulation(20);
  const Trajectory data = simulate(sim).trajectory;
  auto trained = train_surrogates(data, small_training(), &sim);
  const auto dir = std::filesystem::temp_directory_path() / "tubeflow_models_roundtrip";
  std::filesystem::remove_all(dir);
  save_models(trained.models, dir);
  const SurrogateModels back = load_models(dir);
  EXPECT_EQ(back.stats, trained.models.stats);
  EXPECT_EQ(back.history, 3u);
  EXPECT_EQ(flat(back.fluid), flat(trained.models.fluid));
  const auto a = surrogate_rollout(trained.models, data, 5, sim.coupling, CouplingScheme::explicit_);
  const auto b = surrogate_rollout(back, data, 5, sim.coupling, CouplingScheme::explicit_);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(a.trajectory.states.size(), 8u);
  std::filesystem::remove(dir / kSolidSpec);
  EXPECT_THROW(load_models(dir), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST(Rollout, FailureCarriesPartialTrajectory) {
  // A solid side that rejects its input after two windows.
  class Failing : public coupling::Participant {
   public:
    std::size_t interface_size() const override { return 8; }
    std::vector<double> solve(std::span<const double> p, const coupling::WindowContext& w) override {
      if (w.index >= 5) throw NumericalError("wall failure");
      return structure::solve_structure(p, TubeParams{}).area;
    }
  };
  const SimulationConfig sim = small_simulation(3);
  const Trajectory ref = simulate(sim).trajectory;
  FluidParticipant fluid(sim.grid, sim.fluid, sim.solver);
  Failing solid;
  try {
    coupled_rollout(fluid, solid, ref, 10, sim.coupling);
    FAIL() << "expected RolloutError";
  } catch (const RolloutError& e) {
    EXPECT_EQ(e.step(), 5u);
    EXPECT_EQ(e.partial().states.size(), 5u);
  }
}

TEST(Report, IdenticalAndScaled) {
  const Trajectory ref = counting_trajectory(15, 6);
  const auto same = error_report(ref, ref, 3);
  ASSERT_EQ(same.steps.size(), 12u);
  for (const auto& e : same.steps) EXPECT_EQ(e.pressure + e.velocity + e.area, 0.0);
  Trajectory scaled = ref;
  for (auto& s : scaled.states)
    for (double& p : s.pressure) p *= 1.01;
  for (const auto& e : error_report(scaled, ref, 1).steps) {
    EXPECT_NEAR(e.pressure, 0.01, 1e-12);
    EXPECT_EQ(e.area, 0.0);
  }
}

TEST(Report, CheckpointSteps) {
  const double dt = 1e-3;
  const std::vector<double> times{0.052, 0.100, 0.14, 0.192};
  const std::vector<std::size_t> steps{52, 100, 140, 192};
  for (std::size_t k = 0; k < times.size(); ++k) EXPECT_EQ(step_for_time(times[k], dt), steps[k]);
  const Trajectory ref = counting_trajectory(201, 3);
  const auto rep = error_report(ref, ref, 10);
  EXPECT_EQ(error_at_time(rep, 0.14, dt).step, 140u);
  EXPECT_DOUBLE_EQ(error_at_time(rep, 0.14, dt).t, 0.14);
  EXPECT_THROW(error_at_time(rep, 0.005, dt), InvalidArgument);
}

TEST(Report, MismatchRejected) {
  const Trajectory ref = counting_trajectory(10, 4);
  Trajectory other = counting_trajectory(10, 5);
  EXPECT_THROW(error_report(other, ref, 0), InvalidArgument);
  other = ref;
  other.dt = 2e-3;
  EXPECT_THROW(error_report(other, ref, 0), InvalidArgument);
  EXPECT_THROW(error_report(counting_trajectory(12, 4), ref, 0), InvalidArgument);
}

TEST(Report, CsvHeaderAndRows) {
  const Trajectory ref = counting_trajectory(5, 3);
  std::vector<int> its{4, 5};
  std::stringstream ss;
  write_report(error_report(ref, ref, 3, its), ss);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "step,t,err_p,err_v,err_a,coupling_iters");
  std::getline(ss, line);
  EXPECT_EQ(line.substr(0, 2), "3,");
  EXPECT_EQ(line.back(), '4');
}

TEST(Report, MovingAverage) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_EQ(moving_average(v, 2), (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
  EXPECT_EQ(full_moving_average(v, 3), (std::vector<double>{2, 3, 4}));
  EXPECT_TRUE(is_non_decreasing(v));
  EXPECT_FALSE(is_non_decreasing(std::vector<double>{1, 3, 2}));
}
