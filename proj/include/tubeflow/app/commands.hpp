#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "tubeflow/app/checks.hpp"
#include "tubeflow/app/config.hpp"
#include "tubeflow/simulation.hpp"
#include "tubeflow/surrogate/pipeline.hpp"
#include "tubeflow/surrogate/report.hpp"
#include "tubeflow/surrogate/rollout.hpp"
#include "tubeflow/trajectory_io.hpp"

namespace tubeflow::app {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // numerical failure or a failed check
inline constexpr int kExitUsage = 2;    // bad arguments, missing or malformed input

/// Missing or unreadable input file.
class InputError : public Error {
 public:
  using Error::Error;
};

inline void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) throw InputError("missing file: " + p.string());
}

inline std::string fmt(double v, const char* spec = "%.6e") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline SimulationResult cmd_simulate(const AppConfig& cfg, const std::string& out_path, std::ostream& log) {
  SimulationResult res = simulate(cfg.simulation);
  for (std::size_t k = 0; k < res.iterations.size(); ++k)
    log << "window " << k + 1 << ": " << res.iterations[k] << " coupling iterations\n";
  write_trajectory(res.trajectory, out_path);
  log << "wrote " << res.trajectory.states.size() << " states to " << out_path << '\n';
  return res;
}

/// Worker count for training, from TUBEFLOW_THREADS (default 1).
inline std::size_t threads_from_env() {
  const char* env = std::getenv("TUBEFLOW_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw InvalidArgument(std::string("TUBEFLOW_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<std::size_t>(v);
}

struct TrainSummary {
  double fluid_loss = 0.0;
  double solid_loss = 0.0;
  bool below_threshold = false;
};

inline TrainSummary cmd_train(const AppConfig& cfg, const std::string& dataset_path, const std::string& out_dir,
                              std::ostream& log) {
  require_file(dataset_path);
  const Trajectory data = read_trajectory(dataset_path);
  surrogate::TrainConfig tc = cfg.training;
  tc.threads = threads_from_env();
  auto result = surrogate::train_surrogates(data, tc, &cfg.simulation, [&log](const surrogate::TrainProgress& p) {
    log << p.network << " epoch " << p.loss.epoch << ": train " << fmt(p.loss.train) << " validation "
        << fmt(p.loss.validation) << '\n';
  });
  const std::filesystem::path dir(out_dir);
  surrogate::save_models(result.models, dir);
  surrogate::write_loss_curve(result.fluid_curve, (dir / "fluid_loss.csv").string());
  surrogate::write_loss_curve(result.solid_curve, (dir / "solid_loss.csv").string());

  TrainSummary s;
  s.fluid_loss = result.fluid_curve.empty() ? 0.0 : result.fluid_curve.back().train;
  s.solid_loss = result.solid_curve.empty() ? 0.0 : result.solid_curve.back().train;
  s.below_threshold = s.fluid_loss < cfg.loss_threshold && s.solid_loss < cfg.loss_threshold;
  log << "training samples " << result.train_samples << ", validation samples " << result.validation_samples << '\n'
      << "final training loss: fluid " << fmt(s.fluid_loss) << ", solid " << fmt(s.solid_loss) << " (threshold "
      << fmt(cfg.loss_threshold, "%g") << (s.below_threshold ? ", met" : ", NOT met") << ")\n"
      << "models written to " << out_dir << '\n';
  return s;
}

inline void write_checkpoints(const surrogate::RolloutReport& rep, std::span<const double> times, double dt,
                              const std::string& path, std::ostream& log) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out << "requested_t,step,t,err_p,err_v,err_a\n";
  for (double t : times) {
    const auto& e = surrogate::error_at_time(rep, t, dt);
    out << tubeflow::detail::format_double(t) << ',' << e.step << ',' << tubeflow::detail::format_double(e.t) << ','
        << tubeflow::detail::format_double(e.pressure) << ',' << tubeflow::detail::format_double(e.velocity) << ','
        << tubeflow::detail::format_double(e.area) << '\n';
    log << "t = " << fmt(e.t, "%.3f") << " (step " << e.step << "): err_p " << fmt(e.pressure, "%.4e") << ", err_v "
        << fmt(e.velocity, "%.4e") << ", err_a " << fmt(e.area, "%.4e") << '\n';
  }
}

/// Checkpoint times that fall inside the report; others are skipped with a note.
inline std::vector<double> reportable_times(const surrogate::RolloutReport& rep, std::span<const double> times,
                                            double dt, std::ostream& log) {
  std::vector<double> out;
  for (double t : times) {
    const std::size_t step = surrogate::step_for_time(t, dt);
    const bool present = std::any_of(rep.steps.begin(), rep.steps.end(), [&](const auto& e) { return e.step == step; });
    if (present)
      out.push_back(t);
    else
      log << "checkpoint t = " << t << " (step " << step << ") is outside the predicted range\n";
  }
  return out;
}

struct RolloutSummary {
  surrogate::RolloutReport report;
  bool completed = true;
};

inline RolloutSummary cmd_rollout(const AppConfig& cfg, const std::string& models_dir, const std::string& reference_path,
                                  const std::string& out_dir, bool explicit_coupling, std::ostream& log) {
  const std::filesystem::path mdir(models_dir);
  for (const char* f : {surrogate::kFluidCheckpoint, surrogate::kFluidSpec, surrogate::kSolidCheckpoint,
                        surrogate::kSolidSpec, surrogate::kNormStats})
    require_file(mdir / f);
  require_file(reference_path);
  const surrogate::SurrogateModels models = surrogate::load_models(mdir);
  const Trajectory reference = read_trajectory(reference_path);
  if (reference.states.size() <= models.history)
    throw InsufficientData("reference has " + std::to_string(reference.states.size()) + " states; history is " +
                           std::to_string(models.history));

  const auto scheme = explicit_coupling ? surrogate::CouplingScheme::explicit_ : surrogate::CouplingScheme::implicit;
  const std::size_t n_steps = reference.states.size() - models.history;
  const std::filesystem::path odir(out_dir);
  std::filesystem::create_directories(odir);

  RolloutSummary summary;
  surrogate::RolloutResult result;
  std::string failure;
  try {
    result = surrogate::surrogate_rollout(models, reference, n_steps, cfg.simulation.coupling, scheme);
  } catch (const surrogate::RolloutError& e) {
    result.trajectory = e.partial();
    result.first_predicted = models.history;
    failure = e.what();
    summary.completed = false;
  }
  summary.report = surrogate::error_report(result.trajectory, reference, result.first_predicted, result.iterations);
  write_trajectory(result.trajectory, (odir / "predicted.csv").string());
  surrogate::write_report(summary.report, (odir / "report.csv").string());
  const auto times = reportable_times(summary.report, cfg.rollout.checkpoints, reference.dt, log);
  write_checkpoints(summary.report, times, reference.dt, (odir / "checkpoints.csv").string(), log);
  log << (explicit_coupling ? "explicit" : "implicit") << " rollout: " << summary.report.steps.size()
      << " predicted steps written to " << out_dir << '\n';
  if (!summary.completed) throw NumericalError(failure + " (partial results written to " + out_dir + ")");
  return summary;
}

inline surrogate::RolloutReport cmd_evaluate(const AppConfig& cfg, const std::string& predicted_path,
                                             const std::string& reference_path, const std::string& out_dir,
                                             std::ostream& log) {
  require_file(predicted_path);
  require_file(reference_path);
  const Trajectory predicted = read_trajectory(predicted_path);
  const Trajectory reference = read_trajectory(reference_path);
  const std::size_t first = std::min(cfg.training.history, predicted.states.size());
  auto rep = surrogate::error_report(predicted, reference, first);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path odir(out_dir);
  surrogate::write_report(rep, (odir / "report.csv").string());
  const auto times = reportable_times(rep, cfg.rollout.checkpoints, reference.dt, log);
  write_checkpoints(rep, times, reference.dt, (odir / "checkpoints.csv").string(), log);
  return rep;
}

inline bool cmd_verify(const AppConfig& cfg, const VerifyOptions& opt, std::ostream& log) {
  bool ok = true;
  for (const auto& c : run_checks(cfg.simulation, cfg.training, opt)) {
    log << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.passed;
  }
  return ok;
}

}  // namespace tubeflow::app
