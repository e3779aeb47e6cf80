#pragma once

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tubeflow/app/commands.hpp"
#include "tubeflow/app/config.hpp"
#include "tubeflow/surrogate/rollout.hpp"

namespace tubeflow::app {

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App cli{"Partitioned 1D tube flow simulation with subdomain network surrogates", "tubeflow"};
  cli.require_subcommand(1);

  std::string config_path, out_path, models_dir, reference_path, predicted_path;
  bool explicit_flag = false, inject_bug = false;
  std::optional<std::uint64_t> seed;

  auto* sim = cli.add_subcommand("simulate", "run the classical coupled simulation and write a trajectory CSV");
  sim->add_option("--out", out_path, "trajectory CSV to write")->required();

  auto* train = cli.add_subcommand("train", "train the fluid and solid networks on a trajectory");
  train->add_option("--data,--reference", reference_path, "training trajectory CSV")->required();
  train->add_option("--out", out_path, "model directory")->required();
  train->add_option("--seed", seed, "override [training] seed");

  auto* roll = cli.add_subcommand("rollout", "coupled network rollout against a reference trajectory");
  roll->add_option("--models", models_dir, "model directory")->required();
  roll->add_option("--reference", reference_path, "reference trajectory CSV")->required();
  roll->add_option("--out", out_path, "output directory")->required();
  roll->add_flag("--explicit", explicit_flag, "single fluid/solid pass per step instead of implicit coupling");

  auto* eval = cli.add_subcommand("evaluate", "error report of a predicted trajectory");
  eval->add_option("--predicted", predicted_path, "predicted trajectory CSV")->required();
  eval->add_option("--reference", reference_path, "reference trajectory CSV")->required();
  eval->add_option("--out", out_path, "output directory")->required();

  auto* verify = cli.add_subcommand("verify", "gradient, structure, fluid and coupling self-checks");
  verify->add_flag("--inject-gradient-bug", inject_bug, "corrupt one backprop gradient (the check must fail)");

  for (auto* sub : {sim, train, roll, eval, verify})
    sub->add_option("--config", config_path, "INI configuration (defaults if omitted)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
    if (seed) cfg.training.seed = *seed;
    if (cfg.rollout.explicit_coupling) explicit_flag = true;

    if (*sim) {
      cmd_simulate(cfg, out_path, out);
    } else if (*train) {
      cmd_train(cfg, reference_path, out_path, out);
    } else if (*roll) {
      cmd_rollout(cfg, models_dir, reference_path, out_path, explicit_flag, out);
    } else if (*eval) {
      cmd_evaluate(cfg, predicted_path, reference_path, out_path, out);
    } else if (*verify) {
      VerifyOptions opt;
      opt.inject_gradient_bug = inject_bug;
      if (!cmd_verify(cfg, opt, out)) {
        err << "error: verification failed\n";
        return kExitFailure;
      }
    }
    return kExitOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InsufficientData& e) {
    err << "error: insufficient data: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace tubeflow::app
