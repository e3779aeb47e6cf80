#pragma once

// INI configuration for the command-line workflows. Every key is optional
// and falls back to the library default; unknown sections and keys are
// rejected.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tubeflow/errors.hpp"
#include "tubeflow/simulation.hpp"
#include "tubeflow/surrogate/train.hpp"

namespace tubeflow::app {

struct RolloutSettings {
  std::vector<double> checkpoints{0.052, 0.100, 0.14, 0.192};
  bool explicit_coupling = false;
};

struct AppConfig {
  SimulationConfig simulation;
  surrogate::TrainConfig training;
  double loss_threshold = 1e-3;  // reported against the final training losses
  RolloutSettings rollout;

  void validate() const {
    simulation.validate();
    training.validate();
    if (!(loss_threshold > 0.0)) throw InvalidArgument("loss_threshold must be positive");
  }
};

namespace detail {

inline std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& raw) {
  const std::string s = trimmed(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(key + ": expected a number, got '" + s + "'", 0);
  return v;
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& raw) {
  const std::string s = trimmed(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(key + ": expected a non-negative integer, got '" + s + "'", 0);
  return v;
}

inline bool to_bool(const std::string& key, const std::string& raw) {
  const std::string s = trimmed(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ParseError(key + ": expected a boolean, got '" + s + "'", 0);
}

inline std::vector<double> to_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  const std::string s = trimmed(raw);
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, item));
  return out;
}

}  // namespace detail

/// Parses INI text into a configuration on top of the defaults.
inline AppConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }

  AppConfig cfg;
  auto& sim = cfg.simulation;
  auto& tr = cfg.training;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::to_double(k, v); };
  };
  auto count = [](std::size_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::to_unsigned(k, v); };
  };
  auto integer = [](int& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) {
      field = static_cast<int>(detail::to_unsigned(k, v));
    };
  };
  auto flag = [](bool& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::to_bool(k, v); };
  };
  auto text = [](std::string& field) -> Setter {
    return [&field](const std::string&, const std::string& v) { field = detail::trimmed(v); };
  };
  auto list = [](std::vector<double>& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::to_list(k, v); };
  };

  double length = sim.grid.length;
  std::size_t n_points = sim.grid.n_points;

  const std::map<std::string, std::map<std::string, Setter>> schema{
      {"grid",
       {{"length", num(length)}, {"n_points", count(n_points)}, {"dt", num(sim.dt)}, {"steps", count(sim.steps)}}},
      {"tube",
       {{"r0", num(sim.tube.r0)},
        {"h", num(sim.tube.h)},
        {"elastic_modulus", num(sim.tube.elastic_modulus)},
        {"sigma0", num(sim.tube.sigma0)}}},
      {"fluid",
       {{"density", num(sim.fluid.density)},
        {"inlet_v0", num(sim.fluid.inlet_v0)},
        {"inlet_dv", num(sim.fluid.inlet_dv)},
        {"pulse_period", num(sim.fluid.pulse_period)},
        {"outlet_pressure", num(sim.fluid.outlet_pressure)},
        {"stabilization", flag(sim.solver.stabilization)},
        {"newton_tol", num(sim.solver.newton.tol)},
        {"newton_max_iters", integer(sim.solver.newton.max_iters)},
        {"fd_step", num(sim.solver.newton.fd_step)},
        {"jacobian",
         [&sim](const std::string& k, const std::string& v) {
           const std::string s = detail::trimmed(v);
           if (s == "analytic")
             sim.solver.newton.jacobian_mode = fluid::JacobianMode::analytic;
           else if (s == "finite_difference")
             sim.solver.newton.jacobian_mode = fluid::JacobianMode::finite_difference;
           else
             throw ParseError(k + ": expected analytic or finite_difference, got '" + s + "'", 0);
         }}}},
      {"coupling",
       {{"tol", num(sim.coupling.tol)},
        {"max_iters", integer(sim.coupling.max_iters)},
        {"omega0", num(sim.coupling.omega0)},
        {"max_columns", count(sim.coupling.max_columns)},
        {"filter_eps", num(sim.coupling.filter_eps)},
        {"reuse_windows", count(sim.coupling.reuse_windows)},
        {"accelerator",
         [&sim](const std::string& k, const std::string& v) {
           const std::string s = detail::trimmed(v);
           if (s == "iqn-ils" || s == "iqn_ils")
             sim.coupling.accelerator = coupling::AcceleratorKind::iqn_ils;
           else if (s == "constant")
             sim.coupling.accelerator = coupling::AcceleratorKind::constant_relaxation;
           else
             throw ParseError(k + ": expected iqn-ils or constant, got '" + s + "'", 0);
         }}}},
      {"training",
       {{"history", count(tr.history)},
        {"epochs", count(tr.epochs)},
        {"batch_size", count(tr.batch_size)},
        {"learning_rate", num(tr.learning_rate)},
        {"final_lr_fraction", num(tr.final_lr_fraction)},
        {"dropout_rate", num(tr.dropout_rate)},
        {"train_fraction", num(tr.train_fraction)},
        {"loss_delta", num(tr.loss_delta)},
        {"loss_threshold", num(cfg.loss_threshold)},
        {"seed",
         [&tr](const std::string& k, const std::string& v) { tr.seed = detail::to_unsigned(k, v); }},
        {"interface_offsets", list(tr.interface_offsets)},
        {"fluid_architecture", text(tr.fluid_architecture)},
        {"solid_architecture", text(tr.solid_architecture)}}},
      {"rollout", {{"checkpoints", list(cfg.rollout.checkpoints)}, {"explicit", flag(cfg.rollout.explicit_coupling)}}},
  };

  for (const auto& [section, entries] : tree) {
    const auto sec = schema.find(section);
    if (sec == schema.end()) {
      if (entries.empty() && !entries.data().empty())
        throw ParseError("key '" + section + "' outside of any section", 0);
      throw ParseError("unknown section [" + section + "]", 0);
    }
    for (const auto& [key, value] : entries) {
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) throw ParseError("unknown key '" + key + "' in [" + section + "]", 0);
      setter->second("[" + section + "] " + key, value.data());
    }
  }
  sim.grid = build_grid(length, n_points);
  cfg.validate();
  return cfg;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path);
  return parse_config(in);
}

}  // namespace tubeflow::app
