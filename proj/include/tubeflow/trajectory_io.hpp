#pragma once

// Trajectory CSV: long format, one row per (t, x) node sample.
//
//   # tubeflow dt=<dt> length=<length> n_points=<n>
//   t,x,pressure,velocity,area
//   0,0,1333,0.10000000000000001,7.8539816339744827e-05
//
// The leading comment line is optional on read; without it dt is taken from
// the second time level and the grid from the node coordinates. Numbers are
// written with 17 significant digits so a round trip is bit-exact.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tubeflow/domain.hpp"
#include "tubeflow/errors.hpp"

namespace tubeflow {

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

inline constexpr std::string_view kTrajectoryHeader = "t,x,pressure,velocity,area";

inline void write_trajectory(const Trajectory& traj, std::ostream& out) {
  if (traj.states.empty()) throw InvalidArgument("cannot write an empty trajectory");
  const std::size_t n = traj.grid.n_points;
  out << "# tubeflow dt=" << detail::format_double(traj.dt)
      << " length=" << detail::format_double(traj.grid.length) << " n_points=" << n << '\n';
  out << kTrajectoryHeader << '\n';
  std::string row;
  for (std::size_t s = 0; s < traj.states.size(); ++s) {
    const FieldState& st = traj.states[s];
    if (st.size() != n) throw InvalidArgument("state " + std::to_string(s) + " does not match grid");
    const std::string t = detail::format_double(traj.time(s));
    for (std::size_t i = 0; i < n; ++i) {
      row.clear();
      row += t;
      row += ',';
      row += detail::format_double(traj.grid.x(i));
      row += ',';
      row += detail::format_double(st.pressure[i]);
      row += ',';
      row += detail::format_double(st.velocity[i]);
      row += ',';
      row += detail::format_double(st.area[i]);
      row += '\n';
      out << row;
    }
  }
}

inline void write_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_trajectory(traj, out);
  if (!out) throw Error("write failed: " + path);
}

inline Trajectory read_trajectory(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<double> meta_dt, meta_length;
  std::optional<std::size_t> meta_n;

  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        auto key = tok.substr(0, eq);
        auto val = std::string_view(tok).substr(eq + 1);
        if (key == "dt") meta_dt = detail::parse_double(val);
        else if (key == "length") meta_length = detail::parse_double(val);
        else if (key == "n_points") {
          if (auto v = detail::parse_double(val); v && *v >= 2) meta_n = static_cast<std::size_t>(*v);
        }
      }
      continue;
    }
    if (line != kTrajectoryHeader)
      throw ParseError("expected header '" + std::string(kTrajectoryHeader) + "'", lineno);
    have_header = true;
    break;
  }
  if (!have_header) throw ParseError("missing header", lineno);

  std::vector<double> times;
  std::vector<double> xs;  // node coordinates of the first block
  std::vector<FieldState> states;
  std::size_t block_nodes = 0;  // nodes per block, fixed once block 0 completes
  std::size_t node_in_block = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = detail::split(line, ',');
    if (cols.size() != 5) throw ParseError("expected 5 columns, got " + std::to_string(cols.size()), lineno);
    double v[5];
    for (int c = 0; c < 5; ++c) {
      auto parsed = detail::parse_double(cols[c]);
      if (!parsed) throw ParseError("malformed number '" + std::string(cols[c]) + "'", lineno);
      v[c] = *parsed;
    }
    const double t = v[0], x = v[1];

    if (times.empty() || t != times.back()) {
      if (!times.empty()) {
        if (!(t > times.back())) throw ParseError("non-monotone time", lineno);
        if (states.size() == 1) block_nodes = node_in_block;
        else if (node_in_block != block_nodes)
          throw ParseError("inconsistent node count: block has " + std::to_string(node_in_block) +
                               " nodes, expected " + std::to_string(block_nodes),
                           lineno - 1);
      }
      times.push_back(t);
      states.emplace_back();
      node_in_block = 0;
    }
    FieldState& st = states.back();
    if (states.size() == 1) {
      if (!xs.empty() && !(x > xs.back())) throw ParseError("non-monotone x within time level", lineno);
      xs.push_back(x);
    } else {
      if (node_in_block >= block_nodes)
        throw ParseError("inconsistent node count: more than " + std::to_string(block_nodes) + " nodes", lineno);
      if (x != xs[node_in_block]) throw ParseError("node coordinate differs from first time level", lineno);
    }
    st.pressure.push_back(v[2]);
    st.velocity.push_back(v[3]);
    st.area.push_back(v[4]);
    ++node_in_block;
  }
  if (states.empty()) throw ParseError("no data rows", lineno);
  if (states.size() == 1) block_nodes = node_in_block;
  if (node_in_block != block_nodes)
    throw ParseError("inconsistent node count in final block: " + std::to_string(node_in_block) +
                         " nodes, expected " + std::to_string(block_nodes),
                     lineno);
  if (block_nodes < 2) throw ParseError("a time level needs at least 2 nodes", lineno);
  if (meta_n && *meta_n != block_nodes) throw ParseError("n_points metadata disagrees with data", lineno);

  Trajectory traj;
  if (meta_dt) traj.dt = *meta_dt;
  else if (times.size() >= 2) traj.dt = times[1] - times[0];
  else throw ParseError("cannot infer dt from a single time level without metadata", lineno);
  if (!(traj.dt > 0.0)) throw ParseError("dt must be positive", lineno);

  if (meta_length) traj.grid = build_grid(*meta_length, block_nodes);
  else traj.grid = Grid1D{xs.back() - xs.front(), block_nodes, xs[1] - xs[0]};
  traj.states = std::move(states);
  return traj;
}

inline Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_trajectory(in);
}

}  // namespace tubeflow
