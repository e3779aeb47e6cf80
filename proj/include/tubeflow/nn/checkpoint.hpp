#pragma once

// Weight checkpoints.
//
// Binary layout: the 8-byte magic "FSINNET1", then for every parameter in
// network order:
//   u32 name length, name bytes (UTF-8), u32 rank, rank x u64 dims,
//   product(dims) x f64 values
// All integers and floats are little-endian.
//
// The layer sequence lives in a JSON sidecar (see spec_to_json).

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tubeflow/errors.hpp"
#include "tubeflow/nn/network.hpp"

namespace tubeflow::nn {

inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'I', 'N', 'N', 'E', 'T', '1'};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&value, bytes, sizeof(T));
  return true;
}

}  // namespace detail

inline nlohmann::json spec_to_json(const std::vector<LayerSpec>& specs, std::size_t input_features) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& spec : specs) {
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Conv1dSpec>)
            layers.push_back({{"type", "conv1d"},
                              {"in_channels", s.in_channels},
                              {"out_channels", s.out_channels},
                              {"kernel_size", s.kernel_size}});
          else if constexpr (std::is_same_v<S, LstmSpec>)
            layers.push_back({{"type", "lstm"}, {"input_size", s.input_size}, {"hidden_size", s.hidden_size}});
          else if constexpr (std::is_same_v<S, DenseSpec>)
            layers.push_back({{"type", "dense"}, {"in_features", s.in_features}, {"out_features", s.out_features}});
          else if constexpr (std::is_same_v<S, LeakyReluSpec>)
            layers.push_back({{"type", "leaky_relu"}, {"alpha", s.alpha}});
          else
            layers.push_back({{"type", "dropout"}, {"rate", s.rate}});
        },
        spec);
  }
  return {{"input_features", input_features}, {"layers", layers}};
}

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::size_t input_features = 0;
};

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec out;
  try {
    out.input_features = j.at("input_features").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      const std::string type = l.at("type").get<std::string>();
      if (type == "conv1d")
        out.layers.emplace_back(Conv1dSpec{l.at("in_channels").get<std::size_t>(), l.at("out_channels").get<std::size_t>(),
                                           l.at("kernel_size").get<std::size_t>()});
      else if (type == "lstm")
        out.layers.emplace_back(LstmSpec{l.at("input_size").get<std::size_t>(), l.at("hidden_size").get<std::size_t>()});
      else if (type == "dense")
        out.layers.emplace_back(DenseSpec{l.at("in_features").get<std::size_t>(), l.at("out_features").get<std::size_t>()});
      else if (type == "leaky_relu")
        out.layers.emplace_back(LeakyReluSpec{l.at("alpha").get<double>()});
      else if (type == "dropout")
        out.layers.emplace_back(DropoutSpec{l.at("rate").get<double>()});
      else
        throw CheckpointError("unknown layer type '" + type + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed network spec: ") + e.what());
  }
  return out;
}

inline void save_checkpoint(Network& net, std::ostream& out) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  for (Parameter* p : net.parameters()) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : p->value.storage()) detail::put_le<double>(out, v);
  }
}

/// Loads weights into a network built from `spec`; names and shapes must match.
inline Network load_checkpoint(std::istream& in, const NetworkSpec& spec) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw CheckpointError("bad magic: not a network checkpoint");
  Network net(spec.layers, spec.input_features, 0);
  for (Parameter* p : net.parameters()) {
    std::uint32_t len = 0, rank = 0;
    if (!detail::get_le(in, len)) throw CheckpointError("truncated checkpoint: missing parameter " + p->name);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CheckpointError("truncated checkpoint in name of parameter " + p->name);
    if (name != p->name) throw CheckpointError("parameter " + name + " found where " + p->name + " was expected");
    if (!detail::get_le(in, rank)) throw CheckpointError("truncated checkpoint in parameter " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!detail::get_le(in, v)) throw CheckpointError("truncated checkpoint in parameter " + name);
      d = static_cast<std::size_t>(v);
    }
    if (shape != p->value.shape())
      throw CheckpointError("shape mismatch for " + name + ": file " + shape_string(shape) + ", spec " +
                            shape_string(p->value.shape()));
    for (double& v : p->value.storage())
      if (!detail::get_le(in, v)) throw CheckpointError("truncated checkpoint in parameter " + name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing data after last parameter");
  return net;
}

inline void save_checkpoint(Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  save_checkpoint(net, out);
  if (!out) throw CheckpointError("write failed: " + path);
}

inline Network load_checkpoint(const std::string& path, const NetworkSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return load_checkpoint(in, spec);
}

inline void save_spec(const NetworkSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  out << spec_to_json(spec.layers, spec.input_features).dump(2) << '\n';
}

inline NetworkSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open network spec " + path);
  try {
    return spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("malformed network spec " + path + ": " + e.what());
  }
}

}  // namespace tubeflow::nn
