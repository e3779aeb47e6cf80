#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tubeflow/errors.hpp"
#include "tubeflow/nn/network.hpp"
#include "tubeflow/nn/optim.hpp"
#include "tubeflow/nn/rng.hpp"
#include "tubeflow/surrogate/dataset.hpp"

namespace tubeflow::surrogate {

/// Layer sequence with sizes left to be inferred, written as a comma list:
///   conv1d:OUT:K   leaky_relu[:ALPHA]   lstm:HIDDEN   dropout[:RATE]   dense[:OUT]
/// Conv and LSTM input sizes follow from the running row width; a dense
/// without OUT produces the network output; a dropout without RATE uses the
/// training dropout rate.
inline constexpr std::string_view kDefaultArchitecture =
    "conv1d:8:3,leaky_relu,conv1d:8:3,leaky_relu,lstm:32,dropout,dense:64,leaky_relu,dense";

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view s, std::string_view token) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InvalidArgument("architecture: bad number '" + std::string(s) + "' in '" + std::string(token) + "'");
  return v;
}

}  // namespace detail

/// Resolves an architecture string for rows of `channels` x `n_points`.
inline std::vector<nn::LayerSpec> build_architecture(std::string_view arch, std::size_t channels,
                                                     std::size_t n_points, std::size_t outputs,
                                                     double dropout_rate, double leaky_alpha = 0.01) {
  std::vector<nn::LayerSpec> specs;
  std::size_t ch = channels;
  std::size_t width = channels * n_points;
  bool spatial = true;
  for (std::string_view raw : detail::split(arch, ',')) {
    const std::string_view token = detail::trim(raw);
    if (token.empty()) throw InvalidArgument("architecture: empty layer entry");
    const auto parts = detail::split(token, ':');
    const std::string_view kind = parts[0];
    auto arg = [&](std::size_t i) { return detail::parse_number<std::size_t>(parts.at(i), token); };
    if (kind == "conv1d") {
      if (parts.size() != 3) throw InvalidArgument("architecture: conv1d needs OUT:K in '" + std::string(token) + "'");
      if (!spatial) throw InvalidArgument("architecture: conv1d must precede lstm and dense layers");
      const std::size_t out = arg(1);
      specs.emplace_back(nn::Conv1dSpec{ch, out, arg(2)});
      ch = out;
      width = out * n_points;
    } else if (kind == "lstm") {
      if (parts.size() != 2) throw InvalidArgument("architecture: lstm needs HIDDEN in '" + std::string(token) + "'");
      specs.emplace_back(nn::LstmSpec{width, arg(1)});
      width = arg(1);
      spatial = false;
    } else if (kind == "dense") {
      const std::size_t out = parts.size() > 1 ? arg(1) : outputs;
      specs.emplace_back(nn::DenseSpec{width, out});
      width = out;
      spatial = false;
    } else if (kind == "leaky_relu") {
      specs.emplace_back(nn::LeakyReluSpec{parts.size() > 1 ? detail::parse_number<double>(parts[1], token) : leaky_alpha});
    } else if (kind == "dropout") {
      specs.emplace_back(nn::DropoutSpec{parts.size() > 1 ? detail::parse_number<double>(parts[1], token) : dropout_rate});
    } else {
      throw InvalidArgument("architecture: unknown layer '" + std::string(kind) + "'");
    }
  }
  if (width != outputs)
    throw InvalidArgument("architecture: produces " + std::to_string(width) + " outputs, expected " +
                          std::to_string(outputs));
  return specs;
}

struct TrainConfig {
  std::size_t history = 10;
  std::size_t epochs = 300;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  // Cosine decay from learning_rate to learning_rate * final_lr_fraction
  // over the epoch budget; 1 keeps the rate constant.
  double final_lr_fraction = 0.05;
  double dropout_rate = 0.0;
  double train_fraction = 0.8;
  // Floor of the per-element normalizer in the loss. Targets are z-scores,
  // so this is in units of the training standard deviation.
  double loss_delta = 1.0;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  // Extra interface samples per window: the new-level area (and pressure) is
  // moved by these multiples of its last step change and the classical
  // single-field solver supplies the response. Empty disables.
  std::vector<double> interface_offsets{-1.0, 1.0};
  std::string fluid_architecture{kDefaultArchitecture};
  std::string solid_architecture{kDefaultArchitecture};

  void validate() const {
    if (history < 1) throw InvalidArgument("history must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
      throw InvalidArgument("final_lr_fraction must lie in (0, 1]");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must lie in [0, 1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1)");
    if (!(loss_delta > 0.0)) throw InvalidArgument("loss_delta must be positive");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
  }
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train = 0.0;
  double validation = 0.0;
};

struct TrainResult {
  nn::Network network;
  std::vector<EpochLoss> curve;
};

/// Mean loss over a dataset in eval mode.
inline double evaluate_loss(nn::Network& net, const Dataset& data, double loss_delta) {
  if (data.size() == 0) return 0.0;
  const nn::Mode saved = net.mode();
  net.set_mode(nn::Mode::eval);
  double sum = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s)
    sum += nn::loss_nmse(net.forward(data.inputs[s]), data.targets[s], loss_delta).value;
  net.set_mode(saved);
  return sum / static_cast<double>(data.size());
}

namespace detail {

// Flattened parameter gradients of one sample. Each sample starts from zero
// gradients so the batch sum is formed in sample order whatever the thread
// count.
inline std::vector<double> sample_gradient(nn::Network& net, const nn::Tensor& input, std::span<const double> target,
                                           double loss_delta, std::uint64_t seed) {
  net.zero_grad();
  nn::Rng rng(seed);
  const auto loss = nn::loss_nmse(net.forward(input, rng), target, loss_delta);
  net.backward(loss.grad);
  std::vector<double> g;
  for (nn::Parameter* p : net.parameters()) g.insert(g.end(), p->grad.storage().begin(), p->grad.storage().end());
  return g;
}

}  // namespace detail

inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.epochs <= 1) return cfg.learning_rate;
  const double progress = static_cast<double>(epoch - 1) / static_cast<double>(cfg.epochs - 1);
  const double lo = cfg.learning_rate * cfg.final_lr_fraction;
  return lo + 0.5 * (cfg.learning_rate - lo) * (1.0 + std::cos(std::numbers::pi * progress));
}

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Minibatch ADAM on the normalized loss. Sample order, dropout masks and
/// initialization all derive from cfg.seed.
inline TrainResult train_network(std::vector<nn::LayerSpec> specs, std::size_t input_features, const Dataset& train_set,
                                 const Dataset& validation_set, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw InsufficientData("training split is empty");
  TrainResult result{nn::Network(std::move(specs), input_features, nn::derive_seed(cfg.seed, 0)), {}};
  nn::Network& net = result.network;
  nn::AdamState adam;
  adam.lr = cfg.learning_rate;

  const std::size_t N = train_set.size();
  const std::size_t threads = std::min(cfg.threads, cfg.batch_size);
  std::vector<nn::Network> replicas(threads > 1 ? threads - 1 : 0);
  std::vector<std::size_t> order(N);
  std::vector<std::vector<double>> grads;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t k = 0; k < N; ++k) order[k] = k;
    nn::Rng shuffle(nn::derive_seed(cfg.seed, 2 * epoch - 1));
    for (std::size_t k = N; k > 1; --k) std::swap(order[k - 1], order[shuffle.below(k)]);
    const std::uint64_t epoch_seed = nn::derive_seed(cfg.seed, 2 * epoch);
    adam.lr = learning_rate_at(cfg, epoch);

    net.set_mode(nn::Mode::train);
    for (auto& r : replicas) {
      r = net;
      r.set_mode(nn::Mode::train);
    }
    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, N - start);
      grads.assign(B, {});
      auto work = [&](nn::Network& model, std::size_t first, std::size_t last) {
        for (std::size_t b = first; b < last; ++b) {
          const std::size_t s = order[start + b];
          grads[b] = detail::sample_gradient(model, train_set.inputs[s], train_set.targets[s], cfg.loss_delta,
                                             nn::derive_seed(epoch_seed, start + b));
        }
      };
      if (replicas.empty() || B == 1) {
        work(net, 0, B);
      } else {
        const std::size_t parts = std::min(threads, B);
        std::vector<std::thread> pool;
        for (std::size_t t = 1; t < parts; ++t)
          pool.emplace_back(work, std::ref(replicas[t - 1]), t * B / parts, (t + 1) * B / parts);
        work(net, 0, B / parts);
        for (auto& th : pool) th.join();
      }

      std::size_t offset = 0;
      for (nn::Parameter* p : net.parameters()) {
        auto& g = p->grad.storage();
        for (std::size_t j = 0; j < g.size(); ++j) {
          double sum = 0.0;
          for (std::size_t b = 0; b < B; ++b) sum += grads[b][offset + j];
          g[j] = sum / static_cast<double>(B);
        }
        offset += g.size();
      }
      try {
        nn::adam_step(net, adam);
      } catch (const NumericalError& e) {
        throw TrainingError(std::string("training diverged: ") + e.what(), epoch);
      }
      for (auto& r : replicas) {
        auto dst = r.parameters();
        auto src = net.parameters();
        for (std::size_t k = 0; k < src.size(); ++k) dst[k]->value = src[k]->value;
      }
    }

    EpochLoss entry{epoch, evaluate_loss(net, train_set, cfg.loss_delta),
                    evaluate_loss(net, validation_set, cfg.loss_delta)};
    if (!std::isfinite(entry.train) || !std::isfinite(entry.validation))
      throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch), epoch);
    result.curve.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  net.set_mode(nn::Mode::eval);
  return result;
}

}  // namespace tubeflow::surrogate
