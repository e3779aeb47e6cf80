#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/errors.hpp"
#include "tubeflow/nn/network.hpp"

namespace tubeflow::nn {

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

/// Normalized MSE: mean of (pred - target)^2 / max(target^2, delta).
inline LossResult loss_nmse(std::span<const double> prediction, std::span<const double> target, double delta = 1e-6) {
  if (prediction.empty()) throw InvalidArgument("loss_nmse: empty tensors");
  if (prediction.size() != target.size()) throw InvalidArgument("loss_nmse: shape mismatch");
  const double m = static_cast<double>(prediction.size());
  LossResult out;
  out.grad.resize(prediction.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < prediction.size(); ++k) {
    const double denom = std::max(target[k] * target[k], delta);
    const double e = prediction[k] - target[k];
    sum += e * e / denom;
    out.grad[k] = 2.0 / m * e / denom;
  }
  out.value = sum / m;
  return out;
}

inline LossResult loss_nmse(const Tensor& prediction, const Tensor& target, double delta = 1e-6) {
  if (prediction.shape() != target.shape()) throw InvalidArgument("loss_nmse: shape mismatch");
  return loss_nmse(prediction.values(), target.values(), delta);
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected ADAM update, applied in place to every parameter block.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state) {
  if (params.size() != grads.size()) throw InvalidArgument("adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam: state does not match parameters");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || state.m[b].size() != params[b].size())
      throw InvalidArgument("adam: shape mismatch in block " + std::to_string(b));
    for (double g : grads[b])
      if (!std::isfinite(g)) throw NumericalError("adam: non-finite gradient in block " + std::to_string(b));
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.m[b];
    auto& v = state.v[b];
    for (std::size_t k = 0; k < params[b].size(); ++k) {
      const double g = grads[b][k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      params[b][k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

inline void adam_step(Network& net, AdamState& state) {
  std::vector<std::span<double>> p;
  std::vector<std::span<const double>> g;
  for (Parameter* par : net.parameters()) {
    p.push_back(par->value.values());
    g.push_back(par->grad.values());
  }
  adam_step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g), state);
}

}  // namespace tubeflow::nn
