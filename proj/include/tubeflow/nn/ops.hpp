#pragma once

// Forward and backward kernels for the layer set. Backward functions
// accumulate parameter gradients (+=) and return the input gradient.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/errors.hpp"
#include "tubeflow/nn/rng.hpp"
#include "tubeflow/nn/tensor.hpp"

namespace tubeflow::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// 1D convolution, same padding. x: [C, n], weight: [O, C, K], bias: [O].

inline void conv1d_raw(const double* x, std::size_t channels, std::size_t n, const Tensor& weight,
                       const Tensor& bias, double* y) {
  const std::size_t out_ch = weight.dim(0), k_size = weight.dim(2);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k_size / 2);
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* yo = y + o * n;
    for (std::size_t i = 0; i < n; ++i) yo[i] = bias[o];
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = x + c * n;
      for (std::size_t k = 0; k < k_size; ++k) {
        const double w = weight[(o * channels + c) * k_size + k];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - half;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(nn, nn - shift);
        for (std::ptrdiff_t i = lo; i < hi; ++i) yo[i] += w * xc[i + shift];
      }
    }
  }
}

inline void conv1d_backward_raw(const double* x, std::size_t channels, std::size_t n, const Tensor& weight,
                                const double* gy, Tensor& grad_weight, Tensor& grad_bias, double* gx) {
  const std::size_t out_ch = weight.dim(0), k_size = weight.dim(2);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k_size / 2);
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
  for (std::size_t i = 0; i < channels * n; ++i) gx[i] = 0.0;
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* go = gy + o * n;
    double sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) sb += go[i];
    grad_bias[o] += sb;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = x + c * n;
      double* gxc = gx + c * n;
      for (std::size_t k = 0; k < k_size; ++k) {
        const std::size_t widx = (o * channels + c) * k_size + k;
        const double w = weight[widx];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - half;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(nn, nn - shift);
        double sw = 0.0;
        for (std::ptrdiff_t i = lo; i < hi; ++i) {
          sw += go[i] * xc[i + shift];
          gxc[i + shift] += w * go[i];
        }
        grad_weight[widx] += sw;
      }
    }
  }
}

inline void check_conv_shapes(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 2 || weight.rank() != 3 || bias.rank() != 1)
    throw InvalidArgument("conv1d: expected input [C,n], weight [O,C,K], bias [O]");
  if (input.dim(0) != weight.dim(1))
    throw InvalidArgument("conv1d: input has " + std::to_string(input.dim(0)) + " channels, weight expects " +
                          std::to_string(weight.dim(1)));
  if (bias.dim(0) != weight.dim(0)) throw InvalidArgument("conv1d: bias length differs from out channels");
  if (weight.dim(2) % 2 == 0) throw InvalidArgument("conv1d: kernel size must be odd");
}

inline Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_conv_shapes(input, weight, bias);
  Tensor out({weight.dim(0), input.dim(1)});
  conv1d_raw(input.data(), input.dim(0), input.dim(1), weight, bias, out.data());
  return out;
}

inline Tensor conv1d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                              Tensor& grad_weight, Tensor& grad_bias) {
  Tensor gx(input.shape());
  conv1d_backward_raw(input.data(), input.dim(0), input.dim(1), weight, grad_out.data(), grad_weight, grad_bias,
                      gx.data());
  return gx;
}

// ---------------------------------------------------------------------------
// Dense, applied row-wise. x: [T, F], weight: [O, F], bias: [O].

inline Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 2 || input.dim(1) != weight.dim(1) || bias.dim(0) != weight.dim(0))
    throw InvalidArgument("dense: input " + shape_string(input.shape()) + " incompatible with weight " +
                          shape_string(weight.shape()));
  const std::size_t rows = input.dim(0), in = weight.dim(1), out = weight.dim(0);
  Tensor y({rows, out});
  auto Y = as_matrix(y, rows, out);
  Y.noalias() = as_matrix(input, rows, in) * as_matrix(weight, out, in).transpose();
  Y.rowwise() += ConstVecMap(bias.data(), static_cast<Eigen::Index>(out)).transpose();
  return y;
}

inline Tensor dense_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out, Tensor& grad_weight,
                             Tensor& grad_bias) {
  const std::size_t rows = input.dim(0), in = weight.dim(1), out = weight.dim(0);
  auto GY = as_matrix(grad_out, rows, out);
  as_matrix(grad_weight, out, in).noalias() += GY.transpose() * as_matrix(input, rows, in);
  VecMap(grad_bias.data(), static_cast<Eigen::Index>(out)) += GY.colwise().sum().transpose();
  Tensor gx({rows, in});
  as_matrix(gx, rows, in).noalias() = GY * as_matrix(weight, out, in);
  return gx;
}

// ---------------------------------------------------------------------------
// Leaky ReLU.

inline double leaky_relu(double x, double alpha = 0.01) { return x > 0.0 ? x : alpha * x; }

inline Tensor leaky_relu(const Tensor& x, double alpha = 0.01) {
  Tensor y = x;
  for (double& v : y.storage()) v = leaky_relu(v, alpha);
  return y;
}

inline Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out, double alpha = 0.01) {
  Tensor g = grad_out;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (!(x[k] > 0.0)) g[k] *= alpha;
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout. `mask` receives the per-element scale (0 or 1/(1-rate)).

inline Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) {
    if (mask) *mask = Tensor(x.shape(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor y(x.shape());
  Tensor m(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) {
    m[k] = rng.uniform() < rate ? 0.0 : keep_scale;
    y[k] = x[k] * m[k];
  }
  if (mask) *mask = std::move(m);
  return y;
}

// ---------------------------------------------------------------------------
// LSTM. Gate rows of W [4H, F], U [4H, H], b [4H] are ordered i, f, o, g.

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct LstmCache {
  Tensor input;   // [T, F]
  Tensor gates;   // [T, 4H] post-activation
  Tensor cells;   // [T+1, H], row 0 is c0
  Tensor hidden;  // [T+1, H], row 0 is h0
  Tensor cell_tanh;  // [T, H]
};

struct LstmResult {
  Tensor outputs;  // [T, H]
  std::vector<double> h;
  std::vector<double> c;
  LstmCache cache;
};

inline LstmResult lstm_forward(const Tensor& seq, const Tensor& W, const Tensor& U, const Tensor& b,
                               std::span<const double> h0 = {}, std::span<const double> c0 = {}) {
  if (seq.rank() != 2 || W.rank() != 2 || U.rank() != 2)
    throw InvalidArgument("lstm: expected sequence [T,F], W [4H,F], U [4H,H]");
  const std::size_t T = seq.dim(0), F = seq.dim(1), H = U.dim(1);
  if (W.dim(1) != F)
    throw InvalidArgument("lstm: feature size " + std::to_string(F) + " differs from input_size " +
                          std::to_string(W.dim(1)));
  if (W.dim(0) != 4 * H || U.dim(0) != 4 * H || b.size() != 4 * H) throw InvalidArgument("lstm: gate shape mismatch");
  if ((!h0.empty() && h0.size() != H) || (!c0.empty() && c0.size() != H))
    throw InvalidArgument("lstm: initial state size mismatch");

  LstmResult res;
  LstmCache& cache = res.cache;
  cache.input = seq;
  cache.gates = Tensor({T, 4 * H});
  cache.cells = Tensor({T + 1, H});
  cache.hidden = Tensor({T + 1, H});
  cache.cell_tanh = Tensor({T, H});
  for (std::size_t j = 0; j < H; ++j) {
    cache.hidden(0, j) = h0.empty() ? 0.0 : h0[j];
    cache.cells(0, j) = c0.empty() ? 0.0 : c0[j];
  }

  auto Z = as_matrix(cache.gates, T, 4 * H);
  Z.noalias() = as_matrix(seq, T, F) * as_matrix(W, 4 * H, F).transpose();
  Z.rowwise() += ConstVecMap(b.data(), static_cast<Eigen::Index>(4 * H)).transpose();
  const auto Um = as_matrix(U, 4 * H, H);
  Eigen::VectorXd z(4 * H);
  for (std::size_t t = 0; t < T; ++t) {
    z.noalias() = Um * ConstVecMap(cache.hidden.row(t).data(), static_cast<Eigen::Index>(H));
    double* g = cache.gates.row(t).data();
    for (std::size_t k = 0; k < 4 * H; ++k) g[k] += z[static_cast<Eigen::Index>(k)];
    for (std::size_t j = 0; j < 3 * H; ++j) g[j] = sigmoid(g[j]);
    for (std::size_t j = 3 * H; j < 4 * H; ++j) g[j] = std::tanh(g[j]);
    for (std::size_t j = 0; j < H; ++j) {
      const double c = g[H + j] * cache.cells(t, j) + g[j] * g[3 * H + j];
      cache.cells(t + 1, j) = c;
      const double tc = std::tanh(c);
      cache.cell_tanh(t, j) = tc;
      cache.hidden(t + 1, j) = g[2 * H + j] * tc;
    }
  }
  res.outputs = Tensor({T, H});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < H; ++j) res.outputs(t, j) = cache.hidden(t + 1, j);
  res.h.assign(cache.hidden.data() + T * H, cache.hidden.data() + (T + 1) * H);
  res.c.assign(cache.cells.data() + T * H, cache.cells.data() + (T + 1) * H);
  return res;
}

/// Backpropagation through time. grad_outputs: [T, H] gradient w.r.t. every
/// emitted hidden state. Returns the input gradient [T, F].
inline Tensor lstm_backward(const LstmCache& cache, const Tensor& W, const Tensor& U, const Tensor& grad_outputs,
                            Tensor& grad_W, Tensor& grad_U, Tensor& grad_b) {
  const std::size_t T = cache.input.dim(0), F = cache.input.dim(1), H = U.dim(1);
  Tensor dZ({T, 4 * H});
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
  const auto Um = as_matrix(U, 4 * H, H);
  auto dUm = as_matrix(grad_U, 4 * H, H);
  for (std::size_t t = T; t-- > 0;) {
    const double* g = cache.gates.row(t).data();
    double* dz = &dZ(t, 0);
    for (std::size_t j = 0; j < H; ++j) {
      const double i = g[j], f = g[H + j], o = g[2 * H + j], gg = g[3 * H + j];
      const double tc = cache.cell_tanh(t, j);
      const double dh = grad_outputs(t, j) + dh_next[j];
      const double dc = dc_next[j] + dh * o * (1.0 - tc * tc);
      dz[j] = dc * gg * i * (1.0 - i);
      dz[H + j] = dc * cache.cells(t, j) * f * (1.0 - f);
      dz[2 * H + j] = dh * tc * o * (1.0 - o);
      dz[3 * H + j] = dc * i * (1.0 - gg * gg);
      dc_next[j] = dc * f;
    }
    const ConstVecMap dzv(dz, static_cast<Eigen::Index>(4 * H));
    VecMap(dh_next.data(), static_cast<Eigen::Index>(H)).noalias() = Um.transpose() * dzv;
    dUm.noalias() += dzv * ConstVecMap(cache.hidden.row(t).data(), static_cast<Eigen::Index>(H)).transpose();
  }
  const auto dZm = as_matrix(dZ, T, 4 * H);
  as_matrix(grad_W, 4 * H, F).noalias() += dZm.transpose() * as_matrix(cache.input, T, F);
  VecMap(grad_b.data(), static_cast<Eigen::Index>(4 * H)) += dZm.colwise().sum().transpose();
  Tensor gx({T, F});
  as_matrix(gx, T, F).noalias() = dZm * as_matrix(W, 4 * H, F);
  return gx;
}

}  // namespace tubeflow::nn
