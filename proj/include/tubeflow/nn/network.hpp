#pragma once

// Layer sequence over [time, features] tensors. Conv1d reads each time row
// as [channels, n] (channel-major) and convolves along n; Dense, LeakyRelu
// and Dropout act row-wise; Lstm runs over the time axis. The network
// prediction is the last row of the final layer.

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tubeflow/errors.hpp"
#include "tubeflow/nn/ops.hpp"
#include "tubeflow/nn/rng.hpp"
#include "tubeflow/nn/tensor.hpp"

namespace tubeflow::nn {

struct Conv1dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 3;
  friend bool operator==(const Conv1dSpec&, const Conv1dSpec&) = default;
};
struct LstmSpec {
  std::size_t input_size = 1;
  std::size_t hidden_size = 1;
  friend bool operator==(const LstmSpec&, const LstmSpec&) = default;
};
struct DenseSpec {
  std::size_t in_features = 1;
  std::size_t out_features = 1;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};
struct LeakyReluSpec {
  double alpha = 0.01;
  friend bool operator==(const LeakyReluSpec&, const LeakyReluSpec&) = default;
};
struct DropoutSpec {
  double rate = 0.0;
  friend bool operator==(const DropoutSpec&, const DropoutSpec&) = default;
};

using LayerSpec = std::variant<Conv1dSpec, LstmSpec, DenseSpec, LeakyReluSpec, DropoutSpec>;

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.storage()) v = rng.uniform(-limit, limit);
}

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode, Rng& rng) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
};

class Conv1dLayer final : public Layer {
 public:
  Conv1dLayer(const Conv1dSpec& spec, const std::string& prefix)
      : spec_(spec),
        weight_(prefix + ".weight", {spec.out_channels, spec.in_channels, spec.kernel_size}),
        bias_(prefix + ".bias", {spec.out_channels}) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1dLayer>(*this); }

  void init(Rng& rng) {
    glorot_uniform(weight_.value, spec_.in_channels * spec_.kernel_size, spec_.out_channels * spec_.kernel_size, rng);
  }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    input_ = x;
    const std::size_t rows = x.dim(0), n = x.dim(1) / spec_.in_channels;
    Tensor y({rows, spec_.out_channels * n});
    for (std::size_t t = 0; t < rows; ++t)
      conv1d_raw(x.row(t).data(), spec_.in_channels, n, weight_.value, bias_.value, y.row(t).data());
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t rows = input_.dim(0), n = input_.dim(1) / spec_.in_channels;
    Tensor gx(input_.shape());
    for (std::size_t t = 0; t < rows; ++t)
      conv1d_backward_raw(input_.row(t).data(), spec_.in_channels, n, weight_.value, g.row(t).data(), weight_.grad,
                          bias_.grad, gx.row(t).data());
    return gx;
  }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

 private:
  Conv1dSpec spec_;
  Parameter weight_, bias_;
  Tensor input_;
};

class LstmLayer final : public Layer {
 public:
  LstmLayer(const LstmSpec& spec, const std::string& prefix, bool last_only)
      : spec_(spec),
        W_(prefix + ".W", {4 * spec.hidden_size, spec.input_size}),
        U_(prefix + ".U", {4 * spec.hidden_size, spec.hidden_size}),
        b_(prefix + ".b", {4 * spec.hidden_size}),
        last_only_(last_only) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<LstmLayer>(*this); }

  void init(Rng& rng) {
    glorot_uniform(W_.value, spec_.input_size, 4 * spec_.hidden_size, rng);
    glorot_uniform(U_.value, spec_.hidden_size, 4 * spec_.hidden_size, rng);
  }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    LstmResult r = lstm_forward(x, W_.value, U_.value, b_.value);
    cache_ = std::move(r.cache);
    if (!last_only_) return std::move(r.outputs);
    return Tensor({1, spec_.hidden_size}, std::move(r.h));
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t T = cache_.input.dim(0), H = spec_.hidden_size;
    if (!last_only_) return lstm_backward(cache_, W_.value, U_.value, g, W_.grad, U_.grad, b_.grad);
    Tensor full({T, H});
    for (std::size_t j = 0; j < H; ++j) full(T - 1, j) = g[j];
    return lstm_backward(cache_, W_.value, U_.value, full, W_.grad, U_.grad, b_.grad);
  }

  std::vector<Parameter*> parameters() override { return {&W_, &U_, &b_}; }

 private:
  LstmSpec spec_;
  Parameter W_, U_, b_;
  bool last_only_;
  LstmCache cache_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(const DenseSpec& spec, const std::string& prefix)
      : spec_(spec),
        weight_(prefix + ".weight", {spec.out_features, spec.in_features}),
        bias_(prefix + ".bias", {spec.out_features}) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

  void init(Rng& rng) { glorot_uniform(weight_.value, spec_.in_features, spec_.out_features, rng); }

  Tensor forward(const Tensor& x, Mode, Rng&) override {
    input_ = x;
    return dense(x, weight_.value, bias_.value);
  }

  Tensor backward(const Tensor& g) override { return dense_backward(input_, weight_.value, g, weight_.grad, bias_.grad); }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

 private:
  DenseSpec spec_;
  Parameter weight_, bias_;
  Tensor input_;
};

class LeakyReluLayer final : public Layer {
 public:
  explicit LeakyReluLayer(double alpha) : alpha_(alpha) {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyReluLayer>(*this); }
  Tensor forward(const Tensor& x, Mode, Rng&) override {
    input_ = x;
    return leaky_relu(x, alpha_);
  }
  Tensor backward(const Tensor& g) override { return leaky_relu_backward(input_, g, alpha_); }

 private:
  double alpha_;
  Tensor input_;
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override { return dropout(x, rate_, mode, rng, &mask_); }
  Tensor backward(const Tensor& g) override {
    Tensor out = g;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= mask_[k];
    return out;
  }

 private:
  double rate_;
  Tensor mask_;
};

class Network {
 public:
  Network() = default;

  /// Builds and initializes the layers; `input_features` is the row width of
  /// the [time, features] input.
  Network(std::vector<LayerSpec> specs, std::size_t input_features, std::uint64_t seed)
      : specs_(std::move(specs)), input_features_(input_features) {
    std::size_t width = input_features;
    std::size_t last_lstm = specs_.size();
    for (std::size_t k = 0; k < specs_.size(); ++k)
      if (std::holds_alternative<LstmSpec>(specs_[k])) last_lstm = k;
    Rng rng(seed);
    for (std::size_t k = 0; k < specs_.size(); ++k) {
      const std::string prefix = "layer" + std::to_string(k);
      const std::string where = "layer " + std::to_string(k) + ": ";
      std::visit(
          [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Conv1dSpec>) {
              if (s.kernel_size % 2 == 0) throw InvalidArgument(where + "conv1d kernel size must be odd");
              if (s.in_channels == 0 || s.out_channels == 0 || width % s.in_channels != 0)
                throw InvalidArgument(where + "row width " + std::to_string(width) + " is not a multiple of " +
                                      std::to_string(s.in_channels) + " channels");
              auto layer = std::make_unique<Conv1dLayer>(s, prefix + ".conv1d");
              layer->init(rng);
              width = width / s.in_channels * s.out_channels;
              layers_.push_back(std::move(layer));
            } else if constexpr (std::is_same_v<S, LstmSpec>) {
              if (s.input_size != width)
                throw InvalidArgument(where + "lstm input_size " + std::to_string(s.input_size) +
                                      " does not match row width " + std::to_string(width));
              if (s.hidden_size == 0) throw InvalidArgument(where + "lstm hidden_size must be positive");
              auto layer = std::make_unique<LstmLayer>(s, prefix + ".lstm", k == last_lstm);
              layer->init(rng);
              width = s.hidden_size;
              layers_.push_back(std::move(layer));
            } else if constexpr (std::is_same_v<S, DenseSpec>) {
              if (s.in_features != width)
                throw InvalidArgument(where + "dense in_features " + std::to_string(s.in_features) +
                                      " does not match row width " + std::to_string(width));
              if (s.out_features == 0) throw InvalidArgument(where + "dense out_features must be positive");
              auto layer = std::make_unique<DenseLayer>(s, prefix + ".dense");
              layer->init(rng);
              width = s.out_features;
              layers_.push_back(std::move(layer));
            } else if constexpr (std::is_same_v<S, LeakyReluSpec>) {
              layers_.push_back(std::make_unique<LeakyReluLayer>(s.alpha));
            } else {
              if (!(s.rate >= 0.0 && s.rate < 1.0)) throw InvalidArgument(where + "dropout rate must lie in [0, 1)");
              layers_.push_back(std::make_unique<DropoutLayer>(s.rate));
            }
          },
          specs_[k]);
    }
    output_features_ = width;
  }

  Network(const Network& other)
      : specs_(other.specs_),
        input_features_(other.input_features_),
        output_features_(other.output_features_),
        mode_(other.mode_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& other) {
    if (this != &other) {
      Network tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t input_features() const { return input_features_; }
  std::size_t output_features() const { return output_features_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_)
      for (Parameter* p : l->parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (Parameter* p : parameters()) p->grad.fill(0.0);
  }

  /// input: [time, input_features]. Returns the last output row.
  std::vector<double> forward(const Tensor& input, Rng& rng) {
    if (input.rank() != 2 || input.dim(1) != input_features_)
      throw InvalidArgument("network input " + shape_string(input.shape()) + " does not match " +
                            std::to_string(input_features_) + " features");
    if (input.dim(0) == 0) throw InvalidArgument("network input has no time rows");
    Tensor x = input;
    for (auto& l : layers_) x = l->forward(x, mode_, rng);
    last_rows_ = x.dim(0);
    const auto last = x.row(x.dim(0) - 1);
    return {last.begin(), last.end()};
  }

  std::vector<double> forward(const Tensor& input) {
    Rng rng(0);
    return forward(input, rng);
  }

  /// Accumulates parameter gradients for d(loss)/d(output) of the last forward.
  Tensor backward(std::span<const double> grad_output) {
    if (grad_output.size() != output_features_) throw InvalidArgument("gradient size does not match network output");
    Tensor g({last_rows_, output_features_});
    for (std::size_t j = 0; j < output_features_; ++j) g(last_rows_ - 1, j) = grad_output[j];
    for (std::size_t k = layers_.size(); k-- > 0;) g = layers_[k]->backward(g);
    return g;
  }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::size_t input_features_ = 0;
  std::size_t output_features_ = 0;
  std::size_t last_rows_ = 0;
  Mode mode_ = Mode::eval;
};

}  // namespace tubeflow::nn
