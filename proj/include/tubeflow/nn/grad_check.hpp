#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/nn/network.hpp"
#include "tubeflow/nn/optim.hpp"

namespace tubeflow::nn {

struct GradCheckOptions {
  double delta_fd = 1e-6;
  double loss_delta = 1e-6;
  // Components smaller than this fraction of the largest gradient are
  // compared on that scale instead of their own magnitude.
  double relative_floor = 1e-3;
  // Test hook: receives the backprop gradients before comparison.
  std::function<void(std::vector<double>&)> tamper;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

inline double network_loss(Network& net, const Tensor& input, std::span<const double> target, double loss_delta) {
  return loss_nmse(net.forward(input), target, loss_delta).value;
}

/// Backprop gradient of loss_nmse versus central differences over every
/// parameter. The network is evaluated in eval mode.
inline GradCheckReport grad_check_report(Network& net, const Tensor& input, std::span<const double> target,
                                         const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  const Mode saved = net.mode();
  net.set_mode(Mode::eval);
  std::vector<Parameter*> params = net.parameters();
  if (params.empty()) {
    net.set_mode(saved);
    return rep;
  }

  net.zero_grad();
  const LossResult loss = loss_nmse(net.forward(input), target, opt.loss_delta);
  net.backward(loss.grad);
  std::vector<double> backprop;
  for (Parameter* p : params) backprop.insert(backprop.end(), p->grad.storage().begin(), p->grad.storage().end());
  if (opt.tamper) opt.tamper(backprop);

  std::vector<double> fd;
  fd.reserve(backprop.size());
  for (Parameter* p : params) {
    for (double& w : p->value.storage()) {
      const double orig = w;
      w = orig + opt.delta_fd;
      const double up = network_loss(net, input, target, opt.loss_delta);
      w = orig - opt.delta_fd;
      const double down = network_loss(net, input, target, opt.loss_delta);
      w = orig;
      fd.push_back((up - down) / (2.0 * opt.delta_fd));
    }
  }

  double gmax = 0.0;
  for (double g : fd) gmax = std::max(gmax, std::abs(g));
  const double floor = std::max(opt.relative_floor * gmax, 1e-300);

  std::size_t k = 0;
  for (Parameter* p : params) {
    for (std::size_t j = 0; j < p->value.size(); ++j, ++k) {
      const double denom = std::max({std::abs(backprop[k]), std::abs(fd[k]), floor});
      const double rel = std::abs(backprop[k] - fd[k]) / denom;
      if (rel > rep.max_relative_error || !std::isfinite(rel)) {
        rep.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        rep.worst_parameter = p->name + "[" + std::to_string(j) + "]";
      }
    }
  }
  rep.checked = k;
  net.set_mode(saved);
  return rep;
}

inline double grad_check(Network& net, const Tensor& input, std::span<const double> target, double delta_fd = 1e-6) {
  GradCheckOptions opt;
  opt.delta_fd = delta_fd;
  return grad_check_report(net, input, target, opt).max_relative_error;
}

}  // namespace tubeflow::nn
