#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace rrgnn {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 penalty folded into the gradient (coupled, not decoupled).
  double weight_decay = 0.0;
};

/// First/second moment estimates, zero-initialized on first use.
template <typename Scalar>
struct AdamState {
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> m;
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> v;
  long step = 0;
};

/// Bias-corrected Adam update applied in place.
template <typename Scalar>
void adam_step(std::span<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> params,
               std::span<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> grads,
               AdamState<Scalar>& state, const AdamConfig& config) {
  if (!(config.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (config.weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
  if (params.size() != grads.size()) throw std::invalid_argument("param/grad count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(decltype(state.m)::value_type::Zero(p.rows(), p.cols()));
      state.v.push_back(decltype(state.v)::value_type::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("optimizer state mismatch");

  ++state.step;
  const auto b1 = static_cast<Scalar>(config.beta1);
  const auto b2 = static_cast<Scalar>(config.beta2);
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  const auto lr = static_cast<Scalar>(config.lr);
  const auto eps = static_cast<Scalar>(config.eps);
  const auto wd = static_cast<Scalar>(config.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& raw = grads[i];
    if (raw.rows() != params[i].rows() || raw.cols() != params[i].cols())
      throw std::invalid_argument("gradient shape mismatch");
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g =
        wd != Scalar(0) ? (raw + wd * params[i]).eval() : raw;
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
    params[i].array() -=
        lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace rrgnn
