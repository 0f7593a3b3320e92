#pragma once

// Momentum SGD with decoupled-by-kind weight decay and the poly schedule.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "minetlab/errors.hpp"
#include "minetlab/nn.hpp"

namespace minetlab {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 4;
  double lr0 = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;
  double lambda_cel = 1.0;
  std::uint64_t seed = 0;
  // Global gradient-norm cap; 0 disables clipping.
  double grad_clip = 0.0;
  bool shuffle = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("must be at least 1", "train.epochs");
    if (batch_size < 1) throw ConfigError("must be at least 1", "train.batch_size");
    if (!(lr0 > 0)) throw ConfigError("must be positive", "train.lr0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("must lie in [0,1)", "train.momentum");
    if (!(weight_decay >= 0)) throw ConfigError("must be non-negative", "train.weight_decay");
    if (!(poly_power > 0)) throw ConfigError("must be positive", "train.poly_power");
    if (!(lambda_cel >= 0)) throw ConfigError("must be non-negative", "train.lambda_cel");
    if (!(grad_clip >= 0)) throw ConfigError("must be non-negative", "train.grad_clip");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainState {
  int epoch = 0;                    // completed epochs
  std::int64_t global_iteration = 0;  // completed optimizer steps
  std::int64_t total_iterations = 0;
  double current_lr = 0.0;
  // -1 until a validation set has been scored.
  double best_validation_f_avg = -1.0;
  double best_epoch_loss = std::numeric_limits<double>::infinity();
  // Data order and augmentation draws are pure functions of this seed, the
  // epoch and the sample id, so it is the only generator state to persist.
  std::uint64_t data_seed = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// lr0 * (1 - t/T)^power for 0 <= t <= T.
inline double poly_lr(std::int64_t t, std::int64_t total, double lr0, double power) {
  if (total <= 0) throw std::invalid_argument("poly_lr: total iterations must be positive");
  if (t < 0 || t > total) {
    throw std::out_of_range("poly_lr: iteration " + std::to_string(t) + " outside [0, " + std::to_string(total) + "]");
  }
  return lr0 * std::pow(1.0 - static_cast<double>(t) / static_cast<double>(total), power);
}

/// buf = momentum * buf + (grad + wd * w); w -= lr * buf. Weight decay is
/// applied to convolution weights only.
template <class T>
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Returns the global gradient norm before clipping.
  double step(ParameterSet<T>& set, double lr, double grad_clip = 0.0) {
    double sq = 0.0;
    for (auto& p : set.params) {
      if (!p.var.node()->has_grad()) continue;
      for (T g : p.var.node()->grad.storage()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    const double scale = grad_clip > 0 && norm > grad_clip ? grad_clip / norm : 1.0;
    for (auto& p : set.params) {
      Tensor<T>& w = p.var.mutable_value();
      auto [it, inserted] = buffers_.try_emplace(p.name, w.shape());
      Tensor<T>& buf = it->second;
      const bool has_grad = p.var.node()->has_grad();
      const double wd = p.kind == ParamKind::conv_weight ? weight_decay_ : 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = (has_grad ? scale * static_cast<double>(p.var.node()->grad[i]) : 0.0) +
                         wd * static_cast<double>(w[i]);
        const double b = momentum_ * static_cast<double>(buf[i]) + g;
        buf[i] = static_cast<T>(b);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * b);
      }
    }
    return norm;
  }

  std::map<std::string, Tensor<T>>& momentum_buffers() { return buffers_; }
  const std::map<std::string, Tensor<T>>& momentum_buffers() const { return buffers_; }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Tensor<T>> buffers_;
};

}  // namespace minetlab
