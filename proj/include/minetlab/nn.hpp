#pragma once

// Parameter bookkeeping and the basic layers the network is assembled from.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "minetlab/ops.hpp"
#include "minetlab/rng.hpp"

namespace minetlab {

enum class ParamKind { conv_weight, conv_bias, norm_weight, norm_bias };

template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
  ParamKind kind;
};

template <class T>
struct Buffer {
  std::string name;
  Tensor<T>* tensor;
};

/// Flat, ordered view over a module tree's parameters and buffers.
template <class T>
struct ParameterSet {
  std::vector<Parameter<T>> params;
  std::vector<Buffer<T>> buffers;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.var.value().size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params) p.var.zero_grad();
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

/// Per-call execution settings threaded through every forward pass.
struct RunContext {
  bool training = false;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  /// He-normal weights, zero bias.
  Conv2d(int cin, int cout, int kernel, bool with_bias, Rng& rng)
      : weight_(Tensor<T>(Shape{cout, cin, kernel, kernel}), true) {
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * kernel * kernel));
    for (auto& v : weight_.mutable_value().storage()) v = static_cast<T>(std * rng.normal());
    if (with_bias) bias_ = Var<T>(Tensor<T>(Shape{1, cout, 1, 1}), true);
  }

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight_, bias_); }

  int in_channels() const { return weight_.shape().c; }
  int out_channels() const { return weight_.shape().n; }
  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }

  void collect(const std::string& prefix, ParameterSet<T>& set) {
    set.params.push_back({join_name(prefix, "weight"), weight_, ParamKind::conv_weight});
    if (bias_.defined()) set.params.push_back({join_name(prefix, "bias"), bias_, ParamKind::conv_bias});
  }

 private:
  Var<T> weight_;
  Var<T> bias_;
};

template <class T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels)
      : gamma_(Tensor<T>(Shape{1, channels, 1, 1}, T(1)), true),
        beta_(Tensor<T>(Shape{1, channels, 1, 1}), true),
        running_mean_(Shape{1, channels, 1, 1}),
        running_var_(Shape{1, channels, 1, 1}, T(1)) {}

  /// Frozen layers always normalize with the running estimates.
  void set_frozen(bool frozen) { frozen_ = frozen; }

  Var<T> operator()(const RunContext& ctx, const Var<T>& x) {
    ops::BatchNormState<T> st{&running_mean_, &running_var_, ctx.bn_momentum, ctx.bn_eps, ctx.training && !frozen_};
    return ops::batch_norm(x, gamma_, beta_, st);
  }

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }

  void collect(const std::string& prefix, ParameterSet<T>& set) {
    set.params.push_back({join_name(prefix, "weight"), gamma_, ParamKind::norm_weight});
    set.params.push_back({join_name(prefix, "bias"), beta_, ParamKind::norm_bias});
    set.buffers.push_back({join_name(prefix, "running_mean"), &running_mean_});
    set.buffers.push_back({join_name(prefix, "running_var"), &running_var_});
  }

 private:
  Var<T> gamma_;
  Var<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  bool frozen_ = false;
};

/// Convolution, batch normalization, ReLU. The fusion unit of the decoder
/// and the building block of most transforms.
template <class T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(int cin, int cout, int kernel, Rng& rng) : conv_(cin, cout, kernel, false, rng), bn_(cout) {}

  Var<T> operator()(const RunContext& ctx, const Var<T>& x) { return ops::relu(bn_(ctx, conv_(x))); }

  int in_channels() const { return conv_.in_channels(); }
  int out_channels() const { return conv_.out_channels(); }
  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }

  void collect(const std::string& prefix, ParameterSet<T>& set) {
    conv_.collect(join_name(prefix, "conv"), set);
    bn_.collect(join_name(prefix, "bn"), set);
  }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

/// Convolution followed by batch normalization, no nonlinearity.
template <class T>
class ConvBn {
 public:
  ConvBn() = default;
  ConvBn(int cin, int cout, int kernel, Rng& rng) : conv_(cin, cout, kernel, false, rng), bn_(cout) {}

  Var<T> operator()(const RunContext& ctx, const Var<T>& x) { return bn_(ctx, conv_(x)); }

  void collect(const std::string& prefix, ParameterSet<T>& set) {
    conv_.collect(join_name(prefix, "conv"), set);
    bn_.collect(join_name(prefix, "bn"), set);
  }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

/// Copies named tensors into matching parameters and buffers. With `strict`,
/// every parameter must be present in `named`, and every entry in `named` must
/// match something. Returns the number of tensors assigned.
template <class T, class U>
std::size_t assign_named(ParameterSet<T>& set, const std::map<std::string, Tensor<U>>& named, bool strict) {
  std::size_t assigned = 0;
  auto copy_into = [&](const std::string& name, Tensor<T>& dst) {
    auto it = named.find(name);
    if (it == named.end()) {
      if (strict) throw ShapeError("missing tensor '" + name + "'");
      return;
    }
    if (!(it->second.shape() == dst.shape())) {
      throw ShapeError("tensor '" + name + "' has shape " + it->second.shape().str() + ", expected " +
                       dst.shape().str());
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second[i]);
    ++assigned;
  };
  for (auto& p : set.params) copy_into(p.name, p.var.mutable_value());
  for (auto& b : set.buffers) copy_into(b.name, *b.tensor);
  if (strict && assigned != named.size()) {
    for (const auto& [name, _] : named) {
      bool known = set.find(name) != nullptr;
      for (const auto& b : set.buffers) known = known || b.name == name;
      if (!known) throw ShapeError("unexpected tensor '" + name + "'");
    }
  }
  return assigned;
}

/// Snapshot of every parameter and buffer, keyed by name.
template <class T>
std::map<std::string, Tensor<T>> named_tensors(const ParameterSet<T>& set) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& p : set.params) out.emplace(p.name, p.var.value());
  for (const auto& b : set.buffers) out.emplace(b.name, *b.tensor);
  return out;
}

}  // namespace minetlab
