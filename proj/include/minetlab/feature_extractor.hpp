#pragma once

// Five-level encoder feature pyramid at strides 1, 2, 4, 8, 16.
//
// Level 0 runs at input resolution; each following level starts with a 2x2
// max-pool. A VGG-16 layout maps onto this directly once its final pooling
// layer is dropped: conv1 -> level 0, pool1 + conv2 -> level 1, ...,
// pool4 + conv5 -> level 4.

#include <array>
#include <string>
#include <vector>

#include "minetlab/errors.hpp"
#include "minetlab/nn.hpp"

namespace minetlab {

inline constexpr int kPyramidLevels = 5;
inline constexpr std::array<int, kPyramidLevels> kPyramidStrides{1, 2, 4, 8, 16};

enum class BackboneKind { toy, vgg16, external };

inline std::string to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::toy: return "toy";
    case BackboneKind::vgg16: return "vgg16-style";
    case BackboneKind::external: return "external";
  }
  return "?";
}

inline BackboneKind parse_backbone_kind(const std::string& s) {
  if (s == "toy") return BackboneKind::toy;
  if (s == "vgg16-style" || s == "vgg16") return BackboneKind::vgg16;
  if (s == "external") return BackboneKind::external;
  throw ConfigError("unknown backbone kind '" + s + "' (expected toy, vgg16-style or external)");
}

struct BackboneConfig {
  BackboneKind kind = BackboneKind::toy;
  std::array<int, kPyramidLevels> channels{16, 32, 64, 64, 64};
  std::array<int, kPyramidLevels> depths{2, 2, 2, 2, 2};
  bool batch_norm = true;
  // Keep normalization statistics fixed while training (useful with
  // externally loaded weights).
  bool freeze_bn_stats = false;
  // Per-channel standardization applied to [0,1] inputs.
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  static BackboneConfig toy() { return {}; }

  static BackboneConfig vgg16() {
    BackboneConfig cfg;
    cfg.kind = BackboneKind::vgg16;
    cfg.channels = {64, 128, 256, 512, 512};
    cfg.depths = {2, 2, 3, 3, 3};
    cfg.batch_norm = false;
    return cfg;
  }

  void validate() const {
    for (int i = 0; i < kPyramidLevels; ++i) {
      if (channels[i] <= 0) throw ConfigError("channel count must be positive", "backbone.channels[" + std::to_string(i) + "]");
      if (depths[i] <= 0) throw ConfigError("block depth must be positive", "backbone.depths[" + std::to_string(i) + "]");
    }
    for (int c = 0; c < 3; ++c) {
      if (!(std[c] > 0)) throw ConfigError("standard deviation must be positive", "backbone.std[" + std::to_string(c) + "]");
    }
  }

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// An image batch is an N x 3 x H x W tensor with values in [0, 1].
template <class T>
using ImageBatch = Tensor<T>;

template <class T>
void validate_image_batch(const ImageBatch<T>& images) {
  const Shape& s = images.shape();
  if (s.n < 1) throw ShapeError("image batch is empty");
  if (s.c != 3) throw ShapeError("image batch must have 3 channels, got " + std::to_string(s.c));
  if (s.h % 16 != 0) throw ShapeError("image height " + std::to_string(s.h) + " is not divisible by 16");
  if (s.w % 16 != 0) throw ShapeError("image width " + std::to_string(s.w) + " is not divisible by 16");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i] >= T(0) && images[i] <= T(1))) {
      throw ShapeError("image values must lie in [0,1], found " + std::to_string(static_cast<double>(images[i])));
    }
  }
}

template <class T>
struct FeaturePyramid {
  std::array<Var<T>, kPyramidLevels> levels;

  const Var<T>& operator[](int i) const { return levels[i]; }
};

template <class T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int cin = 3;
    for (int level = 0; level < kPyramidLevels; ++level) {
      std::vector<Layer> layers;
      for (int d = 0; d < cfg_.depths[level]; ++d) {
        Layer layer;
        layer.conv = Conv2d<T>(cin, cfg_.channels[level], 3, !cfg_.batch_norm, rng);
        if (cfg_.batch_norm) {
          layer.bn = BatchNorm2d<T>(cfg_.channels[level]);
          layer.bn.set_frozen(cfg_.freeze_bn_stats);
        }
        layers.push_back(std::move(layer));
        cin = cfg_.channels[level];
      }
      levels_[level] = std::move(layers);
    }
  }

  const BackboneConfig& config() const { return cfg_; }

  /// Standardizes `images` and runs the encoder.
  FeaturePyramid<T> extract(const RunContext& ctx, const ImageBatch<T>& images) {
    validate_image_batch(images);
    Var<T> x(normalize(images));
    FeaturePyramid<T> out;
    for (int level = 0; level < kPyramidLevels; ++level) {
      if (level > 0) x = ops::max_pool2(x);
      for (auto& layer : levels_[level]) {
        x = layer.conv(x);
        if (cfg_.batch_norm) x = layer.bn(ctx, x);
        x = ops::relu(x);
      }
      out.levels[level] = x;
    }
    return out;
  }

  /// Parameter names follow `<prefix>.level<i>.<j>.conv.weight`, `.conv.bias`
  /// (without normalization) and `.bn.{weight,bias,running_mean,running_var}`.
  void collect(const std::string& prefix, ParameterSet<T>& set) {
    for (int level = 0; level < kPyramidLevels; ++level) {
      for (std::size_t j = 0; j < levels_[level].size(); ++j) {
        const std::string base = join_name(prefix, "level" + std::to_string(level) + "." + std::to_string(j));
        levels_[level][j].conv.collect(join_name(base, "conv"), set);
        if (cfg_.batch_norm) levels_[level][j].bn.collect(join_name(base, "bn"), set);
      }
    }
  }

 private:
  struct Layer {
    Conv2d<T> conv;
    BatchNorm2d<T> bn;
  };

  Tensor<T> normalize(const ImageBatch<T>& images) const {
    Tensor<T> out(images.shape());
    const std::size_t plane = images.shape().plane();
    for (int n = 0; n < images.n(); ++n) {
      for (int c = 0; c < 3; ++c) {
        const T* src = images.plane(n, c);
        T* dst = out.plane(n, c);
        const T m = static_cast<T>(cfg_.mean[c]);
        const T inv = static_cast<T>(1.0 / cfg_.std[c]);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - m) * inv;
      }
    }
    return out;
  }

  BackboneConfig cfg_;
  std::array<std::vector<Layer>, kPyramidLevels> levels_;
};

}  // namespace minetlab
