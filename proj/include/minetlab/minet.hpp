#pragma once

// The full encoder / AIM / SIM / FU network and its ablation variants.
//
// Top-down recursion:
//   f_add^4 = f_AIM^4
//   f_add^i = f_AIM^i + U(F^{i+1}(f_SIM^{i+1}))     i = 3..0
//   f_SIM^i = SIM^i(f_add^i)
//   P       = sigmoid(conv(F^0(f_SIM^0)))
//
// With AIMs disabled, each level gets a 1x1 lateral projection instead; with
// SIMs disabled, f_SIM^i = f_add^i.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>

#include "minetlab/errors.hpp"
#include "minetlab/feature_extractor.hpp"
#include "minetlab/interaction.hpp"
#include "minetlab/losses.hpp"

namespace minetlab {

enum class UpsampleMode { bilinear, nearest };

inline UpsampleMode parse_upsample_mode(const std::string& s) {
  if (s == "bilinear") return UpsampleMode::bilinear;
  if (s == "nearest") return UpsampleMode::nearest;
  throw ConfigError("unknown upsample mode '" + s + "' (expected bilinear or nearest)");
}
inline std::string to_string(UpsampleMode m) { return m == UpsampleMode::bilinear ? "bilinear" : "nearest"; }

struct ModelConfig {
  BackboneConfig backbone;
  std::array<int, kPyramidLevels> widths{32, 64, 64, 64, 64};
  UpsampleMode decoder_upsample = UpsampleMode::bilinear;
  DownsampleMode downsample = DownsampleMode::average;
  int sim_high_divisor = 2;
  bool use_aim = true;
  bool use_sim = true;
  std::uint64_t init_seed = 0;

  void validate() const {
    backbone.validate();
    for (int i = 0; i < kPyramidLevels; ++i) {
      if (widths[i] != aim_channels(i)) {
        throw ConfigError("decoder width must be " + std::to_string(aim_channels(i)),
                          "model.widths[" + std::to_string(i) + "]");
      }
      if (widths[i] % sim_high_divisor != 0) {
        throw ConfigError("width not divisible by sim_high_divisor", "model.widths[" + std::to_string(i) + "]");
      }
    }
    if (sim_high_divisor < 1) throw ConfigError("must be at least 1", "model.sim_high_divisor");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Probability map, N x 1 x H x W, every value strictly inside (0, 1).
template <class T>
using SaliencyPrediction = Var<T>;

template <class T>
struct DecoderState {
  std::array<Var<T>, kPyramidLevels> f_aim;
  std::array<Var<T>, kPyramidLevels> f_add;
  std::array<Var<T>, kPyramidLevels> f_sim;
};

template <class T>
class MINet {
 public:
  explicit MINet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    backbone_ = Backbone<T>(cfg_.backbone, rng);
    const auto& ch = cfg_.backbone.channels;
    for (int i = 0; i < kPyramidLevels; ++i) {
      if (cfg_.use_aim) {
        std::optional<int> lower = i > 0 ? std::optional<int>(ch[i - 1]) : std::nullopt;
        std::optional<int> higher = i < kPyramidLevels - 1 ? std::optional<int>(ch[i + 1]) : std::nullopt;
        aims_[i] = AggregateInteraction<T>(i, lower, ch[i], higher, cfg_.widths[i], cfg_.downsample, rng);
      } else {
        laterals_[i] = ConvBnRelu<T>(ch[i], cfg_.widths[i], 1, rng);
      }
    }
    for (int i = 0; i < kPyramidLevels; ++i) {
      if (cfg_.use_sim) sims_[i] = SelfInteraction<T>(cfg_.widths[i], cfg_.sim_high_divisor, cfg_.downsample, rng);
      const int out = i == 0 ? cfg_.widths[0] : cfg_.widths[i - 1];
      fus_[i] = FusionUnit<T>(cfg_.widths[i], out, rng);
    }
    head_ = Conv2d<T>(cfg_.widths[0], 1, 3, true, rng);
  }

  MINet(const MINet&) = delete;
  MINet& operator=(const MINet&) = delete;

  const ModelConfig& config() const { return cfg_; }

  SaliencyPrediction<T> forward(const RunContext& ctx, const ImageBatch<T>& images) {
    return run(ctx, images, nullptr);
  }

  std::pair<SaliencyPrediction<T>, DecoderState<T>> forward_with_state(const RunContext& ctx,
                                                                       const ImageBatch<T>& images) {
    DecoderState<T> state;
    auto p = run(ctx, images, &state);
    return {std::move(p), std::move(state)};
  }

  /// Every parameter and buffer. Names are stable and documented in the
  /// README; the set must be rebuilt after the model is moved.
  ParameterSet<T> parameters() {
    ParameterSet<T> set;
    backbone_.collect("backbone", set);
    for (int i = 0; i < kPyramidLevels; ++i) {
      const std::string idx = std::to_string(i);
      if (cfg_.use_aim) {
        aims_[i].collect("aim" + idx, set);
      } else {
        laterals_[i].collect("lateral" + idx, set);
      }
      if (cfg_.use_sim) sims_[i].collect("sim" + idx, set);
      fus_[i].collect("fu" + idx, set);
    }
    head_.collect("head", set);
    return set;
  }

  /// Optional weight-loading hook: copies matching named tensors into the
  /// model (backbone-only maps are typical with `strict = false`).
  template <class U>
  std::size_t load_named_parameters(const std::map<std::string, Tensor<U>>& named, bool strict) {
    auto set = parameters();
    return assign_named(set, named, strict);
  }

  Backbone<T>& backbone() { return backbone_; }
  AggregateInteraction<T>& aim(int i) { return aims_.at(i); }
  SelfInteraction<T>& sim(int i) { return sims_.at(i); }
  FusionUnit<T>& fu(int i) { return fus_.at(i); }

 private:
  Var<T> upsample(const Var<T>& x) const {
    return cfg_.decoder_upsample == UpsampleMode::bilinear ? ops::upsample_bilinear2(x) : ops::upsample_nearest2(x);
  }

  SaliencyPrediction<T> run(const RunContext& ctx, const ImageBatch<T>& images, DecoderState<T>* state) {
    // Every SIM halves its input, including the stride-16 level.
    if (cfg_.use_sim && (images.h() % 32 != 0 || images.w() % 32 != 0)) {
      const bool bad_h = images.h() % 32 != 0;
      throw ShapeError(std::string("image ") + (bad_h ? "height " : "width ") +
                       std::to_string(bad_h ? images.h() : images.w()) +
                       " gives an odd stride-16 feature map; models with SIMs need multiples of 32");
    }
    const FeaturePyramid<T> pyr = backbone_.extract(ctx, images);
    std::array<Var<T>, kPyramidLevels> f_aim;
    for (int i = 0; i < kPyramidLevels; ++i) {
      if (cfg_.use_aim) {
        const Var<T>* lower = i > 0 ? &pyr.levels[i - 1] : nullptr;
        const Var<T>* higher = i < kPyramidLevels - 1 ? &pyr.levels[i + 1] : nullptr;
        f_aim[i] = aims_[i](ctx, lower, pyr.levels[i], higher);
      } else {
        f_aim[i] = laterals_[i](ctx, pyr.levels[i]);
      }
    }
    Var<T> x;
    for (int i = kPyramidLevels - 1; i >= 0; --i) {
      Var<T> f_add = i == kPyramidLevels - 1 ? f_aim[i] : ops::add(f_aim[i], upsample(x));
      Var<T> f_sim = cfg_.use_sim ? sims_[i](ctx, f_add) : f_add;
      if (state) {
        state->f_aim[i] = f_aim[i];
        state->f_add[i] = f_add;
        state->f_sim[i] = f_sim;
      }
      x = fus_[i](ctx, f_sim);
    }
    const T eps = static_cast<T>(losses::kProbEpsilon);
    return ops::clamp(ops::sigmoid(head_(x)), eps, T(1) - eps);
  }

  ModelConfig cfg_;
  Backbone<T> backbone_;
  std::array<AggregateInteraction<T>, kPyramidLevels> aims_;
  std::array<ConvBnRelu<T>, kPyramidLevels> laterals_;
  std::array<SelfInteraction<T>, kPyramidLevels> sims_;
  std::array<FusionUnit<T>, kPyramidLevels> fus_;
  Conv2d<T> head_;
};

/// The FPN-like baseline: 1x1 laterals instead of AIMs, no SIMs.
inline ModelConfig baseline_config(ModelConfig cfg) {
  cfg.use_aim = false;
  cfg.use_sim = false;
  return cfg;
}

template <class T>
std::unique_ptr<MINet<T>> build_baseline(const ModelConfig& cfg) {
  return std::make_unique<MINet<T>>(baseline_config(cfg));
}

}  // namespace minetlab
