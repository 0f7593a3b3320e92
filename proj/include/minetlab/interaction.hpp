#pragma once

// Aggregate interaction (AIM), self interaction (SIM) and fusion units (FU).
// All three follow the same pattern: transform each input into a branch,
// let the branches exchange information across resolutions, then fuse.

#include <optional>
#include <string>

#include "minetlab/errors.hpp"
#include "minetlab/feature_extractor.hpp"
#include "minetlab/nn.hpp"

namespace minetlab {

enum class DownsampleMode { average, max };

inline DownsampleMode parse_downsample_mode(const std::string& s) {
  if (s == "average") return DownsampleMode::average;
  if (s == "max") return DownsampleMode::max;
  throw ConfigError("unknown downsample mode '" + s + "' (expected average or max)");
}
inline std::string to_string(DownsampleMode m) { return m == DownsampleMode::average ? "average" : "max"; }

template <class T>
Var<T> downsample2(const Var<T>& x, DownsampleMode mode) {
  return mode == DownsampleMode::average ? ops::avg_pool2(x) : ops::max_pool2(x);
}

/// Output channel count of the AIM at pyramid level `i`.
inline int aim_channels(int level) { return level == 0 ? 32 : 64; }

/// Fusion unit: 3x3 convolution, batch normalization, ReLU.
template <class T>
class FusionUnit {
 public:
  FusionUnit() = default;
  FusionUnit(int cin, int cout, Rng& rng) : body_(cin, cout, 3, rng) {}

  Var<T> operator()(const RunContext& ctx, const Var<T>& x) {
    if (x.shape().c != body_.in_channels()) {
      throw ShapeError("fusion unit expects " + std::to_string(body_.in_channels()) + " channels, got " +
                       std::to_string(x.shape().c));
    }
    return body_(ctx, x);
  }

  int in_channels() const { return body_.in_channels(); }
  int out_channels() const { return body_.out_channels(); }
  ConvBnRelu<T>& body() { return body_; }
  void collect(const std::string& prefix, ParameterSet<T>& set) { body_.collect(prefix, set); }

 private:
  ConvBnRelu<T> body_;
};

/// Aggregate interaction module for pyramid level `i`.
///
/// Branches: B0 holds level i-1 (twice the resolution), B1 level i, B2 level
/// i+1 (half the resolution). Level 0 has no B0 and level 4 no B2.
///
///   t_j   = CBR(f_e^{i+j-1})                    transformation
///   b1    = t1 + conv(down(t0)) + conv(up(t2))  interaction
///   b0    = t0 + conv(up(t1)),  b2 = t2 + conv(down(t1))
///   u_j   = CBR(b_j), resampled to level i
///   f_AIM = relu(t1 + M(concat(u_j)))           fusion with residual
///
/// t1 doubles as the identity path I(f_e^i): it carries f_e^i at the output
/// channel width so the residual sum is well typed.
template <class T>
class AggregateInteraction {
 public:
  AggregateInteraction() = default;
  AggregateInteraction(int level, std::optional<int> cin_lower, int cin_curr, std::optional<int> cin_higher,
                       int cout, DownsampleMode down, Rng& rng)
      : level_(level), down_(down) {
    if (level < 0 || level >= kPyramidLevels) throw ConfigError("AIM level out of range: " + std::to_string(level));
    if (cin_lower.has_value() != (level > 0)) throw ConfigError("AIM level " + std::to_string(level) + ": lower-neighbour channel count must be given iff level > 0");
    if (cin_higher.has_value() != (level < kPyramidLevels - 1)) throw ConfigError("AIM level " + std::to_string(level) + ": higher-neighbour channel count must be given iff level < 4");
    trans_curr_ = ConvBnRelu<T>(cin_curr, cout, 3, rng);
    branch_curr_ = ConvBnRelu<T>(cout, cout, 3, rng);
    int branches = 1;
    if (cin_lower) {
      trans_lower_ = ConvBnRelu<T>(*cin_lower, cout, 3, rng);
      lower_to_curr_ = Conv2d<T>(cout, cout, 3, false, rng);
      curr_to_lower_ = Conv2d<T>(cout, cout, 3, false, rng);
      branch_lower_ = ConvBnRelu<T>(cout, cout, 3, rng);
      ++branches;
    }
    if (cin_higher) {
      trans_higher_ = ConvBnRelu<T>(*cin_higher, cout, 3, rng);
      higher_to_curr_ = Conv2d<T>(cout, cout, 3, false, rng);
      curr_to_higher_ = Conv2d<T>(cout, cout, 3, false, rng);
      branch_higher_ = ConvBnRelu<T>(cout, cout, 3, rng);
      ++branches;
    }
    merge_ = Conv2d<T>(branches * cout, cout, 3, true, rng);
    branch_count_ = branches;
  }

  int level() const { return level_; }
  int branch_count() const { return branch_count_; }
  int out_channels() const { return merge_.out_channels(); }
  Conv2d<T>& merge() { return merge_; }

  /// I(f_e^i) alone.
  Var<T> identity_path(const RunContext& ctx, const Var<T>& f_curr) { return trans_curr_(ctx, f_curr); }

  Var<T> operator()(const RunContext& ctx, const Var<T>* f_lower, const Var<T>& f_curr, const Var<T>* f_higher) {
    check_inputs(f_lower, f_curr, f_higher);
    const Var<T> t1 = trans_curr_(ctx, f_curr);
    std::optional<Var<T>> t0, t2;
    if (f_lower) t0 = trans_lower_(ctx, *f_lower);
    if (f_higher) t2 = trans_higher_(ctx, *f_higher);

    std::vector<Var<T>> into_curr{t1};
    if (t0) into_curr.push_back(lower_to_curr_(downsample2(*t0, down_)));
    if (t2) into_curr.push_back(higher_to_curr_(ops::upsample_nearest2(*t2)));
    const Var<T> b1 = ops::sum(into_curr);

    std::vector<Var<T>> fused;
    if (t0) {
      const Var<T> b0 = ops::add(*t0, curr_to_lower_(ops::upsample_nearest2(t1)));
      fused.push_back(downsample2(branch_lower_(ctx, b0), down_));
    }
    fused.push_back(branch_curr_(ctx, b1));
    if (t2) {
      const Var<T> b2 = ops::add(*t2, curr_to_higher_(downsample2(t1, down_)));
      fused.push_back(ops::upsample_nearest2(branch_higher_(ctx, b2)));
    }
    return ops::relu(ops::add(t1, merge_(ops::concat_channels(fused))));
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) {
    trans_curr_.collect(join_name(prefix, "trans_curr"), set);
    if (branch_lower_present()) {
      trans_lower_.collect(join_name(prefix, "trans_lower"), set);
      lower_to_curr_.collect(join_name(prefix, "lower_to_curr"), set);
      curr_to_lower_.collect(join_name(prefix, "curr_to_lower"), set);
      branch_lower_.collect(join_name(prefix, "branch_lower"), set);
    }
    if (branch_higher_present()) {
      trans_higher_.collect(join_name(prefix, "trans_higher"), set);
      higher_to_curr_.collect(join_name(prefix, "higher_to_curr"), set);
      curr_to_higher_.collect(join_name(prefix, "curr_to_higher"), set);
      branch_higher_.collect(join_name(prefix, "branch_higher"), set);
    }
    branch_curr_.collect(join_name(prefix, "branch_curr"), set);
    merge_.collect(join_name(prefix, "merge"), set);
  }

 private:
  bool branch_lower_present() const { return level_ > 0; }
  bool branch_higher_present() const { return level_ < kPyramidLevels - 1; }

  void check_inputs(const Var<T>* f_lower, const Var<T>& f_curr, const Var<T>* f_higher) const {
    const std::string who = "AIM level " + std::to_string(level_);
    if ((f_lower != nullptr) != branch_lower_present()) {
      throw ShapeError(who + (f_lower ? ": unexpected lower-level input" : ": missing lower-level input"));
    }
    if ((f_higher != nullptr) != branch_higher_present()) {
      throw ShapeError(who + (f_higher ? ": unexpected higher-level input" : ": missing higher-level input"));
    }
    const Shape& c = f_curr.shape();
    if (f_lower) {
      const Shape& l = f_lower->shape();
      if (l.n != c.n || l.h != 2 * c.h || l.w != 2 * c.w) {
        throw ShapeError(who + ": lower-level input " + l.str() + " is not twice the resolution of " + c.str());
      }
    }
    if (f_higher) {
      const Shape& h = f_higher->shape();
      if (h.n != c.n || 2 * h.h != c.h || 2 * h.w != c.w) {
        throw ShapeError(who + ": higher-level input " + h.str() + " is not half the resolution of " + c.str());
      }
    }
  }

  int level_ = 0;
  int branch_count_ = 0;
  DownsampleMode down_ = DownsampleMode::average;
  ConvBnRelu<T> trans_lower_, trans_curr_, trans_higher_;
  Conv2d<T> lower_to_curr_, higher_to_curr_, curr_to_lower_, curr_to_higher_;
  ConvBnRelu<T> branch_lower_, branch_curr_, branch_higher_;
  Conv2d<T> merge_;
};

/// Self-interaction module on a decoder feature with C channels.
///
/// The high-resolution branch B0 keeps the input resolution with k channels;
/// the low-resolution branch B1 runs at half resolution with 2k channels
/// (k = C / high_divisor). After one exchange the low branch is upsampled,
/// normalized and rectified, and the merge FU maps the branch sum back to C:
///
///   f_SIM = f_add + M(B0(f_add) + B1(f_add))
template <class T>
class SelfInteraction {
 public:
  SelfInteraction() = default;
  SelfInteraction(int channels, int high_divisor, DownsampleMode down, Rng& rng) : channels_(channels), down_(down) {
    if (high_divisor < 1 || channels % high_divisor != 0) {
      throw ConfigError("SIM: " + std::to_string(channels) + " channels not divisible by " + std::to_string(high_divisor));
    }
    const int k = channels / high_divisor;
    high_in_ = ConvBnRelu<T>(channels, k, 3, rng);
    low_in_ = ConvBnRelu<T>(channels, 2 * k, 3, rng);
    high_to_high_ = Conv2d<T>(k, k, 3, false, rng);
    low_to_high_ = Conv2d<T>(2 * k, k, 3, false, rng);
    low_to_low_ = Conv2d<T>(2 * k, 2 * k, 3, false, rng);
    high_to_low_ = Conv2d<T>(k, 2 * k, 3, false, rng);
    high_bn_ = BatchNorm2d<T>(k);
    low_bn_ = BatchNorm2d<T>(2 * k);
    low_out_ = ConvBnRelu<T>(2 * k, k, 3, rng);
    merge_ = FusionUnit<T>(k, channels, rng);
  }

  int channels() const { return channels_; }
  FusionUnit<T>& merge() { return merge_; }

  Var<T> operator()(const RunContext& ctx, const Var<T>& f_add) {
    const Shape& s = f_add.shape();
    if (s.c != channels_) {
      throw ShapeError("SIM expects " + std::to_string(channels_) + " channels, got " + std::to_string(s.c));
    }
    if (s.h % 2 != 0 || s.w % 2 != 0) {
      throw ShapeError("SIM input must have even spatial size, got " + std::to_string(s.h) + "x" + std::to_string(s.w));
    }
    Var<T> high = high_in_(ctx, f_add);
    Var<T> low = low_in_(ctx, downsample2(f_add, down_));

    Var<T> high2 = ops::relu(high_bn_(ctx, ops::add(high_to_high_(high), low_to_high_(ops::upsample_nearest2(low)))));
    Var<T> low2 = ops::relu(low_bn_(ctx, ops::add(low_to_low_(low), high_to_low_(downsample2(high, down_)))));

    Var<T> low_up = low_out_(ctx, ops::upsample_nearest2(low2));
    return ops::add(f_add, merge_(ctx, ops::add(high2, low_up)));
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) {
    high_in_.collect(join_name(prefix, "high_in"), set);
    low_in_.collect(join_name(prefix, "low_in"), set);
    high_to_high_.collect(join_name(prefix, "high_to_high"), set);
    low_to_high_.collect(join_name(prefix, "low_to_high"), set);
    low_to_low_.collect(join_name(prefix, "low_to_low"), set);
    high_to_low_.collect(join_name(prefix, "high_to_low"), set);
    high_bn_.collect(join_name(prefix, "high_bn"), set);
    low_bn_.collect(join_name(prefix, "low_bn"), set);
    low_out_.collect(join_name(prefix, "low_out"), set);
    merge_.collect(join_name(prefix, "merge"), set);
  }

 private:
  int channels_ = 0;
  DownsampleMode down_ = DownsampleMode::average;
  ConvBnRelu<T> high_in_, low_in_;
  Conv2d<T> high_to_high_, low_to_high_, low_to_low_, high_to_low_;
  BatchNorm2d<T> high_bn_, low_bn_;
  ConvBnRelu<T> low_out_;
  FusionUnit<T> merge_;
};

}  // namespace minetlab
