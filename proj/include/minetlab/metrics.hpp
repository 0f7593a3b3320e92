#pragma once

// Saliency evaluation: PR / F-measure curves, F_max, F_avg (adaptive
// threshold), MAE, S-measure, E-measure and weighted F-measure.
//
// Conventions shared by every thresholded measure:
//   * predictions are min-max normalized per image (when configured and the
//     map is not constant);
//   * threshold k of T is t_k = k / T, k = 0..T-1, and a pixel is positive
//     iff pred > t_k. With T = 256 every 8-bit code level is separated, and a
//     binary {0,1} map binarizes to itself at every threshold;
//   * precision of an empty positive set is 1 (recall is then 0, so F = 0).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "minetlab/errors.hpp"

namespace minetlab::metrics {

/// Matches MATLAB's eps, used by the reference formulas as a guard.
inline constexpr double kEps = std::numeric_limits<double>::epsilon();
/// Keeps the adaptive threshold strictly below 1 so saturated pixels still
/// count as positive.
inline constexpr double kAdaptiveCeiling = 1.0 - 1e-6;

struct MetricConfig {
  double beta_sq = 0.3;
  double alpha = 0.5;
  int threshold_count = 256;
  double adaptive_factor = 2.0;
  // beta^2 of the weighted F-measure; its reference definition uses 1.
  double weighted_beta_sq = 1.0;
  bool normalize = true;

  void validate() const {
    if (!(beta_sq > 0)) throw ConfigError("must be positive", "metrics.beta_sq");
    if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("must lie in [0,1]", "metrics.alpha");
    if (threshold_count < 2) throw ConfigError("must be at least 2", "metrics.threshold_count");
    if (!(adaptive_factor > 0)) throw ConfigError("must be positive", "metrics.adaptive_factor");
    if (!(weighted_beta_sq > 0)) throw ConfigError("must be positive", "metrics.weighted_beta_sq");
  }
  friend bool operator==(const MetricConfig&, const MetricConfig&) = default;
};

/// Single-channel image of doubles, row-major.
struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  GrayImage() = default;
  GrayImage(int height, int width, double fill = 0.0)
      : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {}
  GrayImage(int height, int width, std::vector<double> values) : h(height), w(width), v(std::move(values)) {
    if (v.size() != static_cast<std::size_t>(h) * w) throw ShapeError("GrayImage: value count does not match size");
  }

  std::size_t size() const { return v.size(); }
  double& operator()(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double operator()(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

namespace detail {

inline void check_pair(const GrayImage& pred, const GrayImage& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw ShapeError("prediction is " + std::to_string(pred.h) + "x" + std::to_string(pred.w) + " but ground truth is " +
                     std::to_string(gt.h) + "x" + std::to_string(gt.w));
  }
  for (double g : gt.v) {
    if (g != 0.0 && g != 1.0) throw ShapeError("ground truth must be binary");
  }
  for (double p : pred.v) {
    if (!(p >= 0.0 && p <= 1.0)) throw ShapeError("prediction values must lie in [0,1]");
  }
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double precision_of(std::size_t tp, std::size_t fp) {
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}
inline double recall_of(std::size_t tp, std::size_t fn) {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

// Number of thresholds k/T (k in [0,T)) lying strictly below v, i.e. the
// number of thresholds at which v is positive.
inline int positive_threshold_count(double v, int t) {
  int b = static_cast<int>(std::ceil(v * t));
  b = std::clamp(b, 0, t);
  while (b > 0 && !(v > static_cast<double>(b - 1) / t)) --b;
  while (b < t && v > static_cast<double>(b) / t) ++b;
  return b;
}

}  // namespace detail

/// Min-max normalization; constant maps are returned unchanged.
inline GrayImage normalize_prediction(GrayImage pred) {
  if (pred.v.empty()) return pred;
  const auto [lo, hi] = std::minmax_element(pred.v.begin(), pred.v.end());
  const double mn = *lo, mx = *hi;
  if (mx > mn) {
    for (double& x : pred.v) x = (x - mn) / (mx - mn);
  }
  return pred;
}

inline GrayImage prepare(const GrayImage& pred, const MetricConfig& cfg) {
  return cfg.normalize ? normalize_prediction(pred) : pred;
}

inline double threshold_at(int k, const MetricConfig& cfg) {
  return static_cast<double>(k) / cfg.threshold_count;
}

/// Confusion counts at a single threshold (positive iff pred > threshold).
inline Confusion confusion(const GrayImage& pred, const GrayImage& gt, double threshold) {
  detail::check_pair(pred, gt);
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool pos = pred.v[i] > threshold;
    const bool fg = gt.v[i] == 1.0;
    if (pos && fg) ++c.tp;
    else if (pos) ++c.fp;
    else if (fg) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// True-positive and predicted-positive counts at every threshold, computed
/// from a histogram of per-pixel positive-threshold counts and suffix sums.
struct ThresholdCounts {
  std::vector<std::size_t> tp;
  std::vector<std::size_t> positives;
  std::size_t foreground = 0;
  std::size_t total = 0;
};

inline ThresholdCounts threshold_counts(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  detail::check_pair(pred, gt);
  const int t = cfg.threshold_count;
  std::vector<std::size_t> fg_hist(t + 1, 0), all_hist(t + 1, 0);
  ThresholdCounts out;
  out.total = pred.size();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int b = detail::positive_threshold_count(pred.v[i], t);
    ++all_hist[b];
    if (gt.v[i] == 1.0) {
      ++fg_hist[b];
      ++out.foreground;
    }
  }
  // A pixel with count b is positive at thresholds 0..b-1.
  out.tp.assign(t, 0);
  out.positives.assign(t, 0);
  std::size_t tp = 0, pos = 0;
  for (int k = t - 1; k >= 0; --k) {
    tp += fg_hist[k + 1];
    pos += all_hist[k + 1];
    out.tp[k] = tp;
    out.positives[k] = pos;
  }
  return out;
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
inline double f_measure(double precision, double recall, double beta_sq) {
  const double denom = beta_sq * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / denom;
}

inline double f_measure(const PrPoint& pr, const MetricConfig& cfg) {
  return f_measure(pr.precision, pr.recall, cfg.beta_sq);
}

/// Per-image PR curve, one point per threshold (input already prepared).
inline std::vector<PrPoint> pr_curve_prepared(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  const ThresholdCounts tc = threshold_counts(pred, gt, cfg);
  std::vector<PrPoint> curve(cfg.threshold_count);
  for (int k = 0; k < cfg.threshold_count; ++k) {
    const std::size_t fp = tc.positives[k] - tc.tp[k];
    const std::size_t fn = tc.foreground - tc.tp[k];
    curve[k] = {detail::precision_of(tc.tp[k], fp), detail::recall_of(tc.tp[k], fn)};
  }
  return curve;
}

inline std::vector<PrPoint> pr_curve(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  return pr_curve_prepared(prepare(pred, cfg), gt, cfg);
}

/// Dataset PR curve: per-threshold mean of the per-image precision and recall.
inline std::vector<PrPoint> pr_curve(const std::vector<GrayImage>& preds, const std::vector<GrayImage>& gts,
                                     const MetricConfig& cfg) {
  if (preds.size() != gts.size()) throw ShapeError("pr_curve: prediction and ground-truth counts differ");
  std::vector<PrPoint> acc(cfg.threshold_count);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto c = pr_curve(preds[i], gts[i], cfg);
    for (int k = 0; k < cfg.threshold_count; ++k) {
      acc[k].precision += c[k].precision;
      acc[k].recall += c[k].recall;
    }
  }
  if (!preds.empty()) {
    for (auto& p : acc) {
      p.precision /= static_cast<double>(preds.size());
      p.recall /= static_cast<double>(preds.size());
    }
  }
  return acc;
}

inline std::vector<double> fm_curve(const std::vector<PrPoint>& pr, const MetricConfig& cfg) {
  std::vector<double> out(pr.size());
  for (std::size_t k = 0; k < pr.size(); ++k) out[k] = f_measure(pr[k], cfg);
  return out;
}

inline double f_max(const std::vector<GrayImage>& preds, const std::vector<GrayImage>& gts, const MetricConfig& cfg) {
  const auto f = fm_curve(pr_curve(preds, gts, cfg), cfg);
  return f.empty() ? 0.0 : *std::max_element(f.begin(), f.end());
}

/// min(adaptive_factor * mean(pred), 1 - 1e-6).
inline double adaptive_threshold(const GrayImage& pred, const MetricConfig& cfg) {
  return std::min(cfg.adaptive_factor * detail::mean(pred.v), kAdaptiveCeiling);
}

/// F-measure at the adaptive threshold of one image (input already prepared).
inline double f_adaptive_prepared(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  const Confusion c = confusion(pred, gt, adaptive_threshold(pred, cfg));
  return f_measure(detail::precision_of(c.tp, c.fp), detail::recall_of(c.tp, c.fn), cfg.beta_sq);
}

inline double f_adaptive(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  return f_adaptive_prepared(prepare(pred, cfg), gt, cfg);
}

inline double f_avg(const std::vector<GrayImage>& preds, const std::vector<GrayImage>& gts, const MetricConfig& cfg) {
  if (preds.size() != gts.size()) throw ShapeError("f_avg: prediction and ground-truth counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += f_adaptive(preds[i], gts[i], cfg);
  return preds.empty() ? 0.0 : s / static_cast<double>(preds.size());
}

/// Mean absolute difference. Takes the prediction as given (no normalization).
inline double mae(const GrayImage& pred, const GrayImage& gt) {
  detail::check_pair(pred, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.v[i] - gt.v[i]);
  return pred.v.empty() ? 0.0 : s / static_cast<double>(pred.size());
}

inline double mae(const std::vector<GrayImage>& preds, const std::vector<GrayImage>& gts) {
  if (preds.size() != gts.size()) throw ShapeError("mae: prediction and ground-truth counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += mae(preds[i], gts[i]);
  return preds.empty() ? 0.0 : s / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// S-measure: alpha * S_object + (1 - alpha) * S_region.

namespace detail {

// 2x / (x^2 + 1 + sigma_x + eps) over the pixels where mask == 1.
inline double object_similarity(const std::vector<double>& values, const GrayImage& mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask.v[i] == 1.0) {
      sum += values[i];
      ++n;
    }
  }
  if (n == 0) return 0.0;
  const double x = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask.v[i] == 1.0) sq += (values[i] - x) * (values[i] - x);
  }
  const double sigma = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

// Structural similarity of one block, as used by the region term.
inline double block_ssim(const GrayImage& pred, const GrayImage& gt, int y0, int y1, int x0, int x1) {
  const double n = static_cast<double>(y1 - y0) * (x1 - x0);
  double mx = 0.0, my = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      mx += pred(y, x);
      my += gt(y, x);
    }
  }
  mx /= n;
  my /= n;
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double dx = pred(y, x) - mx, dy = gt(y, x) - my;
      sx += dx * dx;
      sy += dy * dy;
      sxy += dx * dy;
    }
  }
  sx /= (n - 1 + kEps);
  sy /= (n - 1 + kEps);
  sxy /= (n - 1 + kEps);
  const double a = 4.0 * mx * my * sxy;
  const double b = (mx * mx + my * my) * (sx + sy);
  if (a != 0.0) return a / (b + kEps);
  if (b == 0.0) return 1.0;
  return 0.0;
}

// Half-away-from-zero rounding of the 1-based foreground centroid; the image
// centre when the mask is empty.
inline std::pair<int, int> centroid(const GrayImage& gt) {
  double sx = 0.0, sy = 0.0, n = 0.0;
  for (int y = 0; y < gt.h; ++y) {
    for (int x = 0; x < gt.w; ++x) {
      if (gt(y, x) == 1.0) {
        sx += x + 1;
        sy += y + 1;
        n += 1.0;
      }
    }
  }
  if (n == 0.0) return {static_cast<int>(std::round(gt.w / 2.0)), static_cast<int>(std::round(gt.h / 2.0))};
  return {static_cast<int>(std::round(sx / n)), static_cast<int>(std::round(sy / n))};
}

}  // namespace detail

/// Object-aware term: foreground and background similarity weighted by the
/// foreground fraction.
inline double s_object(const GrayImage& pred, const GrayImage& gt) {
  detail::check_pair(pred, gt);
  std::vector<double> fg(pred.size()), bg(pred.size());
  GrayImage bg_mask(gt.h, gt.w);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    fg[i] = gt.v[i] == 1.0 ? pred.v[i] : 0.0;
    bg[i] = gt.v[i] == 1.0 ? 0.0 : 1.0 - pred.v[i];
    bg_mask.v[i] = 1.0 - gt.v[i];
  }
  const double u = detail::mean(gt.v);
  return u * detail::object_similarity(fg, gt) + (1.0 - u) * detail::object_similarity(bg, bg_mask);
}

/// Region-aware term: area-weighted block SSIM over the four quadrants split
/// at the foreground centroid.
inline double s_region(const GrayImage& pred, const GrayImage& gt) {
  detail::check_pair(pred, gt);
  const auto [cx, cy] = detail::centroid(gt);
  const double area = static_cast<double>(gt.h) * gt.w;
  const std::array<std::array<int, 4>, 4> blocks{{
      {0, cy, 0, cx},
      {0, cy, cx, gt.w},
      {cy, gt.h, 0, cx},
      {cy, gt.h, cx, gt.w},
  }};
  double score = 0.0;
  for (const auto& b : blocks) {
    const double wgt = static_cast<double>(b[1] - b[0]) * (b[3] - b[2]) / area;
    if (wgt <= 0.0) continue;
    score += wgt * detail::block_ssim(pred, gt, b[0], b[1], b[2], b[3]);
  }
  return score;
}

/// Structure measure (input already prepared). All-background ground truth
/// scores 1 - mean(pred); all-foreground scores mean(pred).
inline double s_measure_prepared(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  detail::check_pair(pred, gt);
  const double y = detail::mean(gt.v);
  if (y == 0.0) return 1.0 - detail::mean(pred.v);
  if (y == 1.0) return detail::mean(pred.v);
  const double q = cfg.alpha * s_object(pred, gt) + (1.0 - cfg.alpha) * s_region(pred, gt);
  return std::clamp(q, 0.0, 1.0);
}

inline double s_measure(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  return s_measure_prepared(prepare(pred, cfg), gt, cfg);
}

// ---------------------------------------------------------------------------
// E-measure (enhanced alignment) of a binarized prediction.

/// E-measure of the map binarized at `threshold`, averaged over all pixels.
/// Depends only on the four confusion counts.
inline double e_measure_from_counts(const Confusion& c) {
  const double n = static_cast<double>(c.tp + c.fp + c.fn + c.tn);
  if (n == 0.0) return 0.0;
  const double gt_fg = static_cast<double>(c.tp + c.fn);
  const double pred_fg = static_cast<double>(c.tp + c.fp);
  if (gt_fg == 0.0) return static_cast<double>(c.fn + c.tn) / n;  // predicted background count
  if (gt_fg == n) return pred_fg / n;
  const double mp = pred_fg / n, mg = gt_fg / n;
  auto enhanced = [](double a, double b) {
    const double align = 2.0 * a * b / (a * a + b * b + kEps);
    return (align + 1.0) * (align + 1.0) / 4.0;
  };
  const double sum = static_cast<double>(c.tp) * enhanced(1.0 - mp, 1.0 - mg) +
                     static_cast<double>(c.fp) * enhanced(1.0 - mp, -mg) +
                     static_cast<double>(c.fn) * enhanced(-mp, 1.0 - mg) +
                     static_cast<double>(c.tn) * enhanced(-mp, -mg);
  return sum / n;
}

inline double e_measure_at(const GrayImage& pred, const GrayImage& gt, double threshold) {
  return e_measure_from_counts(confusion(pred, gt, threshold));
}

/// E-measure at every sweep threshold (input already prepared).
inline std::vector<double> e_measure_curve_prepared(const GrayImage& pred, const GrayImage& gt,
                                                    const MetricConfig& cfg) {
  const ThresholdCounts tc = threshold_counts(pred, gt, cfg);
  std::vector<double> out(cfg.threshold_count);
  for (int k = 0; k < cfg.threshold_count; ++k) {
    Confusion c;
    c.tp = tc.tp[k];
    c.fp = tc.positives[k] - tc.tp[k];
    c.fn = tc.foreground - tc.tp[k];
    c.tn = tc.total - c.tp - c.fp - c.fn;
    out[k] = e_measure_from_counts(c);
  }
  return out;
}

struct EMeasureSummary {
  double mean = 0.0;
  double max = 0.0;
  double adaptive = 0.0;
};

inline EMeasureSummary e_measure_summary_prepared(const GrayImage& pred, const GrayImage& gt,
                                                  const MetricConfig& cfg) {
  const auto curve = e_measure_curve_prepared(pred, gt, cfg);
  EMeasureSummary s;
  s.mean = detail::mean(curve);
  s.max = *std::max_element(curve.begin(), curve.end());
  s.adaptive = e_measure_at(pred, gt, adaptive_threshold(pred, cfg));
  return s;
}

/// Reported E-measure: mean over the threshold sweep.
inline double e_measure(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  return e_measure_summary_prepared(prepare(pred, cfg), gt, cfg).mean;
}

// ---------------------------------------------------------------------------
// Weighted F-measure.

namespace detail {

// Exact Euclidean distance transform to the nearest foreground pixel, with the
// index of that pixel (separable lower-envelope algorithm).
struct DistanceField {
  std::vector<double> dist;
  std::vector<std::size_t> nearest;
};

inline DistanceField distance_to_foreground(const GrayImage& gt) {
  const int h = gt.h, w = gt.w;
  const double inf = std::numeric_limits<double>::infinity();
  // Column pass: squared vertical distance and row of the nearest fg pixel.
  std::vector<double> g(static_cast<std::size_t>(h) * w, inf);
  std::vector<int> grow(static_cast<std::size_t>(h) * w, -1);
  for (int x = 0; x < w; ++x) {
    int last = -1;
    for (int y = 0; y < h; ++y) {
      if (gt(y, x) == 1.0) last = y;
      if (last >= 0) {
        g[static_cast<std::size_t>(y) * w + x] = static_cast<double>(y - last) * (y - last);
        grow[static_cast<std::size_t>(y) * w + x] = last;
      }
    }
    last = -1;
    for (int y = h - 1; y >= 0; --y) {
      if (gt(y, x) == 1.0) last = y;
      if (last >= 0) {
        const double d = static_cast<double>(last - y) * (last - y);
        auto& cur = g[static_cast<std::size_t>(y) * w + x];
        if (d < cur) {
          cur = d;
          grow[static_cast<std::size_t>(y) * w + x] = last;
        }
      }
    }
  }
  DistanceField out;
  out.dist.assign(static_cast<std::size_t>(h) * w, inf);
  out.nearest.assign(static_cast<std::size_t>(h) * w, 0);
  // Row pass: lower envelope of parabolas (x - q)^2 + g(q).
  std::vector<int> v(w);
  std::vector<double> z(w + 1);
  for (int y = 0; y < h; ++y) {
    const double* f = g.data() + static_cast<std::size_t>(y) * w;
    int k = -1;
    for (int q = 0; q < w; ++q) {
      if (!std::isfinite(f[q])) continue;
      while (k >= 0) {
        const int p = v[k];
        const double s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
        if (s <= z[k]) {
          --k;
        } else {
          break;
        }
      }
      ++k;
      v[k] = q;
      z[k] = k == 0 ? -inf : ((f[q] + q * q) - (f[v[k - 1]] + v[k - 1] * v[k - 1])) / (2.0 * (q - v[k - 1]));
      z[k + 1] = inf;
    }
    if (k < 0) continue;
    int j = 0;
    for (int x = 0; x < w; ++x) {
      while (z[j + 1] < x) ++j;
      const int q = v[j];
      const double d2 = static_cast<double>(x - q) * (x - q) + f[q];
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      out.dist[idx] = std::sqrt(d2);
      out.nearest[idx] = static_cast<std::size_t>(grow[static_cast<std::size_t>(y) * w + q]) * w + q;
    }
  }
  return out;
}

// Normalized 7x7 Gaussian, sigma 5, zero-padded correlation.
inline GrayImage gaussian_filter7(const GrayImage& in) {
  constexpr int r = 3;
  constexpr double sigma = 5.0;
  std::array<double, 2 * r + 1> k1{};
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    k1[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    s += k1[i + r];
  }
  for (auto& v : k1) v /= s;
  GrayImage tmp(in.h, in.w), out(in.h, in.w);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < in.w) acc += k1[d + r] * in(y, xx);
      }
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < in.h) acc += k1[d + r] * tmp(yy, x);
      }
      out(y, x) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Weighted F-measure (input already prepared). Errors on background pixels
/// are weighted up with their distance to the object, and each foreground
/// error may be relaxed to its Gaussian-smoothed neighbourhood error. An
/// all-background ground truth scores 1 - mean(pred).
inline double weighted_f_measure_prepared(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  detail::check_pair(pred, gt);
  const std::size_t n = pred.size();
  double fg_count = 0.0;
  for (double g : gt.v) fg_count += g;
  if (fg_count == 0.0) return 1.0 - detail::mean(pred.v);

  GrayImage err(pred.h, pred.w);
  for (std::size_t i = 0; i < n; ++i) err.v[i] = std::abs(pred.v[i] - gt.v[i]);
  const detail::DistanceField df = detail::distance_to_foreground(gt);
  GrayImage et = err;
  for (std::size_t i = 0; i < n; ++i) {
    if (gt.v[i] == 0.0) et.v[i] = err.v[df.nearest[i]];
  }
  const GrayImage ea = detail::gaussian_filter7(et);
  double tp_err = 0.0, fp_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (gt.v[i] == 1.0) {
      tp_err += std::min(err.v[i], ea.v[i]);
    } else {
      const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * df.dist[i]);
      fp_w += err.v[i] * importance;
    }
  }
  const double tp_w = fg_count - tp_err;
  const double recall = 1.0 - tp_err / fg_count;
  const double precision = tp_w / (kEps + tp_w + fp_w);
  const double b = cfg.weighted_beta_sq;
  return std::clamp((1.0 + b) * recall * precision / (kEps + recall + b * precision), 0.0, 1.0);
}

inline double weighted_f_measure(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  return weighted_f_measure_prepared(prepare(pred, cfg), gt, cfg);
}

// ---------------------------------------------------------------------------
// Per-image scores and dataset aggregation.

struct ImageScores {
  double mae = 0.0;
  double f_adaptive = 0.0;
  double f_w = 0.0;
  double s_m = 0.0;
  EMeasureSummary e;
  std::vector<PrPoint> pr;
};

inline ImageScores score_image(const GrayImage& pred, const GrayImage& gt, const MetricConfig& cfg) {
  detail::check_pair(pred, gt);
  const GrayImage p = prepare(pred, cfg);
  ImageScores s;
  s.mae = mae(p, gt);
  s.f_adaptive = f_adaptive_prepared(p, gt, cfg);
  s.f_w = weighted_f_measure_prepared(p, gt, cfg);
  s.s_m = s_measure_prepared(p, gt, cfg);
  s.e = e_measure_summary_prepared(p, gt, cfg);
  s.pr = pr_curve_prepared(p, gt, cfg);
  return s;
}

struct MetricReport {
  double f_max = 0.0;
  double f_avg = 0.0;
  double f_w = 0.0;
  double e_m = 0.0;
  double s_m = 0.0;
  double mae = 0.0;
  std::vector<PrPoint> pr_curve;
  std::vector<double> fm_curve;
  std::vector<ImageScores> per_image;
};

/// Combines per-image scores in index order, so the result does not depend on
/// how the scores were computed in parallel.
inline MetricReport aggregate(std::vector<ImageScores> scores, const MetricConfig& cfg) {
  MetricReport r;
  r.pr_curve.assign(cfg.threshold_count, PrPoint{});
  const double n = static_cast<double>(scores.size());
  if (scores.empty()) return r;
  for (const auto& s : scores) {
    r.mae += s.mae;
    r.f_avg += s.f_adaptive;
    r.f_w += s.f_w;
    r.s_m += s.s_m;
    r.e_m += s.e.mean;
    for (int k = 0; k < cfg.threshold_count; ++k) {
      r.pr_curve[k].precision += s.pr[k].precision;
      r.pr_curve[k].recall += s.pr[k].recall;
    }
  }
  r.mae /= n;
  r.f_avg /= n;
  r.f_w /= n;
  r.s_m /= n;
  r.e_m /= n;
  for (auto& p : r.pr_curve) {
    p.precision /= n;
    p.recall /= n;
  }
  r.fm_curve = fm_curve(r.pr_curve, cfg);
  r.f_max = *std::max_element(r.fm_curve.begin(), r.fm_curve.end());
  r.per_image = std::move(scores);
  return r;
}

/// Scores every pair on up to `threads` workers and aggregates.
inline MetricReport evaluate(const std::vector<GrayImage>& preds, const std::vector<GrayImage>& gts,
                             const MetricConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  if (preds.size() != gts.size()) throw ShapeError("evaluate: prediction and ground-truth counts differ");
  std::vector<ImageScores> scores(preds.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(preds.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < preds.size(); ++i) scores[i] = score_image(preds[i], gts[i], cfg);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < preds.size(); i += threads) scores[i] = score_image(preds[i], gts[i], cfg);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return aggregate(std::move(scores), cfg);
}

}  // namespace minetlab::metrics
