#include <gtest/gtest.h>

#include <cmath>

#include "minetlab/metrics.hpp"
#include "minetlab/rng.hpp"

namespace {

using namespace minetlab;
using namespace minetlab::metrics;

const MetricConfig kCfg{};

GrayImage random_pred(int h, int w, Rng& rng, bool quantized) {
  GrayImage p(h, w);
  for (double& v : p.v) v = quantized ? rng.uniform_int(0, 255) / 255.0 : rng.uniform();
  return p;
}

GrayImage mask_from_bits(unsigned bits, int h, int w) {
  GrayImage g(h, w);
  for (int i = 0; i < h * w; ++i) g.v[i] = (bits >> i) & 1u ? 1.0 : 0.0;
  return g;
}

GrayImage complement(const GrayImage& g) {
  GrayImage out = g;
  for (double& v : out.v) v = 1.0 - v;
  return out;
}

// Min-max normalization, written out independently of the library.
GrayImage oracle_normalize(const GrayImage& p) {
  double lo = p.v[0], hi = p.v[0];
  for (double v : p.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  GrayImage out = p;
  if (hi > lo) {
    for (double& v : out.v) v = (v - lo) / (hi - lo);
  }
  return out;
}

struct Counts {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count_pixels(const GrayImage& p, const GrayImage& g, double t) {
  Counts c;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    const bool pos = p.v[i] > t, fg = g.v[i] == 1.0;
    if (pos && fg) ++c.tp;
    if (pos && !fg) ++c.fp;
    if (!pos && fg) ++c.fn;
    if (!pos && !fg) ++c.tn;
  }
  return c;
}

double oracle_precision(const Counts& c) { return c.tp + c.fp == 0 ? 1.0 : double(c.tp) / (c.tp + c.fp); }
double oracle_recall(const Counts& c) { return c.tp + c.fn == 0 ? 0.0 : double(c.tp) / (c.tp + c.fn); }

TEST(PrCurve, ExhaustiveThreeByThreeMatchesPixelCounting) {
  Rng rng(1);
  for (unsigned bits = 0; bits < 512; ++bits) {
    const GrayImage g = mask_from_bits(bits, 3, 3);
    for (int trial = 0; trial < 64; ++trial) {
      const GrayImage p = random_pred(3, 3, rng, trial % 2 == 0);
      const GrayImage q = oracle_normalize(p);
      const auto curve = pr_curve(p, g, kCfg);
      ASSERT_EQ(curve.size(), 256u);
      for (int k = 0; k < 256; ++k) {
        const Counts c = count_pixels(q, g, k / 256.0);
        ASSERT_EQ(curve[k].precision, oracle_precision(c)) << bits << " " << trial << " " << k;
        ASSERT_EQ(curve[k].recall, oracle_recall(c)) << bits << " " << trial << " " << k;
      }
      double m = 0.0;
      for (std::size_t i = 0; i < 9; ++i) m += std::abs(q.v[i] - g.v[i]);
      ASSERT_EQ(mae(q, g), m / 9);
    }
  }
}

TEST(PrCurve, ConfusionAtThresholdMatchesCounting) {
  Rng rng(2);
  const GrayImage p = random_pred(4, 4, rng, false), g = mask_from_bits(0xA5C3u, 4, 4);
  for (double t : {0.1, 0.5, 0.9}) {
    const auto c = confusion(p, g, t);
    const auto o = count_pixels(p, g, t);
    EXPECT_EQ(c.tp, static_cast<std::size_t>(o.tp));
    EXPECT_EQ(c.fp, static_cast<std::size_t>(o.fp));
    EXPECT_EQ(c.fn, static_cast<std::size_t>(o.fn));
  }
}

TEST(PrCurve, PerfectAndInvertedPredictions) {
  const GrayImage g = mask_from_bits(0x0F0u, 4, 4);
  for (const auto& pt : pr_curve(g, g, kCfg)) {
    EXPECT_EQ(pt.precision, 1.0);
    EXPECT_EQ(pt.recall, 1.0);
  }
  for (const auto& pt : pr_curve(complement(g), g, kCfg)) EXPECT_EQ(pt.recall, 0.0);
}

TEST(PrCurve, DatasetCurveIsPerThresholdMean) {
  Rng rng(3);
  std::vector<GrayImage> preds{random_pred(4, 4, rng, false), random_pred(4, 4, rng, false)};
  std::vector<GrayImage> gts{mask_from_bits(0x0FF0u, 4, 4), mask_from_bits(0x0001u, 4, 4)};
  const auto all = pr_curve(preds, gts, kCfg);
  const auto a = pr_curve(preds[0], gts[0], kCfg), b = pr_curve(preds[1], gts[1], kCfg);
  for (int k = 0; k < 256; ++k) {
    EXPECT_DOUBLE_EQ(all[k].precision, (a[k].precision + b[k].precision) / 2);
    EXPECT_DOUBLE_EQ(all[k].recall, (a[k].recall + b[k].recall) / 2);
  }
}

TEST(FMeasure, FormulaExamples) {
  EXPECT_NEAR(f_measure(0.8, 0.5, 0.3), 0.52 / 0.74, 1e-15);
  EXPECT_EQ(f_measure(1.0, 0.0, 0.3), 0.0);
  EXPECT_EQ(f_measure(0.0, 0.0, 0.3), 0.0);
  for (double b : {0.3, 1.0, 2.0}) EXPECT_NEAR(f_measure(0.37, 0.37, b), 0.37, 1e-15);
}

TEST(FMeasure, FMaxDominatesCurve) {
  Rng rng(4);
  std::vector<GrayImage> preds, gts;
  for (int i = 0; i < 5; ++i) {
    preds.push_back(random_pred(6, 6, rng, true));
    gts.push_back(mask_from_bits(static_cast<unsigned>(rng.next() & 0xFFFFFFFFFull) | 1u, 6, 6));
  }
  const double fm = f_max(preds, gts, kCfg);
  for (double f : fm_curve(pr_curve(preds, gts, kCfg), kCfg)) EXPECT_LE(f, fm);
}

TEST(FAvg, AdaptiveThresholdCases) {
  const GrayImage g = mask_from_bits(0x3u, 3, 3);  // 2 of 9 foreground
  EXPECT_EQ(f_adaptive(g, g, kCfg), 1.0);
  // All-one prediction: every pixel positive, P = 2/9, R = 1.
  EXPECT_NEAR(f_adaptive(GrayImage(3, 3, 1.0), g, kCfg), f_measure(2.0 / 9.0, 1.0, 0.3), 1e-15);
  EXPECT_EQ(f_adaptive(GrayImage(3, 3, 0.0), g, kCfg), 0.0);
  // Threshold 2 * mean: values strictly above it are positive.
  GrayImage p(1, 4, std::vector<double>{0.0, 0.2, 0.3, 1.0});
  const GrayImage g2(1, 4, std::vector<double>{0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(adaptive_threshold(p, kCfg), 0.75);
  EXPECT_EQ(f_adaptive(p, g2, kCfg), f_measure(1.0, 0.5, 0.3));
}

TEST(Mae, ExamplesAndOracle) {
  const GrayImage g = mask_from_bits(0x1Bu, 3, 3);
  EXPECT_EQ(mae(g, g), 0.0);
  EXPECT_EQ(mae(complement(g), g), 1.0);
  Rng rng(5);
  const GrayImage p = random_pred(3, 3, rng, false);
  double s = 0.0;
  for (int i = 0; i < 9; ++i) s += std::abs(p.v[i] - g.v[i]);
  EXPECT_NEAR(mae(p, g), s / 9, 1e-12);
}

TEST(SMeasure, Examples) {
  const GrayImage g = mask_from_bits(0x0660u, 4, 4);
  EXPECT_NEAR(s_measure(g, g, kCfg), 1.0, 1e-6);
  EXPECT_EQ(s_measure(GrayImage(4, 4, 0.0), GrayImage(4, 4, 0.0), kCfg), 1.0);
  EXPECT_EQ(s_measure(GrayImage(4, 4, 1.0), GrayImage(4, 4, 0.0), kCfg), 0.0);
  EXPECT_EQ(s_measure(GrayImage(4, 4, 1.0), GrayImage(4, 4, 1.0), kCfg), 1.0);

  // Asymmetric 8x8 case: the blend sits strictly between its components.
  GrayImage g8(8, 8), p8(8, 8);
  Rng rng(6);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      g8(y, x) = (y >= 1 && y <= 4 && x >= 2 && x <= 6) ? 1.0 : 0.0;
      p8(y, x) = g8(y, x) * 0.7 + 0.25 * rng.uniform();
    }
  }
  MetricConfig obj = kCfg, reg = kCfg;
  obj.alpha = 1.0;
  reg.alpha = 0.0;
  const double so = s_measure(p8, g8, obj), sr = s_measure(p8, g8, reg), sm = s_measure(p8, g8, kCfg);
  ASSERT_NE(so, sr);
  EXPECT_GT(sm, std::min(so, sr));
  EXPECT_LT(sm, std::max(so, sr));
  EXPECT_NEAR(sm, 0.5 * so + 0.5 * sr, 1e-12);
}

// Enhanced alignment evaluated pixel by pixel from the binarized map.
double oracle_e_measure(const GrayImage& p, const GrayImage& g, double t) {
  const std::size_t n = p.v.size();
  std::vector<double> fm(n);
  double mf = 0, mg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fm[i] = p.v[i] > t ? 1.0 : 0.0;
    mf += fm[i];
    mg += g.v[i];
  }
  double s = 0;
  if (mg == 0) {
    for (double f : fm) s += 1 - f;
    return s / n;
  }
  if (mg == n) {
    for (double f : fm) s += f;
    return s / n;
  }
  mf /= n;
  mg /= n;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = fm[i] - mf, b = g.v[i] - mg;
    const double align = 2 * a * b / (a * a + b * b + std::numeric_limits<double>::epsilon());
    s += (align + 1) * (align + 1) / 4;
  }
  return s / n;
}

TEST(EMeasure, MatchesPixelwiseOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const GrayImage p = random_pred(4, 4, rng, trial % 2 == 0);
    const GrayImage g = mask_from_bits(static_cast<unsigned>(rng.next() & 0xFFFFu), 4, 4);
    const auto curve = e_measure_curve_prepared(p, g, kCfg);
    for (int k = 0; k < 256; k += 5) EXPECT_NEAR(curve[k], oracle_e_measure(p, g, k / 256.0), 1e-12);
  }
}

TEST(EMeasure, Examples) {
  const GrayImage g = mask_from_bits(0x0660u, 4, 4);
  EXPECT_NEAR(e_measure(g, g, kCfg), 1.0, 1e-12);
  EXPECT_LT(e_measure(complement(g), g, kCfg), 0.5);
  const double mid = e_measure(GrayImage(4, 4, 4.0 / 16.0), g, kCfg);
  EXPECT_GT(mid, 0.0);
  EXPECT_LT(mid, 1.0);
}

TEST(WeightedF, Examples) {
  const GrayImage g = mask_from_bits(0x0660u, 4, 4);
  EXPECT_NEAR(weighted_f_measure(g, g, kCfg), 1.0, 1e-12);
  // The 7x7 blur is zero padded, so only a block clear of the border sees
  // its full error under an inverted prediction.
  GrayImage centred(12, 12);
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x) centred(y, x) = 1.0;
  EXPECT_NEAR(weighted_f_measure(complement(centred), centred, kCfg), 0.0, 1e-6);
  EXPECT_EQ(weighted_f_measure(GrayImage(4, 4, 0.0), GrayImage(4, 4, 0.0), kCfg), 1.0);
}

TEST(WeightedF, NearErrorsCostLessThanFarErrors) {
  GrayImage g(5, 5);
  g(2, 1) = g(2, 2) = 1.0;
  GrayImage near = g, far = g;
  near(2, 3) = 1.0;
  far(4, 4) = 1.0;
  MetricConfig raw = kCfg;
  raw.normalize = false;
  EXPECT_GT(weighted_f_measure(near, g, raw), weighted_f_measure(far, g, raw));
}

TEST(WeightedF, DistanceFieldMatchesBruteForce) {
  Rng rng(8);
  const GrayImage g = mask_from_bits(0x00100040u, 6, 6);
  const auto df = detail::distance_to_foreground(g);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      double best = 1e9;
      for (int yy = 0; yy < 6; ++yy)
        for (int xx = 0; xx < 6; ++xx)
          if (g(yy, xx) == 1.0) best = std::min(best, std::hypot(y - yy, x - xx));
      EXPECT_NEAR(df.dist[y * 6 + x], best, 1e-12);
      const std::size_t nn = df.nearest[y * 6 + x];
      EXPECT_NEAR(std::hypot(y - static_cast<int>(nn) / 6, x - static_cast<int>(nn) % 6), best, 1e-12);
    }
  }
}

TEST(Report, PerfectPredictionScoresOne) {
  std::vector<GrayImage> gts{mask_from_bits(0x0660u, 4, 4), mask_from_bits(0x0001u, 4, 4),
                             mask_from_bits(0xFFFFu, 4, 4)};
  const auto r = evaluate(gts, gts, kCfg);
  for (double v : {r.f_max, r.f_avg, r.f_w, r.e_m, r.s_m}) EXPECT_NEAR(v, 1.0, 1e-12);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.pr_curve.size(), 256u);
  EXPECT_EQ(r.fm_curve.size(), 256u);
}

TEST(Report, AllScalarsInUnitInterval) {
  Rng rng(9);
  std::vector<GrayImage> preds, gts;
  for (int i = 0; i < 12; ++i) {
    preds.push_back(random_pred(8, 8, rng, true));
    GrayImage g(8, 8);
    for (double& v : g.v) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
    gts.push_back(g);
  }
  const auto r = evaluate(preds, gts, kCfg);
  for (double v : {r.f_max, r.f_avg, r.f_w, r.e_m, r.s_m, r.mae}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Report, ThreadCountDoesNotChangeResults) {
  Rng rng(10);
  std::vector<GrayImage> preds, gts;
  for (int i = 0; i < 17; ++i) {
    preds.push_back(random_pred(12, 9, rng, true));
    GrayImage g(12, 9);
    for (double& v : g.v) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    gts.push_back(g);
  }
  const auto a = evaluate(preds, gts, kCfg, 1), b = evaluate(preds, gts, kCfg, 4);
  EXPECT_EQ(a.f_max, b.f_max);
  EXPECT_EQ(a.f_avg, b.f_avg);
  EXPECT_EQ(a.f_w, b.f_w);
  EXPECT_EQ(a.e_m, b.e_m);
  EXPECT_EQ(a.s_m, b.s_m);
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.fm_curve, b.fm_curve);
}

TEST(Validation, ShapeAndDomainErrors) {
  EXPECT_THROW(mae(GrayImage(2, 2), GrayImage(2, 3)), ShapeError);
  EXPECT_THROW(mae(GrayImage(2, 2), GrayImage(2, 2, 0.5)), ShapeError);
  MetricConfig bad = kCfg;
  bad.threshold_count = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = kCfg;
  bad.alpha = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

}  // namespace
