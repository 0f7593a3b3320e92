#pragma once

// Binary cross entropy (BCEL), the consistency-enhanced loss (CEL), their
// closed-form derivatives with respect to the prediction, and the combined
// objective L = BCEL + lambda * CEL.
//
// Predictions and masks are N x 1 x H x W. All arithmetic is double.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "minetlab/tensor.hpp"

namespace minetlab::losses {

/// Predictions are clamped to [kProbEpsilon, 1 - kProbEpsilon] before any
/// logarithm is taken.
inline constexpr double kProbEpsilon = 1e-7;

enum class Reduction { sum, mean };
enum class CelBatchMode { per_image_mean, global_sum };

/// Raised when a prediction or mask lies outside the loss domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct LossBreakdown {
  double bcel = 0.0;
  double cel = 0.0;
  double lambda = 1.0;
  double total = 0.0;
  // Images whose CEL denominator vanished (value taken as 0).
  std::vector<int> degenerate_images;
};

struct CelReport {
  double value = 0.0;
  std::vector<int> degenerate_images;
};

namespace detail {

template <class T, class U>
void check_pair(const Tensor<T>& p, const Tensor<U>& g, bool open_interval) {
  require_same_shape(p.shape(), g.shape(), "loss");
  if (p.c() != 1) throw ShapeError("loss: expected single-channel maps, got " + p.shape().str());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double gv = static_cast<double>(g[i]);
    if (gv != 0.0 && gv != 1.0) throw DomainError("ground truth is not binary at element " + std::to_string(i));
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pv = static_cast<double>(p[i]);
    const bool ok = open_interval ? (pv > 0.0 && pv < 1.0) : (pv >= 0.0 && pv <= 1.0);
    if (!ok) {
      throw DomainError("prediction " + std::to_string(pv) + " outside " + (open_interval ? "(0,1)" : "[0,1]") +
                        " at element " + std::to_string(i));
    }
  }
}

// Per-image sums used by CEL and its derivative.
struct CelSums {
  double p = 0.0;   // sum p
  double g = 0.0;   // sum g
  double pg = 0.0;  // sum p*g
  double denominator() const { return p + g; }
  double numerator() const { return (p - pg) + (g - pg); }
};

template <class T, class U>
CelSums cel_sums(const Tensor<T>& p, const Tensor<U>& g, std::size_t begin, std::size_t end) {
  CelSums s;
  for (std::size_t i = begin; i < end; ++i) {
    const double pv = static_cast<double>(p[i]), gv = static_cast<double>(g[i]);
    s.p += pv;
    s.g += gv;
    s.pg += pv * gv;
  }
  return s;
}

}  // namespace detail

/// Clamps every prediction into [eps, 1 - eps].
template <class T>
Tensor<T> clamp_probabilities(Tensor<T> p, double eps = kProbEpsilon) {
  for (auto& v : p.storage()) {
    v = static_cast<T>(std::clamp(static_cast<double>(v), eps, 1.0 - eps));
  }
  return p;
}

/// -[g ln p + (1-g) ln(1-p)], summed or averaged over every pixel in the batch.
template <class T, class U>
double bcel(const Tensor<T>& p, const Tensor<U>& g, Reduction reduction = Reduction::mean) {
  detail::check_pair(p, g, true);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pv = static_cast<double>(p[i]), gv = static_cast<double>(g[i]);
    total -= gv * std::log(pv) + (1.0 - gv) * std::log(1.0 - pv);
  }
  return reduction == Reduction::mean ? total / static_cast<double>(p.size()) : total;
}

/// d BCEL(sum) / dp = -g/p + (1-g)/(1-p). `boundary_count`, when given,
/// receives the number of pixels sitting on the clamp boundary.
template <class T, class U>
Tensor<double> bcel_grad_analytic(const Tensor<T>& p, const Tensor<U>& g, std::size_t* boundary_count = nullptr) {
  detail::check_pair(p, g, true);
  Tensor<double> out(p.shape());
  std::size_t boundary = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pv = static_cast<double>(p[i]), gv = static_cast<double>(g[i]);
    if (pv <= kProbEpsilon || pv >= 1.0 - kProbEpsilon) ++boundary;
    out[i] = -gv / pv + (1.0 - gv) / (1.0 - pv);
  }
  if (boundary_count) *boundary_count = boundary;
  return out;
}

/// (sum(p - pg) + sum(g - pg)) / (sum p + sum g). Lies in [0, 1]; equals 1
/// when the prediction's support is disjoint from the foreground. A vanishing
/// denominator yields 0 and flags the image.
template <class T, class U>
CelReport cel_report(const Tensor<T>& p, const Tensor<U>& g, CelBatchMode mode = CelBatchMode::per_image_mean) {
  detail::check_pair(p, g, false);
  CelReport report;
  const std::size_t per = static_cast<std::size_t>(p.c()) * p.shape().plane();
  if (mode == CelBatchMode::global_sum) {
    const auto s = detail::cel_sums(p, g, 0, p.size());
    if (s.denominator() > 0.0) {
      report.value = s.numerator() / s.denominator();
    } else {
      for (int n = 0; n < p.n(); ++n) report.degenerate_images.push_back(n);
    }
    return report;
  }
  double total = 0.0;
  for (int n = 0; n < p.n(); ++n) {
    const auto s = detail::cel_sums(p, g, per * n, per * (n + 1));
    if (s.denominator() > 0.0) {
      total += s.numerator() / s.denominator();
    } else {
      report.degenerate_images.push_back(n);
    }
  }
  report.value = p.n() > 0 ? total / p.n() : 0.0;
  return report;
}

template <class T, class U>
double cel(const Tensor<T>& p, const Tensor<U>& g, CelBatchMode mode = CelBatchMode::per_image_mean) {
  return cel_report(p, g, mode).value;
}

/// dCEL/dp = (1 - 2g)/S - sum(p + g - 2pg)/S^2 with S = sum(p + g), taken over
/// each image (per_image_mean, additionally divided by N) or over the whole
/// batch (global_sum). Position enters only through g, so the value is
/// constant within each class of an image.
template <class T, class U>
Tensor<double> cel_grad_analytic(const Tensor<T>& p, const Tensor<U>& g,
                                 CelBatchMode mode = CelBatchMode::per_image_mean) {
  detail::check_pair(p, g, false);
  Tensor<double> out(p.shape());
  const std::size_t per = static_cast<std::size_t>(p.c()) * p.shape().plane();
  auto fill = [&](std::size_t begin, std::size_t end, double scale) {
    const auto s = detail::cel_sums(p, g, begin, end);
    const double denom = s.denominator();
    if (!(denom > 0.0)) return;  // degenerate: zero gradient
    const double common = s.numerator() / (denom * denom);
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = scale * ((1.0 - 2.0 * static_cast<double>(g[i])) / denom - common);
    }
  };
  if (mode == CelBatchMode::global_sum) {
    fill(0, p.size(), 1.0);
  } else {
    for (int n = 0; n < p.n(); ++n) fill(per * n, per * (n + 1), 1.0 / p.n());
  }
  return out;
}

struct LossOptions {
  double lambda = 1.0;
  Reduction bcel_reduction = Reduction::mean;
  CelBatchMode cel_mode = CelBatchMode::per_image_mean;
};

/// BCEL + lambda * CEL.
template <class T, class U>
LossBreakdown total_loss(const Tensor<T>& p, const Tensor<U>& g, const LossOptions& opt = {}) {
  if (!(opt.lambda >= 0.0)) throw DomainError("lambda must be non-negative");
  LossBreakdown out;
  out.lambda = opt.lambda;
  out.bcel = bcel(p, g, opt.bcel_reduction);
  auto report = cel_report(p, g, opt.cel_mode);
  out.cel = report.value;
  out.degenerate_images = std::move(report.degenerate_images);
  out.total = out.bcel + opt.lambda * out.cel;
  return out;
}

/// Gradient of total_loss with respect to p.
template <class T, class U>
Tensor<double> total_loss_grad(const Tensor<T>& p, const Tensor<U>& g, const LossOptions& opt = {}) {
  Tensor<double> grad = bcel_grad_analytic(p, g);
  if (opt.bcel_reduction == Reduction::mean) {
    const double inv = 1.0 / static_cast<double>(p.size());
    for (auto& v : grad.storage()) v *= inv;
  }
  if (opt.lambda != 0.0) {
    const Tensor<double> gc = cel_grad_analytic(p, g, opt.cel_mode);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += opt.lambda * gc[i];
  }
  return grad;
}

}  // namespace minetlab::losses
