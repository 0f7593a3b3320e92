#pragma once

// Finite-difference verification of the closed-form BCEL and CEL gradients
// on random single-image inputs.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>

#include "minetlab/losses.hpp"
#include "minetlab/rng.hpp"

namespace minetlab::gradcheck {

struct Options {
  int size = 8;
  std::uint64_t seed = 0;
  int cases = 20;
  double step = 1e-5;
  // Probabilities are drawn from [margin, 1 - margin] so central differences
  // never leave the loss domain.
  double margin = 0.05;
  // Test hook: perturbs one analytic gradient entry to exercise failure paths.
  bool corrupt_analytic = false;
};

struct Worst {
  double rel_error = 0.0;
  int image_case = -1;
  int y = -1;
  int x = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct LossCheck {
  Worst worst;
};

struct Report {
  LossCheck bcel;
  LossCheck cel;
  // Largest within-class spread of the CEL gradient over all cases.
  double cel_fg_spread = 0.0;
  double cel_bg_spread = 0.0;
  // Largest |(grad_bg - grad_fg) - 2 / sum(p + g)| over all cases.
  double cel_gap_error = 0.0;

  double max_rel_error() const { return std::max(bcel.worst.rel_error, cel.worst.rel_error); }
};

inline double relative_error(double a, double n) {
  const double scale = std::max({std::abs(a), std::abs(n), 1e-12});
  return std::abs(a - n) / scale;
}

/// Random prediction in [margin, 1 - margin] and a binary mask containing
/// both classes.
inline void random_case(Rng& rng, int size, double margin, Tensor<double>& p, Tensor<double>& g) {
  p = Tensor<double>(1, 1, size, size);
  g = Tensor<double>(1, 1, size, size);
  for (auto& v : p.storage()) v = rng.uniform(margin, 1.0 - margin);
  for (auto& v : g.storage()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  g[0] = 1.0;
  g[1] = 0.0;
}

namespace detail {

inline void compare(const Tensor<double>& analytic, const Tensor<double>& p,
                    const std::function<double(const Tensor<double>&)>& f, double step, int case_index, Worst& worst) {
  Tensor<double> q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = q[i];
    q[i] = orig + step;
    const double up = f(q);
    q[i] = orig - step;
    const double down = f(q);
    q[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    if (err > worst.rel_error || worst.image_case < 0) {
      worst = {err, case_index, static_cast<int>(i) / p.w(), static_cast<int>(i) % p.w(), analytic[i], numeric};
    }
  }
}

}  // namespace detail

inline Report run(const Options& opt) {
  if (opt.size < 2) throw std::invalid_argument("gradcheck size must be at least 2");
  if (opt.cases < 1) throw std::invalid_argument("gradcheck needs at least one case");
  Rng rng(opt.seed);
  Report r;
  for (int c = 0; c < opt.cases; ++c) {
    Tensor<double> p, g;
    random_case(rng, opt.size, opt.margin, p, g);

    Tensor<double> gb = losses::bcel_grad_analytic(p, g);
    Tensor<double> gc = losses::cel_grad_analytic(p, g);
    if (opt.corrupt_analytic && c == 0) {
      gb[gb.size() / 2] *= 1.5;
      gc[gc.size() / 2] *= 1.5;
    }
    detail::compare(gb, p, [&](const Tensor<double>& q) { return losses::bcel(q, g, losses::Reduction::sum); },
                    opt.step, c, r.bcel.worst);
    detail::compare(gc, p, [&](const Tensor<double>& q) { return losses::cel(q, g); }, opt.step, c, r.cel.worst);

    double fg_min = std::numeric_limits<double>::infinity(), fg_max = -fg_min;
    double bg_min = fg_min, bg_max = -fg_min, s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s += p[i] + g[i];
      if (g[i] == 1.0) {
        fg_min = std::min(fg_min, gc[i]);
        fg_max = std::max(fg_max, gc[i]);
      } else {
        bg_min = std::min(bg_min, gc[i]);
        bg_max = std::max(bg_max, gc[i]);
      }
    }
    r.cel_fg_spread = std::max(r.cel_fg_spread, fg_max - fg_min);
    r.cel_bg_spread = std::max(r.cel_bg_spread, bg_max - bg_min);
    r.cel_gap_error = std::max(r.cel_gap_error, std::abs((bg_max - fg_max) - 2.0 / s));
  }
  return r;
}

}  // namespace minetlab::gradcheck
