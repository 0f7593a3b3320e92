#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "minetlab/autograd.hpp"
#include "minetlab/rng.hpp"
#include "minetlab/tensor.hpp"

namespace minetlab::support {

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct FdResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

/// Central-difference check of d<R, f(inputs)>/d(input) for a random probe
/// tensor R. Checks every coordinate when `stride` is 1, otherwise every
/// stride-th coordinate of every input. Relative errors use `floor` as the
/// smallest denominator: the probe keeps gradients O(1), and below the floor
/// the comparison is dominated by summation round-off.
inline FdResult fd_check(const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                         std::vector<Tensor<double>> inputs, Rng& rng, double step = 1e-6, std::size_t stride = 1,
                         double floor = 1e-3) {
  std::vector<Var<double>> vars;
  for (auto& t : inputs) vars.emplace_back(t, true);
  Var<double> out = f(vars);
  Tensor<double> probe = random_tensor(out.shape(), rng);
  backward(out, probe);

  auto objective = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<Var<double>> v;
    for (const auto& t : xs) v.emplace_back(t, false);
    const Tensor<double> y = f(v).value();
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };

  FdResult r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = vars[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); i += stride) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + step;
      const double up = objective(inputs);
      inputs[k][i] = orig - step;
      const double down = objective(inputs);
      inputs[k][i] = orig;
      const double numeric = (up - down) / (2 * step);
      r.max_rel_error = std::max(r.max_rel_error, rel_err(analytic[i], numeric, floor));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace minetlab::support
