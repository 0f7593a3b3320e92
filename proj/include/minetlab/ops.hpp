#pragma once

// Differentiable tensor operations recorded on the autograd graph.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "minetlab/autograd.hpp"

namespace minetlab::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on the number of im2col elements materialized at once.
inline constexpr std::size_t kColumnBudget = std::size_t{1} << 21;

struct ConvGeometry {
  int cin, h, w, k, pad;
  int rows() const { return cin * k * k; }
};

// Unfolds output rows [y0, y0 + nrows) of one image into a
// (cin*k*k) x (nrows*w) matrix.
template <class T>
void im2col(const T* x, const ConvGeometry& g, int y0, int nrows, T* col) {
  const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t len = static_cast<std::size_t>(nrows) * g.w;
  for (int c = 0; c < g.cin; ++c) {
    const T* xc = x + c * plane;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * len;
        const int dx = kx - g.pad;
        const int lo = std::max(0, -dx), hi = std::min(g.w, g.w - dx);
        for (int yy = 0; yy < nrows; ++yy) {
          T* dst = row + static_cast<std::size_t>(yy) * g.w;
          const int iy = y0 + yy + ky - g.pad;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.w, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.w + dx;
          std::fill(dst, dst + lo, T(0));
          std::copy(src + lo, src + hi, dst + lo);
          std::fill(dst + hi, dst + g.w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters a column block back into the image gradient.
template <class T>
void col2im(const T* col, const ConvGeometry& g, int y0, int nrows, T* dxp) {
  const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t len = static_cast<std::size_t>(nrows) * g.w;
  for (int c = 0; c < g.cin; ++c) {
    T* dc = dxp + c * plane;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * len;
        const int dx = kx - g.pad;
        const int lo = std::max(0, -dx), hi = std::min(g.w, g.w - dx);
        for (int yy = 0; yy < nrows; ++yy) {
          const int iy = y0 + yy + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          const T* __restrict src = row + static_cast<std::size_t>(yy) * g.w;
          T* __restrict dst = dc + static_cast<std::size_t>(iy) * g.w + dx;
          for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

// Output rows processed per im2col block.
inline int chunk_rows(const ConvGeometry& g) {
  const std::size_t per_row = static_cast<std::size_t>(std::max(1, g.rows())) * g.w;
  return std::clamp(static_cast<int>(kColumnBudget / per_row), 1, g.h);
}

}  // namespace detail

/// Stride-1 "same" convolution. `weight` is (cout, cin, k, k) with odd k;
/// `bias` may be undefined or (1, cout, 1, 1).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  using namespace detail;
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd size, got " + ws.str());
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " + std::to_string(ws.c));
  }
  if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1}) throw ShapeError("conv2d: bias shape " + bias.shape().str());

  const ConvGeometry g{xs.c, xs.h, xs.w, ws.h, ws.h / 2};
  const int cout = ws.n, hw = xs.h * xs.w, rows = g.rows();
  Tensor<T> out(Shape{xs.n, cout, xs.h, xs.w});
  const Eigen::Map<const RowMat<T>> wmat(weight.value().data(), cout, rows);
  const int crows = g.k == 1 ? g.h : chunk_rows(g);
  std::vector<T> col(g.k == 1 ? 0 : static_cast<std::size_t>(rows) * crows * g.w);

  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.value().plane(n, 0);
    T* yn = out.plane(n, 0);
    for (int y0 = 0; y0 < g.h; y0 += crows) {
      const int nr = std::min(crows, g.h - y0);
      const int p0 = y0 * g.w, len = nr * g.w;
      StridedMap<T> ymap(yn + p0, cout, len, Eigen::OuterStride<>(hw));
      if (g.k == 1) {
        ConstStridedMap<T> xmap(xn + p0, rows, len, Eigen::OuterStride<>(hw));
        ymap.noalias() = wmat * xmap;
      } else {
        im2col(xn, g, y0, nr, col.data());
        ymap.noalias() = wmat * Eigen::Map<const RowMat<T>>(col.data(), rows, len);
      }
    }
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) {
        const T b = bias.value()[c];
        T* yc = yn + static_cast<std::size_t>(c) * hw;
        for (int p = 0; p < hw; ++p) yc[p] += b;
      }
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Var<T>::make(std::move(out), std::move(inputs), [g, cout, hw, rows](Node<T>& self) {
    const Tensor<T>& xv = self.parents[0]->value;
    const Tensor<T>& wv = self.parents[1]->value;
    Tensor<T>* dx = parent_grad(self, 0);
    Tensor<T>* dw = parent_grad(self, 1);
    Tensor<T>* db = self.parents.size() > 2 ? parent_grad(self, 2) : nullptr;
    const Tensor<T>& dy = self.grad;
    const int nb = xv.n();
    const Eigen::Map<const RowMat<T>> wmat(wv.data(), cout, rows);
    const int crows = g.k == 1 ? g.h : chunk_rows(g);
    std::vector<T> col(g.k == 1 ? 0 : static_cast<std::size_t>(rows) * crows * g.w);
    std::vector<T> dcol(col.size());

    for (int n = 0; n < nb; ++n) {
      const T* xn = xv.plane(n, 0);
      const T* dyn = dy.plane(n, 0);
      for (int y0 = 0; y0 < g.h; y0 += crows) {
        const int nr = std::min(crows, g.h - y0);
        const int p0 = y0 * g.w, len = nr * g.w;
        ConstStridedMap<T> dymap(dyn + p0, cout, len, Eigen::OuterStride<>(hw));
        if (g.k == 1) {
          ConstStridedMap<T> xmap(xn + p0, rows, len, Eigen::OuterStride<>(hw));
          if (dw) Eigen::Map<RowMat<T>>(dw->data(), cout, rows).noalias() += dymap * xmap.transpose();
          if (dx) {
            StridedMap<T> dxmap(dx->plane(n, 0) + p0, rows, len, Eigen::OuterStride<>(hw));
            dxmap.noalias() += wmat.transpose() * dymap;
          }
        } else {
          if (dw) {
            im2col(xn, g, y0, nr, col.data());
            Eigen::Map<RowMat<T>>(dw->data(), cout, rows).noalias() +=
                dymap * Eigen::Map<const RowMat<T>>(col.data(), rows, len).transpose();
          }
          if (dx) {
            Eigen::Map<RowMat<T>> dcmap(dcol.data(), rows, len);
            dcmap.noalias() = wmat.transpose() * dymap;
            col2im(dcol.data(), g, y0, nr, dx->plane(n, 0));
          }
        }
      }
      if (db) {
        for (int c = 0; c < cout; ++c) {
          const T* dyc = dyn + static_cast<std::size_t>(c) * hw;
          T s = T(0);
          for (int p = 0; p < hw; ++p) s += dyc[p];
          (*db)[c] += s;
        }
      }
    }
  });
}

/// State owned by a batch-normalization layer and updated in training mode.
template <class T>
struct BatchNormState {
  Tensor<T>* running_mean;
  Tensor<T>* running_var;
  double momentum;
  double eps;
  bool training;
};

/// Per-channel normalization. Training mode uses batch statistics and updates
/// the running estimates (unbiased variance); inference uses the estimates.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const BatchNormState<T>& st) {
  const Shape s = x.shape();
  if (gamma.shape() != Shape{1, s.c, 1, 1} || beta.shape() != Shape{1, s.c, 1, 1}) {
    throw ShapeError("batch_norm: affine parameters do not match " + std::to_string(s.c) + " channels");
  }
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  std::vector<T> mean(s.c), invstd(s.c);
  if (st.training) {
    if (count < 2) throw ShapeError("batch_norm: training needs more than one value per channel, got " + s.str());
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double m = sum / count;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(m);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + st.eps));
      auto& rm = (*st.running_mean)[c];
      auto& rv = (*st.running_var)[c];
      rm = static_cast<T>((1.0 - st.momentum) * rm + st.momentum * m);
      rv = static_cast<T>((1.0 - st.momentum) * rv + st.momentum * var * count / (count - 1.0));
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[c] = (*st.running_mean)[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>((*st.running_var)[c]) + st.eps));
    }
  }

  Tensor<T> xhat(s), out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* xh = xhat.plane(n, c);
      T* y = out.plane(n, c);
      const T g = gamma.value()[c], b = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean[c]) * invstd[c];
        y[i] = g * xh[i] + b;
      }
    }
  }

  const bool training = st.training;
  return Var<T>::make(std::move(out), {x, gamma, beta},
                      [xhat = std::move(xhat), invstd = std::move(invstd), training](Node<T>& self) {
    const Shape s = self.value.shape();
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * plane;
    const Tensor<T>& dy = self.grad;
    const Tensor<T>& gv = self.parents[1]->value;
    Tensor<T>* dx = parent_grad(self, 0);
    Tensor<T>* dg = parent_grad(self, 1);
    Tensor<T>* db = parent_grad(self, 2);
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* d = dy.plane(n, c);
        const T* xh = xhat.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += d[i];
          sum_dy_xhat += d[i] * xh[i];
        }
      }
      if (dg) (*dg)[c] += static_cast<T>(sum_dy_xhat);
      if (db) (*db)[c] += static_cast<T>(sum_dy);
      if (!dx) continue;
      const double scale = static_cast<double>(gv[c]) * invstd[c];
      const double mdy = sum_dy / count, mdyx = sum_dy_xhat / count;
      for (int n = 0; n < s.n; ++n) {
        const T* d = dy.plane(n, c);
        const T* xh = xhat.plane(n, c);
        T* g = dx->plane(n, c);
        if (training) {
          for (std::size_t i = 0; i < plane; ++i) g[i] += static_cast<T>(scale * (d[i] - mdy - xh[i] * mdyx));
        } else {
          for (std::size_t i = 0; i < plane; ++i) g[i] += static_cast<T>(scale * d[i]);
        }
      }
    }
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>* dx = parent_grad(self, 0);
    if (!dx) return;
    const Tensor<T>& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > T(0)) (*dx)[i] += self.grad[i];
    }
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x.value()[i]));
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>* dx = parent_grad(self, 0);
    if (!dx) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const T s = self.value[i];
      (*dx)[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

/// Clamps into [lo, hi]; the gradient is zero wherever the clamp is active.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = std::clamp(v, lo, hi);
  return Var<T>::make(std::move(out), {x}, [lo, hi](Node<T>& self) {
    Tensor<T>* dx = parent_grad(self, 0);
    if (!dx) return;
    const Tensor<T>& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] >= lo && xv[i] <= hi) (*dx)[i] += self.grad[i];
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor<T>* d = parent_grad(self, k)) {
        for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
      }
    }
  });
}

/// Elementwise sum of one or more equally shaped tensors.
template <class T>
Var<T> sum(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("sum: no operands");
  Tensor<T> out = xs.front().value();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_shape(xs[k].shape(), out.shape(), "sum");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xs[k].value()[i];
  }
  return Var<T>::make(std::move(out), xs, [](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (Tensor<T>* d = parent_grad(self, k)) {
        for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
      }
    }
  });
}

/// Concatenation along the channel axis.
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no operands");
  Shape s = xs.front().shape();
  s.c = 0;
  for (const auto& x : xs) {
    const Shape& t = x.shape();
    if (t.n != s.n || t.h != s.h || t.w != s.w) {
      throw ShapeError("concat_channels: spatial mismatch " + xs.front().shape().str() + " vs " + t.str());
    }
    s.c += t.c;
  }
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const auto& x : xs) {
      std::copy_n(x.value().plane(n, 0), x.shape().c * s.plane(), out.plane(n, c0));
      c0 += x.shape().c;
    }
  }
  return Var<T>::make(std::move(out), xs, [](Node<T>& self) {
    const Shape s = self.value.shape();
    int c0 = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const int ck = self.parents[k]->value.c();
      if (Tensor<T>* d = parent_grad(self, k)) {
        for (int n = 0; n < s.n; ++n) {
          const T* src = self.grad.plane(n, c0);
          T* dst = d->plane(n, 0);
          for (std::size_t i = 0; i < ck * s.plane(); ++i) dst[i] += src[i];
        }
      }
      c0 += ck;
    }
  });
}

namespace detail {
inline void require_even(const Shape& s, const char* what) {
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError(std::string(what) + ": spatial size must be even, got " + std::to_string(s.h) + "x" +
                     std::to_string(s.w));
  }
}
}  // namespace detail

/// 2x2 max pooling, stride 2. Ties route the gradient to the first maximum.
template <class T>
Var<T> max_pool2(const Var<T>& x) {
  const Shape s = x.shape();
  detail::require_even(s, "max_pool2");
  const int oh = s.h / 2, ow = s.w / 2;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  std::vector<std::uint32_t> arg(out.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          const int base = 2 * y * s.w + 2 * xx;
          const int cand[4] = {base, base + 1, base + s.w, base + s.w + 1};
          int best = cand[0];
          for (int k = 1; k < 4; ++k) {
            if (p[cand[k]] > p[best]) best = cand[k];
          }
          out[o] = p[best];
          arg[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return Var<T>::make(std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    Tensor<T>* dx = parent_grad(self, 0);
    if (!dx) return;
    const Shape os = self.value.shape();
    const std::size_t iplane = dx->shape().plane(), oplane = os.plane();
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(os.n) * os.c; ++nc) {
      T* d = dx->data() + nc * iplane;
      for (std::size_t i = 0; i < oplane; ++i) d[arg[nc * oplane + i]] += self.grad[nc * oplane + i];
    }
  });
}

/// 2x2 average pooling, stride 2.
template <class T>
Var<T> avg_pool2(const Var<T>& x) {
  const Shape s = x.shape();
  detail::require_even(s, "avg_pool2");
  const int oh = s.h / 2, ow = s.w / 2;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* q = out.plane(n, c);
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const int b = 2 * y * s.w + 2 * xx;
          q[y * ow + xx] = (p[b] + p[b + 1] + p[b + s.w] + p[b + s.w + 1]) * T(0.25);
        }
      }
    }
  }
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>* dx = parent_grad(self, 0);
    if (!dx) return;
    const Shape os = self.value.shape();
    const int iw = dx->w();
    for (int n = 0; n < os.n; ++n) {
      for (int c = 0; c < os.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = dx->plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          for (int xx = 0; xx < os.w; ++xx) {
            const T v = g[y * os.w + xx] * T(0.25);
            const int b = 2 * y * iw + 2 * xx;
            d[b] += v;
            d[b + 1] += v;
            d[b + iw] += v;
            d[b + iw + 1] += v;
          }
        }
      }
    }
  });
}

/// Nearest-neighbour upsampling by a factor of two.
template <class T>
Var<T> upsample_nearest2(const Var<T>& x) {
  const Shape s = x.shape();
  const int oh = s.h * 2, ow = s.w * 2;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* q = out.plane(n, c);
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) q[y * ow + xx] = p[(y / 2) * s.w + xx / 2];
      }
    }
  }
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>* dx = parent_grad(self, 0);
    if (!dx) return;
    const Shape os = self.value.shape();
    const int iw = dx->w();
    for (int n = 0; n < os.n; ++n) {
      for (int c = 0; c < os.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = dx->plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          for (int xx = 0; xx < os.w; ++xx) d[(y / 2) * iw + xx / 2] += g[y * os.w + xx];
        }
      }
    }
  });
}

namespace detail {
// Half-pixel-centre source coordinate, matching the common
// align_corners=false convention.
struct LinearTap {
  int i0, i1;
  double w1;
};
inline std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}
}  // namespace detail

/// Bilinear resize to (oh, ow).
template <class T>
Var<T> resize_bilinear(const Var<T>& x, int oh, int ow) {
  const Shape s = x.shape();
  const auto ty = detail::linear_taps(s.h, oh);
  const auto tx = detail::linear_taps(s.w, ow);
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* q = out.plane(n, c);
      for (int y = 0; y < oh; ++y) {
        const auto& a = ty[y];
        for (int xx = 0; xx < ow; ++xx) {
          const auto& b = tx[xx];
          const double top = p[a.i0 * s.w + b.i0] * (1 - b.w1) + p[a.i0 * s.w + b.i1] * b.w1;
          const double bot = p[a.i1 * s.w + b.i0] * (1 - b.w1) + p[a.i1 * s.w + b.i1] * b.w1;
          q[y * ow + xx] = static_cast<T>(top * (1 - a.w1) + bot * a.w1);
        }
      }
    }
  }
  return Var<T>::make(std::move(out), {x}, [ty, tx](Node<T>& self) {
    Tensor<T>* dx = parent_grad(self, 0);
    if (!dx) return;
    const Shape os = self.value.shape();
    const int iw = dx->w();
    for (int n = 0; n < os.n; ++n) {
      for (int c = 0; c < os.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = dx->plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          const auto& a = ty[y];
          for (int xx = 0; xx < os.w; ++xx) {
            const auto& b = tx[xx];
            const double v = g[y * os.w + xx];
            d[a.i0 * iw + b.i0] += static_cast<T>(v * (1 - a.w1) * (1 - b.w1));
            d[a.i0 * iw + b.i1] += static_cast<T>(v * (1 - a.w1) * b.w1);
            d[a.i1 * iw + b.i0] += static_cast<T>(v * a.w1 * (1 - b.w1));
            d[a.i1 * iw + b.i1] += static_cast<T>(v * a.w1 * b.w1);
          }
        }
      }
    }
  });
}

template <class T>
Var<T> upsample_bilinear2(const Var<T>& x) {
  return resize_bilinear(x, x.shape().h * 2, x.shape().w * 2);
}

}  // namespace minetlab::ops
