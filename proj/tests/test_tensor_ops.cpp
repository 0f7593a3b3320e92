#include <gtest/gtest.h>

#include <cmath>

#include "minetlab/ops.hpp"
#include "test_support.hpp"

namespace {

using namespace minetlab;
using minetlab::support::fd_check;
using minetlab::support::random_tensor;
using V = Var<double>;
using Vs = std::vector<V>;

constexpr double kTol = 1e-6;

// Direct zero-padded "same" convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b) {
  const int k = w.h(), pad = k / 2;
  Tensor<double> y(x.n(), w.n(), x.h(), x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < w.n(); ++co)
      for (int yy = 0; yy < x.h(); ++yy)
        for (int xx = 0; xx < x.w(); ++xx) {
          double s = b ? (*b)[co] : 0.0;
          for (int ci = 0; ci < x.c(); ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = yy + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sx < 0 || sy >= x.h() || sx >= x.w()) continue;
                s += x.at(n, ci, sy, sx) * w.at(co, ci, ky, kx);
              }
          y.at(n, co, yy, xx) = s;
        }
  return y;
}

TEST(Conv2d, MatchesDirectConvolution) {
  Rng rng(1);
  for (int k : {1, 3, 5}) {
    const auto x = random_tensor({2, 3, 7, 6}, rng);
    const auto w = random_tensor({4, 3, k, k}, rng);
    const auto b = random_tensor({1, 4, 1, 1}, rng);
    const auto y = ops::conv2d(V(x), V(w), V(b)).value();
    const auto ref = naive_conv(x, w, &b);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12) << "k=" << k;
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int k : {1, 3}) {
    auto r = fd_check([](const Vs& v) { return ops::conv2d(v[0], v[1], v[2]); },
                      {random_tensor({2, 3, 5, 6}, rng), random_tensor({2, 3, k, k}, rng), random_tensor({1, 2, 1, 1}, rng)},
                      rng);
    EXPECT_LT(r.max_rel_error, kTol) << "k=" << k;
  }
}

TEST(Conv2d, WithoutBiasIsDefined) {
  Rng rng(3);
  const auto x = random_tensor({1, 2, 4, 4}, rng);
  const auto w = random_tensor({3, 2, 3, 3}, rng);
  const auto y = ops::conv2d(V(x), V(w), V()).value();
  const auto ref = naive_conv(x, w, nullptr);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, RejectsChannelMismatchAndEvenKernel) {
  Rng rng(4);
  const V x(random_tensor({1, 2, 4, 4}, rng));
  EXPECT_THROW(ops::conv2d(x, V(random_tensor({3, 5, 3, 3}, rng)), V()), ShapeError);
  EXPECT_THROW(ops::conv2d(x, V(random_tensor({3, 2, 2, 2}, rng)), V()), ShapeError);
  EXPECT_THROW(ops::conv2d(x, V(random_tensor({3, 2, 3, 3}, rng)), V(random_tensor({1, 2, 1, 1}, rng))), ShapeError);
}

TEST(BatchNorm, TrainingModeNormalizesAndUpdatesRunningStats) {
  Rng rng(5);
  const auto x = random_tensor({3, 2, 4, 5}, rng, -2.0, 3.0);
  Tensor<double> rm(Shape{1, 2, 1, 1}), rv(Shape{1, 2, 1, 1}, 1.0);
  const V gamma(Tensor<double>({1, 2, 1, 1}, 1.0)), beta(Tensor<double>({1, 2, 1, 1}, 0.0));
  ops::BatchNormState<double> st{&rm, &rv, 0.1, 0.0, true};
  const auto y = ops::batch_norm(V(x), gamma, beta, st).value();
  const double count = 3 * 4 * 5;
  for (int c = 0; c < 2; ++c) {
    double m = 0, m2 = 0, xm = 0, xsq = 0;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 20; ++i) {
        const double v = y.plane(n, c)[i], u = x.plane(n, c)[i];
        m += v;
        m2 += v * v;
        xm += u;
        xsq += u * u;
      }
    EXPECT_NEAR(m / count, 0.0, 1e-12);
    EXPECT_NEAR(m2 / count, 1.0, 1e-10);
    const double mean = xm / count, var = xsq / count - mean * mean;
    EXPECT_NEAR(rm[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * var * count / (count - 1), 1e-12);
  }
}

TEST(BatchNorm, InferenceUsesRunningStats) {
  Tensor<double> rm(Shape{1, 1, 1, 1}, 2.0), rv(Shape{1, 1, 1, 1}, 4.0);
  const V gamma(Tensor<double>({1, 1, 1, 1}, 3.0)), beta(Tensor<double>({1, 1, 1, 1}, 1.0));
  ops::BatchNormState<double> st{&rm, &rv, 0.1, 0.0, false};
  const auto y = ops::batch_norm(V(Tensor<double>({1, 1, 1, 2}, 6.0)), gamma, beta, st).value();
  EXPECT_NEAR(y[0], 3.0 * (6.0 - 2.0) / 2.0 + 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(rm[0], 2.0);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (bool training : {true, false}) {
    Tensor<double> rm(Shape{1, 3, 1, 1}, 0.2), rv(Shape{1, 3, 1, 1}, 1.5);
    auto r = fd_check(
        [&](const Vs& v) {
          // Fresh copies keep running-stat updates out of the objective.
          Tensor<double> m = rm, s = rv;
          return ops::batch_norm(v[0], v[1], v[2], ops::BatchNormState<double>{&m, &s, 0.1, 1e-5, training});
        },
        {random_tensor({2, 3, 3, 4}, rng), random_tensor({1, 3, 1, 1}, rng, 0.5, 1.5), random_tensor({1, 3, 1, 1}, rng)},
        rng);
    EXPECT_LT(r.max_rel_error, kTol) << "training=" << training;
  }
}

TEST(BatchNorm, RejectsSingleValueBatchesInTraining) {
  Tensor<double> rm(Shape{1, 1, 1, 1}), rv(Shape{1, 1, 1, 1}, 1.0);
  const V gamma(Tensor<double>({1, 1, 1, 1}, 1.0)), beta(Tensor<double>(Shape{1, 1, 1, 1}));
  EXPECT_THROW(ops::batch_norm(V(Tensor<double>(Shape{1, 1, 1, 1})), gamma, beta,
                               ops::BatchNormState<double>{&rm, &rv, 0.1, 1e-5, true}),
               ShapeError);
}

TEST(Elementwise, ForwardValues) {
  Tensor<double> t(Shape{1, 1, 1, 4});
  t[0] = -2;
  t[1] = -0.5;
  t[2] = 0.5;
  t[3] = 3;
  const auto r = ops::relu(V(t)).value();
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[3], 3.0);
  const auto s = ops::sigmoid(V(t)).value();
  EXPECT_NEAR(s[2], 1.0 / (1.0 + std::exp(-0.5)), 1e-15);
  const auto c = ops::clamp(V(t), -1.0, 1.0).value();
  EXPECT_EQ(c[0], -1.0);
  EXPECT_EQ(c[1], -0.5);
  EXPECT_EQ(c[3], 1.0);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  auto x = random_tensor({2, 2, 3, 3}, rng, -2, 2);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::relu(v[0]); }, {x}, rng).max_rel_error, kTol);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::sigmoid(v[0]); }, {x}, rng).max_rel_error, kTol);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::clamp(v[0], -1.0, 1.0); }, {x}, rng).max_rel_error, kTol);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::add(v[0], v[1]); }, {x, random_tensor(x.shape(), rng)}, rng)
                .max_rel_error,
            kTol);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::sum(v); },
                     {x, random_tensor(x.shape(), rng), random_tensor(x.shape(), rng)}, rng)
                .max_rel_error,
            kTol);
}

TEST(Concat, StacksChannelsInOrderAndSplitsGradients) {
  Rng rng(8);
  const auto a = random_tensor({2, 1, 3, 3}, rng), b = random_tensor({2, 2, 3, 3}, rng);
  const auto y = ops::concat_channels(std::vector<V>{V(a), V(b)}).value();
  ASSERT_EQ(y.shape(), (Shape{2, 3, 3, 3}));
  EXPECT_EQ(y.at(1, 0, 2, 1), a.at(1, 0, 2, 1));
  EXPECT_EQ(y.at(1, 2, 0, 2), b.at(1, 1, 0, 2));
  EXPECT_LT(fd_check([](const Vs& v) { return ops::concat_channels(v); }, {a, b}, rng).max_rel_error, kTol);
  EXPECT_THROW(ops::concat_channels(std::vector<V>{V(a), V(random_tensor({2, 1, 4, 3}, rng))}), ShapeError);
}

TEST(Pooling, ForwardValuesAndTies) {
  Tensor<double> t(Shape{1, 1, 2, 4});
  const double vals[] = {1, 5, 2, 2, 3, 4, 2, 2};
  for (int i = 0; i < 8; ++i) t[i] = vals[i];
  const V x(t, true);
  const auto m = ops::max_pool2(x);
  EXPECT_EQ(m.value()[0], 5.0);
  EXPECT_EQ(m.value()[1], 2.0);
  backward(m, Tensor<double>(m.shape(), 1.0));
  const auto g = x.grad();
  EXPECT_EQ(g[1], 1.0);
  // Ties route to the first maximum in row-major order.
  EXPECT_EQ(g[2], 1.0);
  EXPECT_EQ(g[3] + g[6] + g[7], 0.0);
  const auto a = ops::avg_pool2(V(t)).value();
  EXPECT_DOUBLE_EQ(a[0], 13.0 / 4);
  EXPECT_DOUBLE_EQ(a[1], 2.0);
}

TEST(Pooling, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  const auto x = random_tensor({2, 2, 4, 6}, rng);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::max_pool2(v[0]); }, {x}, rng).max_rel_error, kTol);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::avg_pool2(v[0]); }, {x}, rng).max_rel_error, kTol);
}

TEST(Pooling, RejectsOddSizes) {
  const V x(Tensor<double>(Shape{1, 1, 3, 4}));
  EXPECT_THROW(ops::max_pool2(x), ShapeError);
  EXPECT_THROW(ops::avg_pool2(x), ShapeError);
}

TEST(Resample, NearestRepeatsPixels) {
  Tensor<double> t(Shape{1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) t[i] = i;
  const auto y = ops::upsample_nearest2(V(t)).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(y.at(0, 0, 0, 1), 0.0);
  EXPECT_EQ(y.at(0, 0, 1, 3), 1.0);
  EXPECT_EQ(y.at(0, 0, 3, 0), 2.0);
  EXPECT_EQ(y.at(0, 0, 2, 2), 3.0);
}

TEST(Resample, BilinearHalfPixelValues) {
  // 1-D row [0, 1] upsampled to 4 samples at source coordinates
  // -0.25 (clamped), 0.25, 0.75, 1.25 (clamped).
  Tensor<double> t(Shape{1, 1, 1, 2});
  t[1] = 1.0;
  const auto y = ops::resize_bilinear(V(t), 1, 4).value();
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 0.25);
  EXPECT_DOUBLE_EQ(y[2], 0.75);
  EXPECT_DOUBLE_EQ(y[3], 1.0);
  // Constant maps stay constant under any resize.
  const auto c = ops::resize_bilinear(V(Tensor<double>({1, 2, 3, 5}, 0.7)), 7, 2).value();
  for (double v : c.storage()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Resample, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  const auto x = random_tensor({1, 2, 3, 4}, rng);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::upsample_nearest2(v[0]); }, {x}, rng).max_rel_error, kTol);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::upsample_bilinear2(v[0]); }, {x}, rng).max_rel_error, kTol);
  EXPECT_LT(fd_check([](const Vs& v) { return ops::resize_bilinear(v[0], 5, 2); }, {x}, rng).max_rel_error, kTol);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  const V x(Tensor<double>({1, 1, 2, 2}, 1.0), true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(ops::relu(x).requires_grad());
  }
  EXPECT_TRUE(ops::relu(x).requires_grad());
}

TEST(Autograd, SharedInputsAccumulate) {
  const V x(Tensor<double>({1, 1, 1, 1}, 2.0), true);
  const auto y = ops::add(x, x);
  backward(y, Tensor<double>(y.shape(), 1.0));
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(TensorShape, MismatchesNameBothShapes) {
  try {
    ops::add(V(Tensor<double>(Shape{1, 1, 2, 2})), V(Tensor<double>(Shape{1, 1, 2, 3})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1,1,2,2]"), std::string::npos);
    EXPECT_NE(msg.find("[1,1,2,3]"), std::string::npos);
  }
  EXPECT_THROW((void)Tensor<double>(Shape{1, 1, 2, 2}).reshaped({1, 1, 3, 1}), ShapeError);
}

}  // namespace
