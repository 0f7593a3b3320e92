#include <gtest/gtest.h>

#include "minetlab/interaction.hpp"
#include "test_support.hpp"

namespace {

using namespace minetlab;
using minetlab::support::fd_check;
using minetlab::support::random_tensor;
using V = Var<double>;
using Vs = std::vector<V>;

const RunContext kTrain{true, 0.1, 1e-5};

struct AimInputs {
  std::optional<Tensor<double>> lower, higher;
  Tensor<double> curr;
};

AimInputs aim_inputs(int level, int size, Rng& rng) {
  AimInputs in;
  in.curr = random_tensor({2, 6, size, size}, rng, 0.0, 1.0);
  if (level > 0) in.lower = random_tensor({2, 4, 2 * size, 2 * size}, rng, 0.0, 1.0);
  if (level < 4) in.higher = random_tensor({2, 5, size / 2, size / 2}, rng, 0.0, 1.0);
  return in;
}

AggregateInteraction<double> make_aim(int level, Rng& rng, DownsampleMode mode = DownsampleMode::average) {
  return AggregateInteraction<double>(level, level > 0 ? std::optional<int>(4) : std::nullopt, 6,
                                      level < 4 ? std::optional<int>(5) : std::nullopt, aim_channels(level), mode, rng);
}

V run_aim(AggregateInteraction<double>& aim, const RunContext& ctx, const V* lower, const V& curr, const V* higher) {
  return aim(ctx, lower, curr, higher);
}

TEST(Aim, OutputShapesPerLevel) {
  for (int level : {0, 2, 4}) {
    Rng rng(level);
    auto aim = make_aim(level, rng);
    const auto in = aim_inputs(level, 8, rng);
    const V curr(in.curr);
    const V lower = in.lower ? V(*in.lower) : V(), higher = in.higher ? V(*in.higher) : V();
    const auto y = run_aim(aim, kTrain, in.lower ? &lower : nullptr, curr, in.higher ? &higher : nullptr);
    EXPECT_EQ(y.shape(), (Shape{2, aim_channels(level), 8, 8})) << "level " << level;
    EXPECT_EQ(aim.branch_count(), level == 0 || level == 4 ? 2 : 3);
    for (double v : y.value().storage()) EXPECT_GE(v, 0.0);
  }
  EXPECT_EQ(aim_channels(0), 32);
  EXPECT_EQ(aim_channels(3), 64);
}

TEST(Aim, ZeroedMergeReducesToIdentityPath) {
  for (int level : {0, 2, 4}) {
    for (auto mode : {DownsampleMode::average, DownsampleMode::max}) {
      Rng rng(10 + level);
      auto aim = make_aim(level, rng, mode);
      aim.merge().weight().mutable_value().fill(0.0);
      aim.merge().bias().mutable_value().fill(0.0);
      const auto in = aim_inputs(level, 8, rng);
      const V curr(in.curr);
      const V lower = in.lower ? V(*in.lower) : V(), higher = in.higher ? V(*in.higher) : V();
      const auto y = run_aim(aim, kTrain, in.lower ? &lower : nullptr, curr, in.higher ? &higher : nullptr);
      const auto id = aim.identity_path(kTrain, curr);
      EXPECT_EQ(y.value().storage(), id.value().storage()) << "level " << level;
    }
  }
}

TEST(Aim, RejectsMissingOrMisSizedNeighbours) {
  Rng rng(20);
  auto aim = make_aim(2, rng);
  const auto in = aim_inputs(2, 8, rng);
  const V curr(in.curr), lower(*in.lower), higher(*in.higher);
  EXPECT_THROW(aim(kTrain, nullptr, curr, &higher), ShapeError);
  EXPECT_THROW(aim(kTrain, &lower, curr, nullptr), ShapeError);
  const V wrong(random_tensor({2, 5, 8, 8}, rng));
  EXPECT_THROW(aim(kTrain, &lower, curr, &wrong), ShapeError);
  EXPECT_THROW(make_aim(5, rng), ConfigError);
  EXPECT_THROW(
      AggregateInteraction<double>(0, 4, 6, 5, 32, DownsampleMode::average, rng), ConfigError);
}

TEST(Aim, InputGradientsMatchFiniteDifferences) {
  Rng rng(30);
  auto aim = make_aim(2, rng);
  const auto in = aim_inputs(2, 4, rng);
  const auto r = fd_check([&](const Vs& v) { return aim(kTrain, &v[0], v[1], &v[2]); },
                          {*in.lower, in.curr, *in.higher}, rng, 1e-6, 3);
  EXPECT_LT(r.max_rel_error, 1e-5);
  EXPECT_GT(r.checked, 100);
}

TEST(Sim, OutputShapeAndChannels) {
  Rng rng(40);
  SelfInteraction<double> sim(64, 2, DownsampleMode::average, rng);
  const auto y = sim(kTrain, V(random_tensor({2, 64, 4, 6}, rng)));
  EXPECT_EQ(y.shape(), (Shape{2, 64, 4, 6}));
  EXPECT_THROW(sim(kTrain, V(random_tensor({1, 32, 4, 4}, rng))), ShapeError);
  EXPECT_THROW(SelfInteraction<double>(63, 2, DownsampleMode::average, rng), ConfigError);
}

TEST(Sim, OddSpatialSizeIsRejected) {
  Rng rng(41);
  SelfInteraction<double> sim(32, 2, DownsampleMode::average, rng);
  try {
    sim(kTrain, V(random_tensor({1, 32, 3, 4}, rng)));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("3x4"), std::string::npos);
  }
}

TEST(Sim, ZeroedMergeIsExactIdentity) {
  for (bool training : {true, false}) {
    Rng rng(42);
    SelfInteraction<double> sim(32, 2, DownsampleMode::average, rng);
    sim.merge().body().conv().weight().mutable_value().fill(0.0);
    sim.merge().body().bn().beta().mutable_value().fill(0.0);
    const auto x = random_tensor({2, 32, 4, 4}, rng);
    const auto y = sim(RunContext{training, 0.1, 1e-5}, V(x));
    EXPECT_EQ(y.value().storage(), x.storage()) << "training=" << training;
  }
}

TEST(Sim, EveryParameterReceivesGradient) {
  Rng rng(43);
  SelfInteraction<double> sim(32, 2, DownsampleMode::average, rng);
  ParameterSet<double> set;
  sim.collect("sim", set);
  const auto y = sim(kTrain, V(random_tensor({2, 32, 4, 4}, rng, 0.0, 1.0)));
  backward(y, random_tensor(y.shape(), rng));
  for (const auto& p : set.params) {
    double norm = 0.0;
    for (double g : p.var.grad().storage()) norm += g * g;
    EXPECT_GT(norm, 0.0) << p.name;
  }
}

TEST(Sim, BranchWeightsAffectOutput) {
  // The low-to-high exchange must change the output; a dead branch would not.
  Rng rng(44);
  SelfInteraction<double> sim(32, 2, DownsampleMode::average, rng);
  ParameterSet<double> set;
  sim.collect("sim", set);
  const auto x = random_tensor({2, 32, 4, 4}, rng);
  const auto before = sim(kTrain, V(x)).value();
  for (const char* name : {"sim.low_to_high.weight", "sim.high_to_low.weight"}) {
    auto* p = const_cast<Parameter<double>*>(set.find(name));
    ASSERT_NE(p, nullptr) << name;
    const auto saved = p->var.value();
    p->var.mutable_value().fill(0.0);
    const auto after = sim(kTrain, V(x)).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < after.size(); ++i) diff += std::abs(after[i] - before[i]);
    EXPECT_GT(diff, 1e-6) << name;
    p->var.mutable_value() = saved;
  }
}

TEST(Sim, InputGradientsMatchFiniteDifferences) {
  Rng rng(45);
  SelfInteraction<double> sim(8, 2, DownsampleMode::max, rng);
  const auto r =
      fd_check([&](const Vs& v) { return sim(kTrain, v[0]); }, {random_tensor({2, 8, 4, 4}, rng)}, rng, 1e-6, 2);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(FusionUnit, NonNegativeWithRequestedChannels) {
  Rng rng(50);
  FusionUnit<double> fu(64, 32, rng);
  const auto y = fu(kTrain, V(random_tensor({2, 64, 4, 4}, rng)));
  EXPECT_EQ(y.shape(), (Shape{2, 32, 4, 4}));
  for (double v : y.value().storage()) EXPECT_GE(v, 0.0);
  EXPECT_THROW(fu(kTrain, V(random_tensor({2, 32, 4, 4}, rng))), ShapeError);
}

TEST(Downsample, ModeParsing) {
  EXPECT_EQ(parse_downsample_mode("max"), DownsampleMode::max);
  EXPECT_THROW(parse_downsample_mode("median"), ConfigError);
}

}  // namespace
