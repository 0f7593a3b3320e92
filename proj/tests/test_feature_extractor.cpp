#include <gtest/gtest.h>

#include "minetlab/feature_extractor.hpp"
#include "test_support.hpp"

namespace {

using namespace minetlab;
using minetlab::support::random_tensor;

TEST(Backbone, ToyPyramidHasExpectedStridesAndChannels) {
  Rng rng(1);
  Backbone<float> bb(BackboneConfig::toy(), rng);
  Rng data(2);
  const auto img = random_tensor({2, 3, 64, 48}, data, 0.0, 1.0).cast<float>();
  const auto pyr = bb.extract(RunContext{}, img);
  const int sizes_h[] = {64, 32, 16, 8, 4};
  const int sizes_w[] = {48, 24, 12, 6, 3};
  for (int i = 0; i < kPyramidLevels; ++i) {
    EXPECT_EQ(pyr[i].shape(), (Shape{2, BackboneConfig::toy().channels[i], sizes_h[i], sizes_w[i]})) << "level " << i;
  }
}

TEST(Backbone, Vgg16StyleLayout) {
  const auto cfg = BackboneConfig::vgg16();
  EXPECT_EQ(cfg.channels, (std::array<int, 5>{64, 128, 256, 512, 512}));
  Rng rng(1);
  Backbone<float> bb(cfg, rng);
  ParameterSet<float> set;
  bb.collect("backbone", set);
  // 13 convolutions with bias, no normalization.
  EXPECT_EQ(set.params.size(), 26u);
  EXPECT_TRUE(set.buffers.empty());
  EXPECT_NE(set.find("backbone.level4.2.conv.weight"), nullptr);
}

TEST(Backbone, RejectsBadBatchesNamingTheAxis) {
  Rng rng(1);
  Backbone<float> bb(BackboneConfig::toy(), rng);
  auto message = [&](Shape s, float fill = 0.5f) {
    try {
      bb.extract(RunContext{}, Tensor<float>(s, fill));
    } catch (const ShapeError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message({1, 3, 40, 32}).find("height 40"), std::string::npos);
  EXPECT_NE(message({1, 3, 32, 40}).find("width 40"), std::string::npos);
  EXPECT_NE(message({1, 1, 32, 32}).find("3 channels"), std::string::npos);
  EXPECT_NE(message({1, 3, 32, 32}, 1.5f).find("[0,1]"), std::string::npos);
  EXPECT_NE(message({0, 3, 32, 32}).find("empty"), std::string::npos);
}

TEST(Backbone, UnknownKindIsAConfigError) {
  EXPECT_THROW(parse_backbone_kind("resnet"), ConfigError);
  EXPECT_EQ(parse_backbone_kind("vgg16-style"), BackboneKind::vgg16);
  auto cfg = BackboneConfig::toy();
  cfg.channels[2] = 0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "backbone.channels[2]");
  }
}

TEST(Backbone, SameSeedGivesIdenticalFeatures) {
  Rng data(3);
  const auto img = random_tensor({1, 3, 32, 32}, data, 0.0, 1.0).cast<float>();
  Rng r1(9), r2(9);
  Backbone<float> a(BackboneConfig::toy(), r1), b(BackboneConfig::toy(), r2);
  const auto pa = a.extract(RunContext{}, img), pb = b.extract(RunContext{}, img);
  for (int i = 0; i < kPyramidLevels; ++i) EXPECT_EQ(pa[i].value().storage(), pb[i].value().storage());
}

TEST(Backbone, FeaturesAreNonNegativeAndInputDependent) {
  Rng rng(4);
  Backbone<float> bb(BackboneConfig::toy(), rng);
  const auto a = bb.extract(RunContext{}, Tensor<float>({1, 3, 32, 32}, 0.2f));
  const auto b = bb.extract(RunContext{}, Tensor<float>({1, 3, 32, 32}, 0.8f));
  double diff = 0.0;
  for (std::size_t i = 0; i < a[4].value().size(); ++i) {
    EXPECT_GE(a[4].value()[i], 0.0f);
    diff += std::abs(a[4].value()[i] - b[4].value()[i]);
  }
  EXPECT_GT(diff, 0.0);
}

}  // namespace
