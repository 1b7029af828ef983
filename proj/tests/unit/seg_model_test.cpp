/* Copyright 2026 The RPT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "rpt/rpt.hpp"
#include "test_support.hpp"

namespace rpt {
namespace {

TEST(SegHead, ZeroParametersGiveZeroOutputs) {
  Rng rng(1);
  const SegHead m = make_seg_head(3, 6, 5);
  const auto out = forward_seg(m, testing::random_image(rng, 4, 5));
  for (double v : out.logits.data()) EXPECT_EQ(v, 0.0);
  for (double v : out.hidden.data()) EXPECT_EQ(v, 0.0);
}

TEST(SegHead, ConstantImageGivesConstantLogits) {
  const SegHead m = init_seg_head(3, 8, 5, 2);
  const auto out = forward_seg(m, Image(6, 7, 3, 0.4));
  for (std::size_t p = 1; p < out.logits.pixels(); ++p)
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(out.logits.pixel(p)[k], out.logits.pixel(0)[k]);
}

TEST(SegHead, GradientMatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto check = testing::check_seg_head_gradient(700 + seed);
    EXPECT_LT(check.error, 1e-4) << "seed " << seed;
  }
}

TEST(SegHead, RejectsChannelMismatch) {
  EXPECT_THROW(forward_seg(make_seg_head(3, 2, 2), Image(2, 2, 1)), InvalidArgument);
}

TEST(SegHead, BundleRoundTripAfterQuantization) {
  SegHead m = init_seg_head(3, 5, 4, 9);
  quantize_to_f32(m);
  for (auto b : std::as_const(m).blocks())
    for (double v : b) ASSERT_EQ(static_cast<double>(static_cast<float>(v)), v);
  const auto dir = std::filesystem::temp_directory_path() / "rpt_unit_seghead";
  std::filesystem::remove_all(dir);
  to_bundle(m).save(dir);
  EXPECT_EQ(seg_head_from_bundle(TensorBundle::load(dir)), m);
}

TEST(Discriminator, UninformativeGivesTwoLnTwo) {
  Rng rng(2);
  const auto src = testing::random_hidden_maps(rng, 2, 4);
  const auto tgt = testing::random_hidden_maps(rng, 1, 4);
  const auto r = adv_loss(make_discriminator(4), src, tgt);
  EXPECT_NEAR(r.loss, 2.0 * std::log(2.0), 1e-15);
  for (double v : discriminate(make_discriminator(4), src[0])) EXPECT_EQ(v, 0.5);
}

TEST(Discriminator, PerfectDiscriminatorApproachesZero) {
  const FeatureMap src(2, 2, 1, -1.0), tgt(2, 2, 1, 1.0);
  Discriminator d = make_discriminator(1);
  d.w[0] = 40.0;
  EXPECT_LT(adv_loss(d, src, tgt).loss, 1e-15);
  EXPECT_GT(adv_loss(d, tgt, src).loss, 70.0);
}

TEST(Discriminator, HiddenGradientMatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto check = testing::check_adv_hidden_gradient(800 + seed);
    EXPECT_LT(check.error, 1e-4) << "seed " << seed;
  }
}

TEST(Discriminator, ParameterGradientMatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto check = testing::check_discriminator_gradient(900 + seed);
    EXPECT_LT(check.error, 1e-4) << "seed " << seed;
  }
}

TEST(Discriminator, BundleRoundTrip) {
  Discriminator d{{0.5, -0.25, 1.0}, 0.125};
  const auto dir = std::filesystem::temp_directory_path() / "rpt_unit_disc";
  std::filesystem::remove_all(dir);
  to_bundle(d).save(dir);
  EXPECT_EQ(discriminator_from_bundle(TensorBundle::load(dir)), d);
}

TEST(Discriminator, RejectsDepthMismatchAndEmptyDomains) {
  const FeatureMap m(2, 2, 3);
  EXPECT_THROW(adv_loss(make_discriminator(2), m, m), InvalidArgument);
  EXPECT_THROW(adv_loss(make_discriminator(3), std::span<const FeatureMap>{}, std::span<const FeatureMap>(&m, 1)),
               InvalidArgument);
}

}  // namespace
}  // namespace rpt
