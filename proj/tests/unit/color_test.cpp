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

#include "rpt/rpt.hpp"

namespace rpt {
namespace {

// CIE form with epsilon = 216/24389 and kappa = 24389/27.
Lab reference_lab(double r, double g, double b) {
  auto lin = [](double c) { return c > 0.04045 ? std::pow((c + 0.055) / 1.055, 2.4) : c / 12.92; };
  const double R = lin(r), G = lin(g), B = lin(b);
  const double X = (0.4124564 * R + 0.3575761 * G + 0.1804375 * B) / 0.95047;
  const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
  const double Z = (0.0193339 * R + 0.1191920 * G + 0.9503041 * B) / 1.08883;
  constexpr double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
  auto f = [&](double t) { return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0; };
  return {116.0 * f(Y) - 16.0, 500.0 * (f(X) - f(Y)), 200.0 * (f(Y) - f(Z))};
}

TEST(Color, ReferenceWhite) {
  const Lab w = srgb_to_lab(1, 1, 1);
  EXPECT_NEAR(w.l, 100.0, 1e-3);
  EXPECT_NEAR(w.a, 0.0, 1e-2);
  EXPECT_NEAR(w.b, 0.0, 1e-2);
}

TEST(Color, Black) {
  const Lab k = srgb_to_lab(0, 0, 0);
  EXPECT_NEAR(k.l, 0.0, 1e-12);
  EXPECT_NEAR(k.a, 0.0, 1e-12);
  EXPECT_NEAR(k.b, 0.0, 1e-12);
}

TEST(Color, PureRed) {
  const Lab red = srgb_to_lab(1, 0, 0);
  const Lab ref = reference_lab(1, 0, 0);
  EXPECT_NEAR(ref.l, 53.24, 0.1);
  EXPECT_NEAR(ref.a, 80.09, 0.1);
  EXPECT_NEAR(ref.b, 67.20, 0.1);
  EXPECT_NEAR(red.l, ref.l, 1e-9);
  EXPECT_NEAR(red.a, ref.a, 1e-9);
  EXPECT_NEAR(red.b, ref.b, 1e-9);
}

TEST(Color, MatchesReferenceOnRandomColors) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const Lab got = srgb_to_lab(r, g, b), ref = reference_lab(r, g, b);
    ASSERT_NEAR(got.l, ref.l, 1e-6);
    ASSERT_NEAR(got.a, ref.a, 1e-6);
    ASSERT_NEAR(got.b, ref.b, 1e-6);
  }
}

TEST(Color, ImageConversionIsPerPixel) {
  Image im(1, 2, 3, std::vector<double>{1, 0, 0, 0, 0, 0});
  const FeatureMap lab = rgb_to_lab(im);
  EXPECT_DOUBLE_EQ(lab(0, 0, 0), srgb_to_lab(1, 0, 0).l);
  EXPECT_DOUBLE_EQ(lab(0, 1, 0), 0.0);
  EXPECT_THROW(rgb_to_lab(Image(1, 1, 1)), InvalidArgument);
}

}  // namespace
}  // namespace rpt
