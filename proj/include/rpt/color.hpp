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

#pragma once

#include <cmath>

#include "rpt/error.hpp"
#include "rpt/tensor.hpp"

namespace rpt {

namespace detail {

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace detail

struct Lab {
  double l, a, b;
};

/// sRGB in [0,1] to CIELAB under the D65 white point.
inline Lab srgb_to_lab(double r, double g, double b) {
  const double rl = detail::srgb_to_linear(r);
  const double gl = detail::srgb_to_linear(g);
  const double bl = detail::srgb_to_linear(b);
  const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  const double fx = detail::lab_f(x / 0.95047);
  const double fy = detail::lab_f(y / 1.00000);
  const double fz = detail::lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Per-pixel conversion; output channels are (L*, a*, b*).
inline FeatureMap rgb_to_lab(const Image& image) {
  if (image.depth() != 3) throw InvalidArgument("rgb_to_lab needs a 3-channel image");
  FeatureMap out(image.height(), image.width(), 3);
  for (std::size_t p = 0; p < image.pixels(); ++p) {
    auto px = image.pixel(p);
    const Lab lab = srgb_to_lab(px[0], px[1], px[2]);
    auto dst = out.pixel(p);
    dst[0] = lab.l;
    dst[1] = lab.a;
    dst[2] = lab.b;
  }
  return out;
}

}  // namespace rpt
