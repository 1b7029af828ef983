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

// Dense row-major grids (row, column, channel) and the domain types built on
// them. Each domain type is a distinct instantiation so an Image cannot be
// passed where a ProbMap is expected.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rpt/error.hpp"

namespace rpt {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Nearest f32 value. The volatile store forces the narrowing; GCC 11 at -O3
/// can drop a plain double -> float -> double round trip inside vectorized loops.
inline double round_to_f32(double v) {
  volatile float narrowed = static_cast<float>(v);
  return narrowed;
}

template <class T, class Tag>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t height, std::size_t width, std::size_t depth, T fill = T{})
      : height_(height), width_(width), depth_(depth), data_(height * width * depth, fill) {}
  Grid(std::size_t height, std::size_t width, std::size_t depth, std::vector<T> data)
      : height_(height), width_(width), depth_(depth), data_(std::move(data)) {
    if (data_.size() != height_ * width_ * depth_)
      throw InvalidArgument("grid data length does not match its shape");
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t depth() const { return depth_; }
  std::size_t pixels() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c, std::size_t k = 0) {
    return data_[(r * width_ + c) * depth_ + k];
  }
  const T& operator()(std::size_t r, std::size_t c, std::size_t k = 0) const {
    return data_[(r * width_ + c) * depth_ + k];
  }

  /// All channels of the pixel at flat index `p = r * width + c`.
  std::span<T> pixel(std::size_t p) { return {data_.data() + p * depth_, depth_}; }
  std::span<const T> pixel(std::size_t p) const { return {data_.data() + p * depth_, depth_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  template <class U, class OtherTag>
  bool same_extent(const Grid<U, OtherTag>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t depth_ = 0;
  std::vector<T> data_;
};

struct ImageTag {};
struct LabelTag {};
struct ProbTag {};
struct FeatureTag {};
struct LogitsTag {};
struct SuperpixelTag {};

/// RGB (or any channel count) values in [0,1].
using Image = Grid<double, ImageTag>;
/// One category per pixel; kIgnoreLabel marks unlabeled pixels.
using LabelMap = Grid<std::uint8_t, LabelTag>;
/// Per-pixel categorical distribution.
using ProbMap = Grid<double, ProbTag>;
/// Arbitrary per-pixel feature vectors.
using FeatureMap = Grid<double, FeatureTag>;
/// Unnormalized per-pixel class scores.
using Logits = Grid<double, LogitsTag>;

/// Partition of the image into `count` superpixels with dense ids.
struct SuperpixelMap {
  Grid<std::uint16_t, SuperpixelTag> ids;
  std::size_t count = 0;

  std::size_t height() const { return ids.height(); }
  std::size_t width() const { return ids.width(); }
  std::uint16_t operator()(std::size_t r, std::size_t c) const { return ids(r, c); }
  std::uint16_t at(std::size_t p) const { return ids.data()[p]; }

  friend bool operator==(const SuperpixelMap&, const SuperpixelMap&) = default;
};

/// Small row-major matrix used for pooled features, centroids and weights.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline void validate(const Image& image) {
  for (double v : image.data())
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw InvalidArgument("image value outside [0,1]");
}

inline void validate(const LabelMap& labels, std::size_t classes) {
  for (std::uint8_t v : labels.data())
    if (v != kIgnoreLabel && v >= classes)
      throw InvalidArgument("label " + std::to_string(v) + " outside class range");
}

/// Rejects any pixel whose distribution is negative or does not sum to 1 within 1e-5.
inline void validate(const ProbMap& probs) {
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    double sum = 0.0;
    for (double v : probs.pixel(p)) {
      if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("probability negative or non-finite");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-5)
      throw InvalidArgument("pixel " + std::to_string(p) + " distribution does not sum to 1");
  }
}

inline void validate(const FeatureMap& features) {
  for (double v : features.data())
    if (!std::isfinite(v)) throw InvalidArgument("feature value not finite");
}

/// Per-pixel softmax of logits.
inline ProbMap softmax(const Logits& logits) {
  ProbMap out(logits.height(), logits.width(), logits.depth());
  for (std::size_t p = 0; p < logits.pixels(); ++p) {
    auto in = logits.pixel(p);
    auto dst = out.pixel(p);
    double mx = in[0];
    for (double v : in) mx = v > mx ? v : mx;
    double sum = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      dst[k] = std::exp(in[k] - mx);
      sum += dst[k];
    }
    for (double& v : dst) v /= sum;
  }
  return out;
}

}  // namespace rpt
