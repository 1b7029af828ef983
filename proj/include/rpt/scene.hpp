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

// Procedural street scenes with pixel-exact labels.
//
// Every column follows the same vertical grammar: sky at the top, then a
// building facade (with optional vegetation along its base), then road with
// cars parked inside it. The structural layout depends only on the seed; the
// appearance parameters (hue rotation, texture, noise) turn a layout into a
// source-style or target-style image.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rpt/color.hpp"
#include "rpt/error.hpp"
#include "rpt/random.hpp"
#include "rpt/tensor.hpp"
#include "rpt/tensor_io.hpp"

namespace rpt {

enum Category : std::uint8_t { kRoad = 0, kBuilding = 1, kSky = 2, kVegetation = 3, kCar = 4 };
inline constexpr std::size_t kNumClasses = 5;
inline constexpr std::array<const char*, kNumClasses> kClassNames = {"road", "building", "sky", "vegetation", "car"};

using ClassPalette = std::array<std::array<double, 3>, kNumClasses>;

inline constexpr ClassPalette kDefaultClassPalette = {{
    {0.40, 0.38, 0.42},  // road
    {0.62, 0.48, 0.36},  // building
    {0.50, 0.70, 0.92},  // sky
    {0.30, 0.56, 0.22},  // vegetation
    {0.78, 0.18, 0.16},  // car
}};

struct DomainParams {
  ClassPalette palette = kDefaultClassPalette;
  double hue_shift = 0.0;  // radians, rotation about the gray axis
  double noise_sigma = 0.0;
  double texture_amp = 0.0;
  std::uint64_t seed = 0;
};

/// Appearance regime used for labeled training data.
inline DomainParams source_domain(std::uint64_t seed) {
  DomainParams p;
  p.hue_shift = 0.0;
  p.noise_sigma = 0.02;
  p.texture_amp = 0.06;
  p.seed = seed;
  return p;
}

/// Appearance regime of the unlabeled domain.
inline DomainParams target_domain(std::uint64_t seed) {
  DomainParams p;
  p.hue_shift = 0.5;
  p.noise_sigma = 0.08;
  p.texture_amp = 0.12;
  p.seed = seed;
  return p;
}

/// Source and target appearance of the seeded benchmark; the two domains use
/// unrelated structural seeds.
inline std::pair<DomainParams, DomainParams> benchmark_domains(std::uint64_t seed) {
  return {source_domain(mix_seed(seed, 100)), target_domain(mix_seed(seed, 200))};
}

struct Scene {
  Image image;
  LabelMap labels;
  FeatureMap features;
};

inline constexpr std::size_t kMinSceneSide = 32;

namespace detail {

inline std::size_t scaled(double fraction, std::size_t extent) {
  return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(extent)));
}

inline LabelMap scene_layout(std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng(mix_seed(seed, 0));
  LabelMap labels(height, width, 1, kSky);
  const std::size_t road_top = scaled(rng.uniform(0.62, 0.72), height);

  bool any_vegetation = false;
  std::size_t x = 0;
  while (x < width) {
    std::size_t w = std::max<std::size_t>(scaled(rng.uniform(0.15, 0.35), width), 4);
    if (width - (x + std::min(w, width - x)) < 4) w = width - x;  // no sliver blocks at the edge
    w = std::min(w, width - x);
    const std::size_t top = scaled(rng.uniform(0.15, 0.45), height);
    for (std::size_t r = top; r < road_top; ++r)
      for (std::size_t c = x; c < x + w; ++c) labels(r, c) = kBuilding;

    const bool last_block = x + w == width;
    const bool hedge = rng.uniform() < 0.6 || (last_block && !any_vegetation);
    const std::size_t veg_height = std::min(scaled(rng.uniform(0.10, 0.22), height), road_top - top - 3);
    const std::size_t inset_l = scaled(rng.uniform(0.0, 0.3), w);
    const std::size_t inset_r = scaled(rng.uniform(0.0, 0.3), w);
    if (hedge && veg_height > 0 && inset_l + inset_r + 2 <= w) {
      any_vegetation = true;
      for (std::size_t r = road_top - veg_height; r < road_top; ++r)
        for (std::size_t c = x + inset_l; c < x + w - inset_r; ++c) labels(r, c) = kVegetation;
    }
    x += w;
  }

  for (std::size_t r = road_top; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) labels(r, c) = kRoad;

  const std::size_t cars = 1 + rng.index(3);
  for (std::size_t i = 0; i < cars; ++i) {
    const std::size_t cw = std::max<std::size_t>(scaled(rng.uniform(0.20, 0.35), width), 3);
    const std::size_t ch =
        std::min(std::max<std::size_t>(scaled(rng.uniform(0.12, 0.20), height), 2), height - road_top - 2);
    const std::size_t min_top = road_top + 2;
    const std::size_t max_top = height - ch;  // cars may touch the bottom edge
    const std::size_t top = min_top + rng.index(max_top - min_top + 1);
    const std::size_t left = rng.index(width - cw + 1);
    for (std::size_t r = top; r < top + ch; ++r)
      for (std::size_t c = left; c < left + cw; ++c) labels(r, c) = kCar;
  }
  return labels;
}

/// Brightness texture in roughly [-1, 1] for a pixel of the given class.
inline double texture(std::uint8_t label, std::size_t r, std::size_t c, std::size_t height) {
  switch (label) {
    case kSky: return 2.0 * static_cast<double>(r) / static_cast<double>(height) - 0.5;
    case kBuilding: return (r % 4 < 2 && c % 4 < 2) ? -1.0 : 0.4;
    case kRoad: return 0.6 * std::sin(0.8 * static_cast<double>(c) + 0.3 * static_cast<double>(r));
    case kVegetation: return std::sin(0.9 * static_cast<double>(r)) * std::cos(0.7 * static_cast<double>(c));
    case kCar: return 0.6 * std::cos(0.5 * static_cast<double>(c));
  }
  return 0.0;
}

inline std::array<double, 9> hue_rotation(double angle) {
  const double cs = std::cos(angle);
  const double sn = std::sin(angle) / std::numbers::sqrt3;
  const double t = (1.0 - cs) / 3.0;
  return {cs + t, t - sn, t + sn, t + sn, cs + t, t - sn, t - sn, t + sn, cs + t};
}

}  // namespace detail

/// Lab / 100 followed by row and column normalized to [0,1] (5 channels).
inline FeatureMap scene_features(const Image& image) {
  const FeatureMap lab = rgb_to_lab(image);
  FeatureMap f(image.height(), image.width(), 5);
  const double hr = image.height() > 1 ? static_cast<double>(image.height() - 1) : 1.0;
  const double wr = image.width() > 1 ? static_cast<double>(image.width() - 1) : 1.0;
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      for (std::size_t k = 0; k < 3; ++k) f(r, c, k) = round_to_f32(lab(r, c, k) / 100.0);
      f(r, c, 3) = round_to_f32(static_cast<double>(r) / hr);
      f(r, c, 4) = round_to_f32(static_cast<double>(c) / wr);
    }
  }
  return f;
}

inline Scene gen_scene(const DomainParams& params, std::size_t height, std::size_t width) {
  if (height < kMinSceneSide || width < kMinSceneSide) throw InvalidArgument("scene must be at least 32x32");
  require(params.noise_sigma >= 0.0 && params.texture_amp >= 0.0, "noise_sigma and texture_amp must be >= 0");

  Scene scene;
  scene.labels = detail::scene_layout(params.seed, height, width);
  scene.image = Image(height, width, 3);
  Rng rng(mix_seed(params.seed, 1));
  const auto rot = detail::hue_rotation(params.hue_shift);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::uint8_t label = scene.labels(r, c);
      const double shade = params.texture_amp * detail::texture(label, r, c, height);
      std::array<double, 3> rgb{};
      for (std::size_t k = 0; k < 3; ++k) rgb[k] = params.palette[label][k] + shade;
      for (std::size_t k = 0; k < 3; ++k) {
        double v = rot[3 * k] * rgb[0] + rot[3 * k + 1] * rgb[1] + rot[3 * k + 2] * rgb[2];
        v += params.noise_sigma * rng.normal();
        scene.image(r, c, k) = round_to_f32(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  scene.features = scene_features(scene.image);
  return scene;
}

// ---------------------------------------------------------------------------
// Datasets and manifests.

struct ManifestEntry {
  std::string domain;  // "source" or "target"
  std::string split;   // "train"
  std::string image_path;
  std::string label_path;
  std::string feature_path;
  bool eval_only = false;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline std::string format_manifest_line(const ManifestEntry& e) {
  return e.domain + "," + e.split + "," + e.image_path + "," + e.label_path + "," + e.feature_path + "," +
         (e.eval_only ? "true" : "false");
}

inline ManifestEntry parse_manifest_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != 6) throw FormatError("manifest line needs 6 fields: " + line);
  if (fields[5] != "true" && fields[5] != "false") throw FormatError("eval_only must be true/false: " + line);
  return {fields[0], fields[1], fields[2], fields[3], fields[4], fields[5] == "true"};
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    entries.push_back(parse_manifest_line(line));
  }
  return entries;
}

struct GenDatasetOptions {
  std::size_t n_source = 100;
  std::size_t n_target = 40;
  std::size_t height = 64;
  std::size_t width = 64;
};

/// Scene `i` of a domain uses seed mix_seed(params.seed, i).
inline std::filesystem::path gen_dataset(const DomainParams& source, const DomainParams& target,
                                         const GenDatasetOptions& options, const std::filesystem::path& out_dir) {
  require(options.n_source >= 1 && options.n_target >= 1, "dataset counts must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  auto emit = [&](const DomainParams& base, const std::string& domain, std::size_t count, bool eval_only) {
    std::filesystem::create_directories(out_dir / domain);
    for (std::size_t i = 0; i < count; ++i) {
      DomainParams params = base;
      params.seed = mix_seed(base.seed, i);
      const Scene scene = gen_scene(params, options.height, options.width);
      char stem[64];
      std::snprintf(stem, sizeof stem, "%s/train_%04zu", domain.c_str(), i);
      ManifestEntry e{domain, "train", std::string(stem) + "_image.rptt", std::string(stem) + "_label.rptt",
                      std::string(stem) + "_feature.rptt", eval_only};
      write_tensor(out_dir / e.image_path, to_raw(scene.image));
      write_tensor(out_dir / e.label_path, to_raw(scene.labels));
      write_tensor(out_dir / e.feature_path, to_raw(scene.features));
      entries.push_back(std::move(e));
    }
  };
  emit(source, "source", options.n_source, false);
  emit(target, "target", options.n_target, true);

  const auto manifest = out_dir / "manifest.txt";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error("cannot write " + manifest.string());
  for (const auto& e : entries) out << format_manifest_line(e) << '\n';
  return manifest;
}

struct Sample {
  Image image;
  LabelMap labels;  // empty when the manifest has no labels
  FeatureMap features;
};

struct Dataset {
  std::vector<Sample> source;
  std::vector<Sample> target;  // labels are eval-only
};

inline Dataset load_dataset(const std::filesystem::path& manifest) {
  const auto base = manifest.parent_path();
  Dataset data;
  for (const auto& e : read_manifest(manifest)) {
    Sample s;
    s.image = grid_from_raw<Image>(read_tensor(base / e.image_path));
    s.labels = labels_from_raw(read_tensor(base / e.label_path));
    s.features = grid_from_raw<FeatureMap>(read_tensor(base / e.feature_path));
    if (!s.labels.same_extent(s.image) || !s.features.same_extent(s.image))
      throw FormatError("image, label and feature sizes disagree for " + e.image_path);
    validate(s.image);
    validate(s.labels, kNumClasses);
    if (e.domain == "source") {
      data.source.push_back(std::move(s));
    } else if (e.domain == "target") {
      data.target.push_back(std::move(s));
    } else {
      throw FormatError("unknown domain '" + e.domain + "'");
    }
  }
  if (data.source.empty() || data.target.empty()) throw FormatError("manifest needs source and target entries");
  return data;
}

/// In-memory equivalent of gen_dataset followed by load_dataset.
inline Dataset make_dataset(const DomainParams& source, const DomainParams& target, const GenDatasetOptions& options) {
  Dataset data;
  for (std::size_t i = 0; i < options.n_source; ++i) {
    DomainParams p = source;
    p.seed = mix_seed(source.seed, i);
    Scene s = gen_scene(p, options.height, options.width);
    data.source.push_back({std::move(s.image), std::move(s.labels), std::move(s.features)});
  }
  for (std::size_t i = 0; i < options.n_target; ++i) {
    DomainParams p = target;
    p.seed = mix_seed(target.seed, i);
    Scene s = gen_scene(p, options.height, options.width);
    data.target.push_back({std::move(s.image), std::move(s.labels), std::move(s.features)});
  }
  return data;
}

}  // namespace rpt
