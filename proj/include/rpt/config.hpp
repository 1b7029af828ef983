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

// Training configuration as UTF-8 `key = value` lines. Unknown keys are
// rejected; `#` starts a comment.

#pragma once

#include <charconv>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rpt/error.hpp"

namespace rpt {

struct TrainConfig {
  // Regularizer thresholds and weights.
  double lambda_pc = 0.25;
  double lambda_cc = 0.25;
  double lambda_sl = 0.25;
  double epsilon = 0.1;
  double keep_fraction = 0.5;
  // State updates after the initial one, evenly spaced over adaptation.
  std::size_t n_su = 3;

  // Superpixels, clustering, sequences. Zero means "derive from image size".
  std::size_t slic_n = 0;  // area / 32
  double slic_m = 60.0;
  std::size_t slic_iters = 10;
  std::size_t k = 32;
  std::size_t kmeans_iters = 100;
  std::size_t n_strips = 0;  // width / 8

  // Spatial-logic model.
  std::size_t logic_hidden = 32;
  std::size_t logic_epochs = 30;
  double logic_lr = 0.1;

  // Segmentation head and schedules.
  std::size_t seg_hidden = 16;
  std::size_t pretrain_iters = 2000;
  double pretrain_lr = 0.5;
  std::size_t adapt_iters = 1500;
  double adapt_lr = 2e-5;
  double disc_lr = 0.5;
  double poly_power = 0.9;
  std::size_t log_interval = 100;

  std::uint64_t seed = 7;
  std::size_t threads = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace detail {

struct ConfigField {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw InvalidArgument("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvalidArgument("cannot format value");
  return std::string(buf, ptr);
}

#define RPT_REAL_FIELD(name)                                                          \
  ConfigField {                                                                       \
    #name, [](const TrainConfig& c) { return format_double(c.name); },                \
        [](TrainConfig& c, const std::string& v) { c.name = parse_number<double>(#name, v); } \
  }
#define RPT_COUNT_FIELD(name)                                                          \
  ConfigField {                                                                        \
    #name, [](const TrainConfig& c) { return std::to_string(c.name); },                \
        [](TrainConfig& c, const std::string& v) { c.name = parse_number<std::size_t>(#name, v); } \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      RPT_REAL_FIELD(lambda_pc),      RPT_REAL_FIELD(lambda_cc),     RPT_REAL_FIELD(lambda_sl),
      RPT_REAL_FIELD(epsilon),        RPT_REAL_FIELD(keep_fraction), RPT_COUNT_FIELD(n_su),
      RPT_COUNT_FIELD(slic_n),        RPT_REAL_FIELD(slic_m),        RPT_COUNT_FIELD(slic_iters),
      RPT_COUNT_FIELD(k),             RPT_COUNT_FIELD(kmeans_iters), RPT_COUNT_FIELD(n_strips),
      RPT_COUNT_FIELD(logic_hidden),  RPT_COUNT_FIELD(logic_epochs), RPT_REAL_FIELD(logic_lr),
      RPT_COUNT_FIELD(seg_hidden),    RPT_COUNT_FIELD(pretrain_iters), RPT_REAL_FIELD(pretrain_lr),
      RPT_COUNT_FIELD(adapt_iters),   RPT_REAL_FIELD(adapt_lr),      RPT_REAL_FIELD(disc_lr),
      RPT_REAL_FIELD(poly_power),     RPT_COUNT_FIELD(log_interval),
      ConfigField{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
                  [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
      RPT_COUNT_FIELD(threads),
  };
  return fields;
}

#undef RPT_REAL_FIELD
#undef RPT_COUNT_FIELD

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::config_fields()) keys.emplace_back(f.key);
  return keys;
}

inline std::string config_value(const TrainConfig& config, const std::string& key) {
  for (const auto& f : detail::config_fields())
    if (key == f.key) return f.get(config);
  throw InvalidArgument("unknown config key '" + key + "'");
}

inline void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw InvalidArgument("unknown config key '" + key + "'");
}

inline void validate(const TrainConfig& c) {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  require(open_unit(c.lambda_pc) && open_unit(c.lambda_cc) && open_unit(c.lambda_sl), "lambdas must lie in (0,1)");
  require(c.epsilon >= 0.0, "epsilon must be >= 0");
  require(c.keep_fraction > 0.0 && c.keep_fraction <= 1.0, "keep_fraction must lie in (0,1]");
  require(c.slic_m > 0.0, "slic_m must be > 0");
  require(c.k >= 1, "k must be >= 1");
  require(c.logic_hidden >= 1 && c.seg_hidden >= 1, "hidden sizes must be >= 1");
  require(c.log_interval >= 1, "log_interval must be >= 1");
  require(c.pretrain_lr >= 0.0 && c.adapt_lr >= 0.0 && c.disc_lr >= 0.0 && c.logic_lr >= 0.0,
          "learning rates must be >= 0");
  require(c.threads >= 1, "threads must be >= 1");
}

inline TrainConfig parse_config(std::istream& in, TrainConfig config = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(config, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate(config);
  return config;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  return parse_config(in);
}

inline std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : detail::config_fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace rpt
