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

// Per-class intersection over union.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/tensor.hpp"

namespace rpt {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  /// Rows are ground truth, columns predictions. IGNORE ground truth is skipped.
  void add(const LabelMap& pred, const LabelMap& gt) {
    if (!pred.same_extent(gt)) throw InvalidArgument("prediction and ground truth differ in size");
    for (std::size_t p = 0; p < gt.pixels(); ++p) {
      const std::uint8_t g = gt.data()[p], y = pred.data()[p];
      if (g == kIgnoreLabel || y == kIgnoreLabel) continue;
      if (g >= classes_ || y >= classes_) throw InvalidArgument("label outside class range");
      ++counts_[g * classes_ + y];
    }
  }

  std::uint64_t operator()(std::size_t gt, std::size_t pred) const { return counts_[gt * classes_ + pred]; }
  std::size_t classes() const { return classes_; }

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouReport {
  std::vector<double> iou;     // NaN for classes absent from both prediction and ground truth
  std::vector<bool> present;
  double miou = 0.0;
};

inline IouReport iou_report(const ConfusionMatrix& cm) {
  const std::size_t C = cm.classes();
  IouReport r;
  r.iou.assign(C, std::numeric_limits<double>::quiet_NaN());
  r.present.assign(C, false);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::uint64_t tp = cm(c, c), fp = 0, fn = 0;
    for (std::size_t o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += cm(o, c);
      fn += cm(c, o);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    r.present[c] = true;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += r.iou[c];
    ++n;
  }
  r.miou = n == 0 ? 0.0 : sum / static_cast<double>(n);
  return r;
}

inline IouReport evaluate_labels(const LabelMap& pred, const LabelMap& gt, std::size_t classes) {
  ConfusionMatrix cm(classes);
  cm.add(pred, gt);
  return iou_report(cm);
}

}  // namespace rpt
