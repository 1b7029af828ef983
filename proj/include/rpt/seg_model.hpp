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

// Desk-scale segmentation network and per-pixel domain discriminator.
//
// SegHead maps the 3x3 neighborhood of every pixel (edge-replicated, 27
// inputs for RGB) through a tanh hidden layer to class logits. Its hidden
// activations are the representation the discriminator sees.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/random.hpp"
#include "rpt/tensor.hpp"
#include "rpt/tensor_io.hpp"

namespace rpt {

struct SegHead {
  std::size_t channels = 3;
  std::size_t hidden = 16;
  std::size_t classes = 5;
  Matrix w1;  // hidden x (9 * channels)
  std::vector<double> b1;
  Matrix w2;  // classes x hidden
  std::vector<double> b2;

  std::size_t inputs() const { return 9 * channels; }

  std::vector<std::span<double>> blocks() { return {w1.data, b1, w2.data, b2}; }
  std::vector<std::span<const double>> blocks() const { return {w1.data, b1, w2.data, b2}; }

  friend bool operator==(const SegHead&, const SegHead&) = default;
};

/// Zero-initialized head.
inline SegHead make_seg_head(std::size_t channels, std::size_t hidden, std::size_t classes) {
  require(channels >= 1 && hidden >= 1 && classes >= 2, "bad SegHead shape");
  SegHead m;
  m.channels = channels;
  m.hidden = hidden;
  m.classes = classes;
  m.w1 = Matrix(hidden, 9 * channels);
  m.b1.assign(hidden, 0.0);
  m.w2 = Matrix(classes, hidden);
  m.b2.assign(classes, 0.0);
  return m;
}

/// Glorot-uniform weights, zero biases.
inline SegHead init_seg_head(std::size_t channels, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  SegHead m = make_seg_head(channels, hidden, classes);
  Rng rng(seed);
  const double a1 = std::sqrt(6.0 / static_cast<double>(m.inputs() + hidden));
  for (double& v : m.w1.data) v = rng.uniform(-a1, a1);
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
  for (double& v : m.w2.data) v = rng.uniform(-a2, a2);
  return m;
}

struct SegForward {
  Logits logits;
  FeatureMap hidden;
};

namespace detail {

/// 3x3 edge-replicated neighborhood of (r, c), ordered (dr, dc, channel).
inline void gather_patch(const Image& image, std::size_t r, std::size_t c, std::span<double> out) {
  const std::size_t H = image.height(), W = image.width(), D = image.depth();
  std::size_t k = 0;
  for (int dr = -1; dr <= 1; ++dr) {
    const std::size_t rr = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(r) + dr, 0, static_cast<std::ptrdiff_t>(H) - 1));
    for (int dc = -1; dc <= 1; ++dc) {
      const std::size_t cc = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
          static_cast<std::ptrdiff_t>(c) + dc, 0, static_cast<std::ptrdiff_t>(W) - 1));
      for (std::size_t ch = 0; ch < D; ++ch) out[k++] = image(rr, cc, ch);
    }
  }
}

}  // namespace detail

inline SegForward forward_seg(const SegHead& model, const Image& image) {
  if (image.depth() != model.channels) throw InvalidArgument("image channel count does not match SegHead");
  SegForward out;
  out.logits = Logits(image.height(), image.width(), model.classes);
  out.hidden = FeatureMap(image.height(), image.width(), model.hidden);
  std::vector<double> x(model.inputs());
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      detail::gather_patch(image, r, c, x);
      const std::size_t p = r * image.width() + c;
      auto h = out.hidden.pixel(p);
      for (std::size_t j = 0; j < model.hidden; ++j) {
        double s = model.b1[j];
        const auto w = model.w1.row(j);
        for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
        h[j] = std::tanh(s);
      }
      auto z = out.logits.pixel(p);
      for (std::size_t k = 0; k < model.classes; ++k) {
        double s = model.b2[k];
        const auto w = model.w2.row(k);
        for (std::size_t j = 0; j < model.hidden; ++j) s += w[j] * h[j];
        z[k] = s;
      }
    }
  }
  return out;
}

/// Accumulates parameter gradients given d loss / d logits and, optionally,
/// an extra d loss / d hidden (from the adversarial term).
inline void backward_seg(const SegHead& model, const Image& image, const SegForward& fwd, const Logits& dlogits,
                         const FeatureMap* dhidden, SegHead& grad) {
  std::vector<double> x(model.inputs()), dh(model.hidden);
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      const std::size_t p = r * image.width() + c;
      const auto dz = dlogits.pixel(p);
      const auto h = fwd.hidden.pixel(p);
      bool any = false;
      for (double v : dz) any |= v != 0.0;
      if (dhidden)
        for (double v : dhidden->pixel(p)) any |= v != 0.0;
      if (!any) continue;

      if (dhidden) {
        const auto e = dhidden->pixel(p);
        std::copy(e.begin(), e.end(), dh.begin());
      } else {
        std::fill(dh.begin(), dh.end(), 0.0);
      }
      for (std::size_t k = 0; k < model.classes; ++k) {
        if (dz[k] == 0.0) continue;
        grad.b2[k] += dz[k];
        auto gw = grad.w2.row(k);
        const auto w = model.w2.row(k);
        for (std::size_t j = 0; j < model.hidden; ++j) {
          gw[j] += dz[k] * h[j];
          dh[j] += dz[k] * w[j];
        }
      }
      detail::gather_patch(image, r, c, x);
      for (std::size_t j = 0; j < model.hidden; ++j) {
        const double da = dh[j] * (1.0 - h[j] * h[j]);
        if (da == 0.0) continue;
        grad.b1[j] += da;
        auto gw = grad.w1.row(j);
        for (std::size_t i = 0; i < x.size(); ++i) gw[i] += da * x[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Discriminator

/// Per-pixel logistic regression over hidden activations; D = 1 means "target".
struct Discriminator {
  std::vector<double> w;
  double b = 0.0;

  friend bool operator==(const Discriminator&, const Discriminator&) = default;
};

inline Discriminator make_discriminator(std::size_t features) { return {std::vector<double>(features, 0.0), 0.0}; }

struct AdvResult {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
  std::vector<FeatureMap> grad_src;  // d loss / d hidden, one per source map
  std::vector<FeatureMap> grad_tgt;
};

namespace detail {

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double disc_logit(const Discriminator& d, std::span<const double> h) {
  double z = d.b;
  for (std::size_t j = 0; j < h.size(); ++j) z += d.w[j] * h[j];
  return z;
}

}  // namespace detail

/// Per-unit discriminator output in (0, 1).
inline std::vector<double> discriminate(const Discriminator& d, const FeatureMap& hidden) {
  std::vector<double> out(hidden.pixels());
  for (std::size_t p = 0; p < hidden.pixels(); ++p)
    out[p] = 1.0 / (1.0 + std::exp(-detail::disc_logit(d, hidden.pixel(p))));
  return out;
}

/// L_adv = -E_tgt[log D] - E_src[log(1 - D)], each expectation taken over all
/// spatial units of all maps of that domain.
inline AdvResult adv_loss(const Discriminator& d, std::span<const FeatureMap> src, std::span<const FeatureMap> tgt) {
  if (src.empty() || tgt.empty()) throw InvalidArgument("adv_loss needs source and target maps");
  AdvResult r;
  r.grad_w.assign(d.w.size(), 0.0);
  auto domain = [&](std::span<const FeatureMap> maps, bool is_target, std::vector<FeatureMap>& grads) {
    std::size_t units = 0;
    for (const auto& m : maps) {
      if (m.depth() != d.w.size()) throw InvalidArgument("hidden depth does not match discriminator");
      units += m.pixels();
    }
    const double inv = 1.0 / static_cast<double>(units);
    for (const auto& m : maps) {
      FeatureMap g(m.height(), m.width(), m.depth());
      for (std::size_t p = 0; p < m.pixels(); ++p) {
        const auto h = m.pixel(p);
        const double z = detail::disc_logit(d, h);
        const double sig = 1.0 / (1.0 + std::exp(-z));
        // target: -log D = softplus(-z);  source: -log(1-D) = softplus(z)
        r.loss += (is_target ? detail::softplus(-z) : detail::softplus(z)) * inv;
        const double dz = (is_target ? sig - 1.0 : sig) * inv;
        r.grad_b += dz;
        auto gh = g.pixel(p);
        for (std::size_t j = 0; j < h.size(); ++j) {
          r.grad_w[j] += dz * h[j];
          gh[j] = dz * d.w[j];
        }
      }
      grads.push_back(std::move(g));
    }
  };
  domain(src, false, r.grad_src);
  domain(tgt, true, r.grad_tgt);
  return r;
}

inline AdvResult adv_loss(const Discriminator& d, const FeatureMap& src, const FeatureMap& tgt) {
  return adv_loss(d, std::span<const FeatureMap>(&src, 1), std::span<const FeatureMap>(&tgt, 1));
}

// ---------------------------------------------------------------------------
// Persistence

inline TensorBundle to_bundle(const SegHead& m) {
  auto vec = [](const std::vector<double>& v) {
    return RawTensor{{static_cast<std::uint32_t>(v.size())}, std::vector<float>(v.begin(), v.end())};
  };
  TensorBundle b;
  b.put("w1", to_raw(m.w1));
  b.put("b1", vec(m.b1));
  b.put("w2", to_raw(m.w2));
  b.put("b2", vec(m.b2));
  return b;
}

inline SegHead seg_head_from_bundle(const TensorBundle& b) {
  const Matrix w1 = matrix_from_raw(b.get("w1"));
  const Matrix w2 = matrix_from_raw(b.get("w2"));
  if (w1.cols % 9 != 0 || w2.cols != w1.rows) throw FormatError("SegHead tensors have inconsistent shapes");
  SegHead m = make_seg_head(w1.cols / 9, w1.rows, w2.rows);
  m.w1 = w1;
  m.w2 = w2;
  auto vec = [&](const char* name, std::vector<double>& dst) {
    const auto& t = b.get(name);
    if (t.dtype() != DType::kF32 || t.dims.size() != 1 || t.dims[0] != dst.size())
      throw FormatError(std::string("SegHead tensor ") + name + " has the wrong shape");
    const auto& v = t.values<float>();
    std::copy(v.begin(), v.end(), dst.begin());
  };
  vec("b1", m.b1);
  vec("b2", m.b2);
  return m;
}

inline TensorBundle to_bundle(const Discriminator& d) {
  TensorBundle b;
  b.put("w", RawTensor{{static_cast<std::uint32_t>(d.w.size())}, std::vector<float>(d.w.begin(), d.w.end())});
  b.put("b", RawTensor{{1}, std::vector<float>{static_cast<float>(d.b)}});
  return b;
}

inline Discriminator discriminator_from_bundle(const TensorBundle& b) {
  const auto& w = b.get("w");
  const auto& bias = b.get("b");
  if (w.dtype() != DType::kF32 || w.dims.size() != 1 || bias.dtype() != DType::kF32 ||
      bias.dims != std::vector<std::uint32_t>{1})
    throw FormatError("discriminator tensors have the wrong shape");
  Discriminator d;
  d.w.assign(w.values<float>().begin(), w.values<float>().end());
  d.b = bias.values<float>()[0];
  return d;
}

/// Rounds every parameter to f32 so an in-memory model equals its saved copy.
template <class Model>
void quantize_to_f32(Model& m) {
  for (auto block : m.blocks())
    for (double& v : block) v = round_to_f32(v);
}

}  // namespace rpt
