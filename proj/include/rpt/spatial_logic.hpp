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

// Spatial logic: vertical superpixel sequences and an LSTM encoder-decoder
// that reconstructs a sequence in which one run of identical categories has
// been replaced by a MASK token.
//
// Tokens are one-hot over C categories plus MASK (= C). The encoder reads the
// masked sequence top to bottom; the decoder starts from the encoder's final
// (h, c), reads the same masked sequence, and a linear layer plus softmax
// gives a distribution over the C categories at every position.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/random.hpp"
#include "rpt/regularizers.hpp"
#include "rpt/statistics.hpp"
#include "rpt/tensor.hpp"
#include "rpt/tensor_io.hpp"

namespace rpt {

struct TokenSequence {
  std::vector<std::uint8_t> tokens;
  std::vector<std::uint16_t> positions;  // superpixel id of each token
  std::size_t strip = 0;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Maximal span [start, end] (inclusive) of one category.
struct Run {
  std::size_t start = 0;
  std::size_t end = 0;
  std::uint8_t category = 0;

  friend bool operator==(const Run&, const Run&) = default;
};

inline std::vector<Run> runs(std::span<const std::uint8_t> tokens) {
  std::vector<Run> out;
  for (std::size_t i = 0; i < tokens.size();) {
    std::size_t j = i;
    while (j + 1 < tokens.size() && tokens[j + 1] == tokens[i]) ++j;
    out.push_back({i, j, tokens[i]});
    i = j + 1;
  }
  return out;
}

/// Slices the image into `n_strips` equal-width vertical strips. A superpixel
/// belongs to the strip holding its centroid column; tokens run top to bottom
/// by centroid row, ties by id. Invalid superpixels are skipped and sequences
/// shorter than two tokens are omitted.
inline std::vector<TokenSequence> build_column_sequences(const SuperpixelMap& sp, const SuperpixelStats& stats,
                                                         std::size_t n_strips) {
  require(n_strips >= 1, "n_strips must be >= 1");
  if (stats.size() != sp.count) throw InvalidArgument("stats do not match superpixel count");
  const double width = static_cast<double>(sp.width());
  std::vector<std::vector<std::uint16_t>> members(n_strips);
  for (std::size_t id = 0; id < sp.count; ++id) {
    if (!stats[id].valid) continue;
    auto strip = static_cast<std::size_t>((stats[id].centroid_col + 0.5) * static_cast<double>(n_strips) / width);
    members[std::min(strip, n_strips - 1)].push_back(static_cast<std::uint16_t>(id));
  }
  std::vector<TokenSequence> out;
  for (std::size_t s = 0; s < n_strips; ++s) {
    auto& ids = members[s];
    if (ids.size() < 2) continue;
    std::stable_sort(ids.begin(), ids.end(),
                     [&](std::uint16_t a, std::uint16_t b) { return stats[a].centroid_row < stats[b].centroid_row; });
    TokenSequence seq;
    seq.strip = s;
    seq.positions = ids;
    for (auto id : ids) seq.tokens.push_back(stats[id].dominant);
    out.push_back(std::move(seq));
  }
  return out;
}

/// Replaces the tokens of a maximal run by `mask_token`.
inline TokenSequence mask_run(const TokenSequence& seq, const Run& run, std::uint8_t mask_token) {
  const auto& t = seq.tokens;
  if (run.start > run.end || run.end >= t.size()) throw InvalidArgument("run outside sequence");
  for (std::size_t i = run.start; i <= run.end; ++i)
    if (t[i] != run.category) throw InvalidArgument("run is not a span of a single category");
  if ((run.start > 0 && t[run.start - 1] == run.category) || (run.end + 1 < t.size() && t[run.end + 1] == run.category))
    throw InvalidArgument("run is not maximal");
  TokenSequence out = seq;
  for (std::size_t i = run.start; i <= run.end; ++i) out.tokens[i] = mask_token;
  return out;
}

// ---------------------------------------------------------------------------
// LSTM encoder-decoder

/// Gate rows are laid out as [input, forget, candidate, output] blocks of H.
struct LstmLayer {
  Matrix wx;  // 4H x V
  Matrix wh;  // 4H x H
  std::vector<double> b;

  friend bool operator==(const LstmLayer&, const LstmLayer&) = default;
};

struct LogicModel {
  std::size_t classes = 0;
  std::size_t hidden = 0;
  LstmLayer encoder;
  LstmLayer decoder;
  Matrix w_out;  // C x H
  std::vector<double> b_out;

  std::size_t vocabulary() const { return classes + 1; }
  std::uint8_t mask_token() const { return static_cast<std::uint8_t>(classes); }

  /// Every parameter tensor, in a fixed order.
  std::vector<std::span<double>> blocks() {
    return {encoder.wx.data, encoder.wh.data, encoder.b, decoder.wx.data, decoder.wh.data, decoder.b,
            w_out.data,      b_out};
  }
  std::vector<std::span<const double>> blocks() const {
    return {encoder.wx.data, encoder.wh.data, encoder.b, decoder.wx.data, decoder.wh.data, decoder.b,
            w_out.data,      b_out};
  }

  friend bool operator==(const LogicModel&, const LogicModel&) = default;
};

inline LogicModel make_logic_model(std::size_t classes, std::size_t hidden) {
  require(classes >= 1 && hidden >= 1, "logic model needs classes >= 1 and hidden >= 1");
  LogicModel m;
  m.classes = classes;
  m.hidden = hidden;
  for (LstmLayer* layer : {&m.encoder, &m.decoder}) {
    layer->wx = Matrix(4 * hidden, classes + 1);
    layer->wh = Matrix(4 * hidden, hidden);
    layer->b.assign(4 * hidden, 0.0);
  }
  m.w_out = Matrix(classes, hidden);
  m.b_out.assign(classes, 0.0);
  return m;
}

inline void init_uniform(LogicModel& model, std::uint64_t seed, double scale = 0.1) {
  Rng rng(seed);
  for (auto block : model.blocks())
    for (double& v : block) v = rng.uniform(-scale, scale);
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Activations of one LSTM pass, kept for backpropagation.
struct LstmTape {
  std::vector<std::vector<double>> i, f, g, o, c, tanh_c, h;  // per step; c/h include the initial state at [0]
};

inline LstmTape lstm_run(const LstmLayer& layer, std::size_t hidden, std::span<const std::uint8_t> tokens,
                         std::span<const double> h0, std::span<const double> c0) {
  const std::size_t H = hidden, T = tokens.size();
  LstmTape tape;
  tape.h.push_back({h0.begin(), h0.end()});
  tape.c.push_back({c0.begin(), c0.end()});
  std::vector<double> a(4 * H);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& hp = tape.h.back();
    const auto& cp = tape.c.back();
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double s = layer.b[r] + layer.wx(r, tokens[t]);
      const auto wrow = layer.wh.row(r);
      for (std::size_t j = 0; j < H; ++j) s += wrow[j] * hp[j];
      a[r] = s;
    }
    std::vector<double> gi(H), gf(H), gg(H), go(H), c(H), tc(H), h(H);
    for (std::size_t j = 0; j < H; ++j) {
      gi[j] = sigmoid(a[j]);
      gf[j] = sigmoid(a[H + j]);
      gg[j] = std::tanh(a[2 * H + j]);
      go[j] = sigmoid(a[3 * H + j]);
      c[j] = gf[j] * cp[j] + gi[j] * gg[j];
      tc[j] = std::tanh(c[j]);
      h[j] = go[j] * tc[j];
    }
    tape.i.push_back(std::move(gi));
    tape.f.push_back(std::move(gf));
    tape.g.push_back(std::move(gg));
    tape.o.push_back(std::move(go));
    tape.c.push_back(std::move(c));
    tape.tanh_c.push_back(std::move(tc));
    tape.h.push_back(std::move(h));
  }
  return tape;
}

/// BPTT through one pass. `dh_out[t]` is the loss gradient w.r.t. h_{t+1};
/// dh/dc carry the gradient w.r.t. the final state in and the initial state out.
inline void lstm_backward(const LstmLayer& layer, LstmLayer& grad, std::size_t hidden,
                          std::span<const std::uint8_t> tokens, const LstmTape& tape,
                          const std::vector<std::vector<double>>* dh_out, std::vector<double>& dh,
                          std::vector<double>& dc) {
  const std::size_t H = hidden;
  std::vector<double> da(4 * H), dh_prev(H);
  for (std::size_t t = tokens.size(); t-- > 0;) {
    if (dh_out)
      for (std::size_t j = 0; j < H; ++j) dh[j] += (*dh_out)[t][j];
    const auto& gi = tape.i[t];
    const auto& gf = tape.f[t];
    const auto& gg = tape.g[t];
    const auto& go = tape.o[t];
    const auto& tc = tape.tanh_c[t];
    const auto& cp = tape.c[t];
    for (std::size_t j = 0; j < H; ++j) {
      const double dcj = dc[j] + dh[j] * go[j] * (1.0 - tc[j] * tc[j]);
      da[j] = dcj * gg[j] * gi[j] * (1.0 - gi[j]);
      da[H + j] = dcj * cp[j] * gf[j] * (1.0 - gf[j]);
      da[2 * H + j] = dcj * gi[j] * (1.0 - gg[j] * gg[j]);
      da[3 * H + j] = dh[j] * tc[j] * go[j] * (1.0 - go[j]);
      dc[j] = dcj * gf[j];
    }
    const auto& hp = tape.h[t];
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      const double d = da[r];
      if (d == 0.0) continue;
      grad.b[r] += d;
      grad.wx(r, tokens[t]) += d;
      auto grow = grad.wh.row(r);
      const auto wrow = layer.wh.row(r);
      for (std::size_t j = 0; j < H; ++j) {
        grow[j] += d * hp[j];
        dh_prev[j] += d * wrow[j];
      }
    }
    dh = dh_prev;
  }
}

struct EncDecTape {
  LstmTape encoder;
  LstmTape decoder;
  std::vector<std::vector<double>> probs;  // T x C
};

inline EncDecTape encdec_run(const LogicModel& model, std::span<const std::uint8_t> tokens) {
  if (tokens.empty()) throw InvalidArgument("empty token sequence");
  for (auto t : tokens)
    if (t >= model.vocabulary()) throw InvalidArgument("token outside vocabulary");
  const std::vector<double> zero(model.hidden, 0.0);
  EncDecTape tape;
  tape.encoder = lstm_run(model.encoder, model.hidden, tokens, zero, zero);
  tape.decoder = lstm_run(model.decoder, model.hidden, tokens, tape.encoder.h.back(), tape.encoder.c.back());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto& h = tape.decoder.h[t + 1];
    std::vector<double> z(model.classes), p(model.classes);
    for (std::size_t k = 0; k < model.classes; ++k) {
      double s = model.b_out[k];
      const auto w = model.w_out.row(k);
      for (std::size_t j = 0; j < model.hidden; ++j) s += w[j] * h[j];
      z[k] = s;
    }
    pixel_softmax(z, p);
    tape.probs.push_back(std::move(p));
  }
  return tape;
}

}  // namespace detail

/// Per-position distribution over the C categories.
inline std::vector<std::vector<double>> encdec_forward(const LogicModel& model, std::span<const std::uint8_t> masked) {
  return detail::encdec_run(model, masked).probs;
}

/// Final encoder cell state; exposed for inspection.
inline std::vector<double> encoder_final_cell(const LogicModel& model, std::span<const std::uint8_t> masked) {
  return detail::encdec_run(model, masked).encoder.c.back();
}

/// Mean cross-entropy of reconstructing `targets` at every position. When
/// `grad` is non-null the parameter gradient is accumulated into it.
inline double encdec_loss(const LogicModel& model, std::span<const std::uint8_t> masked,
                          std::span<const std::uint8_t> targets, LogicModel* grad = nullptr) {
  if (masked.size() != targets.size()) throw InvalidArgument("masked and target sequences differ in length");
  const auto tape = detail::encdec_run(model, masked);
  const std::size_t T = masked.size(), H = model.hidden, C = model.classes;
  const double inv_t = 1.0 / static_cast<double>(T);
  double loss = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (targets[t] >= C) throw InvalidArgument("target token outside class range");
    loss -= std::log(tape.probs[t][targets[t]]) * inv_t;
  }
  if (!grad) return loss;

  std::vector<std::vector<double>> dh_dec(T, std::vector<double>(H, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    const auto& h = tape.decoder.h[t + 1];
    for (std::size_t k = 0; k < C; ++k) {
      const double dz = (tape.probs[t][k] - (targets[t] == k ? 1.0 : 0.0)) * inv_t;
      grad->b_out[k] += dz;
      auto gw = grad->w_out.row(k);
      const auto w = model.w_out.row(k);
      for (std::size_t j = 0; j < H; ++j) {
        gw[j] += dz * h[j];
        dh_dec[t][j] += dz * w[j];
      }
    }
  }
  std::vector<double> dh(H, 0.0), dc(H, 0.0);
  detail::lstm_backward(model.decoder, grad->decoder, H, masked, tape.decoder, &dh_dec, dh, dc);
  detail::lstm_backward(model.encoder, grad->encoder, H, masked, tape.encoder, nullptr, dh, dc);
  return loss;
}

struct LogicTrainParams {
  std::size_t hidden = 32;
  std::size_t epochs = 30;
  double lr = 0.1;
  std::uint64_t seed = 7;
};

struct LogicTrainResult {
  LogicModel model;
  std::vector<double> epoch_loss;  // mean step loss per epoch
  double final_loss = 0.0;
};

/// Plain SGD; one step per sequence per epoch. Each step draws a sequence and
/// one of its runs uniformly, masks the run, and fits the original tokens.
inline LogicTrainResult train_logic(const std::vector<TokenSequence>& sequences, std::size_t classes,
                                    const LogicTrainParams& params) {
  if (sequences.empty()) throw InvalidArgument("no sequences to train the logic model on");
  LogicTrainResult result;
  result.model = make_logic_model(classes, params.hidden);
  init_uniform(result.model, mix_seed(params.seed, 0));
  Rng rng(mix_seed(params.seed, 1));
  LogicModel grad = make_logic_model(classes, params.hidden);
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t step = 0; step < sequences.size(); ++step) {
      const auto& seq = sequences[rng.index(sequences.size())];
      const auto seq_runs = runs(seq.tokens);
      const auto masked = mask_run(seq, seq_runs[rng.index(seq_runs.size())], result.model.mask_token());
      for (auto block : grad.blocks()) std::fill(block.begin(), block.end(), 0.0);
      total += encdec_loss(result.model, masked.tokens, seq.tokens, &grad);
      auto p = result.model.blocks();
      auto g = grad.blocks();
      for (std::size_t b = 0; b < p.size(); ++b)
        for (std::size_t i = 0; i < p[b].size(); ++i) p[b][i] -= params.lr * g[b][i];
    }
    result.epoch_loss.push_back(total / static_cast<double>(sequences.size()));
  }
  result.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  return result;
}

/// For every superpixel, masks the maximal run containing it and reads the
/// decoder probability of its own category at its own position.
inline LogicScores score_logic(const LogicModel& model, const std::vector<TokenSequence>& sequences,
                               std::size_t n_superpixels) {
  LogicScores scores;
  scores.p_logic.assign(n_superpixels, 0.0);
  scores.covered.assign(n_superpixels, false);
  for (const auto& seq : sequences) {
    for (const Run& run : runs(seq.tokens)) {
      const auto masked = mask_run(seq, run, model.mask_token());
      const auto probs = encdec_forward(model, masked.tokens);
      for (std::size_t t = run.start; t <= run.end; ++t) {
        const std::size_t id = seq.positions[t];
        if (id >= n_superpixels) throw InvalidArgument("sequence refers to an unknown superpixel");
        scores.p_logic[id] = probs[t][seq.tokens[t]];
        scores.covered[id] = true;
      }
    }
  }
  return scores;
}

/// Fraction of masked tokens whose argmax reconstruction equals the original,
/// masking every maximal run of every sequence in turn.
inline double masked_run_recovery(const LogicModel& model, const std::vector<TokenSequence>& sequences) {
  std::size_t correct = 0, total = 0;
  for (const auto& seq : sequences) {
    for (const Run& run : runs(seq.tokens)) {
      const auto probs = encdec_forward(model, mask_run(seq, run, model.mask_token()).tokens);
      for (std::size_t t = run.start; t <= run.end; ++t) {
        const auto& p = probs[t];
        const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        correct += best == seq.tokens[t];
        ++total;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Persistence

inline TensorBundle to_bundle(const LogicModel& m) {
  TensorBundle b;
  auto vec = [](const std::vector<double>& v) {
    return RawTensor{{static_cast<std::uint32_t>(v.size())}, std::vector<float>(v.begin(), v.end())};
  };
  b.put("encoder_wx", to_raw(m.encoder.wx));
  b.put("encoder_wh", to_raw(m.encoder.wh));
  b.put("encoder_b", vec(m.encoder.b));
  b.put("decoder_wx", to_raw(m.decoder.wx));
  b.put("decoder_wh", to_raw(m.decoder.wh));
  b.put("decoder_b", vec(m.decoder.b));
  b.put("out_w", to_raw(m.w_out));
  b.put("out_b", vec(m.b_out));
  return b;
}

inline LogicModel logic_from_bundle(const TensorBundle& b) {
  const Matrix w_out = matrix_from_raw(b.get("out_w"));
  LogicModel m = make_logic_model(w_out.rows, w_out.cols);
  m.w_out = w_out;
  auto vec = [&](const char* name, std::vector<double>& dst) {
    const auto& t = b.get(name);
    if (t.dtype() != DType::kF32 || t.dims.size() != 1 || t.dims[0] != dst.size())
      throw FormatError(std::string("logic tensor ") + name + " has the wrong shape");
    const auto& v = t.values<float>();
    std::copy(v.begin(), v.end(), dst.begin());
  };
  auto mat = [&](const char* name, Matrix& dst) {
    Matrix src = matrix_from_raw(b.get(name));
    if (src.rows != dst.rows || src.cols != dst.cols)
      throw FormatError(std::string("logic tensor ") + name + " has the wrong shape");
    dst = std::move(src);
  };
  mat("encoder_wx", m.encoder.wx);
  mat("encoder_wh", m.encoder.wh);
  vec("encoder_b", m.encoder.b);
  mat("decoder_wx", m.decoder.wx);
  mat("decoder_wh", m.decoder.wh);
  vec("decoder_b", m.decoder.b);
  vec("out_b", m.b_out);
  return m;
}

inline void save_logic_model(const LogicModel& m, const std::filesystem::path& dir) { to_bundle(m).save(dir); }
inline LogicModel load_logic_model(const std::filesystem::path& dir) {
  return logic_from_bundle(TensorBundle::load(dir));
}

}  // namespace rpt
