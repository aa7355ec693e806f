// Copyright 2026 The pagetracker Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PGTK_MODEL_HPP_
#define PGTK_MODEL_HPP_

// The audio-conditioned page segmentation model: a spectrogram encoder
// (context-based or frame-based) feeding a recurrent conditioner whose
// hidden state modulates a U-Net over the score page through per-channel
// affine (FiLM) layers.
//
// Parameters live in a ParamStore; the structs below hold parameter ids so
// the same layout drives float inference and double gradient checking.
// Forward passes are expressed as tape ops, so one code path serves
// training, tracking and tests.

#include <cstdint>
#include <string>
#include <vector>

#include "pgtk/common.hpp"
#include "pgtk/dsp.hpp"
#include "pgtk/graph.hpp"
#include "pgtk/rng.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk::model {

enum class EncoderKind {
  kCb,   // context-based: 40-frame spectrogram window through a conv stack
  kFb,   // frame-based: single frame through a dense layer
  kNtc,  // CB encoder, but the recurrent layer replaced by a dense layer
};

const char* to_string(EncoderKind k);
EncoderKind encoder_kind_from_string(const std::string& s);

struct ModelConfig {
  EncoderKind encoder_kind = EncoderKind::kCb;
  int base_filters = 8;   // channels of the first U-Net block, doubling per level
  int depth = 5;          // encoder levels (blocks A..E for 5)
  std::string film_blocks = "BCDEFGH";
  int input_downscale = 3;  // full page -> model page scale factor
  int spec_bins = dsp::kSpecBins;
  int context_frames = 40;  // CB window length
  int encoder_filters = 24;  // CB first-stage width; later stages 2x, 4x, 4x
  int embed_dim = 32;        // encoder output size
  int cond_units = 128;      // LSTM / NTC dense width

  void validate() const;

  // Input pages are padded up to a multiple of this before the U-Net.
  int pad_multiple() const { return 1 << (depth - 1); }
  int n_dec() const { return depth - 1; }

  // Blocks are lettered A.. through the encoder then decoder, so depth 5
  // gives encoder A-E and decoder F-I.
  char enc_letter(int i) const { return char('A' + i); }
  char dec_letter(int j) const { return char('A' + depth + j); }
  int enc_channels(int i) const { return base_filters << i; }
  int dec_channels(int j) const { return base_filters << (depth - 2 - j); }
  bool has_film(char letter) const {
    return film_blocks.find(letter) != std::string::npos;
  }

  bool context_encoder() const { return encoder_kind != EncoderKind::kFb; }
  bool recurrent() const { return encoder_kind != EncoderKind::kNtc; }
};

// Parameter-id bundles. Ids of -1 mean the slot is absent.
struct ConvIds {
  int w = -1, b = -1;
};
struct DenseIds {
  int w = -1, b = -1;
};
struct NormIds {
  int g = -1, b = -1;
};
struct FilmIds {
  int ws = -1, bs = -1, wt = -1, bt = -1;
};

struct BlockIds {
  ConvIds conv1, conv2;
  NormIds norm1, norm2;
  FilmIds film;
  bool has_film = false;
};

struct ModelLayout {
  // Spectrogram encoder. CB/NTC use the conv stack; FB only the dense tail.
  std::vector<ConvIds> enc_convs;
  std::vector<NormIds> enc_norms;
  DenseIds enc_dense;
  NormIds enc_dense_norm;

  // Conditioner: LSTM for CB/FB, plain dense for NTC.
  int lstm_wx = -1, lstm_wh = -1, lstm_b = -1;
  DenseIds cond_dense;

  // U-Net: `enc` has depth blocks (last is the bottleneck), `reduce` holds
  // the 1x1 convs after each upsample, `dec` the decoder blocks.
  std::vector<BlockIds> enc;
  std::vector<ConvIds> reduce;
  std::vector<BlockIds> dec;
  ConvIds out;
};

template <typename T>
struct Model {
  ModelConfig config;
  ParamStore<T> params;
  ModelLayout layout;
  dsp::NormStats norm_stats;  // empty until fitted on training data

  template <typename U>
  Model<U> cast() const {
    Model<U> m;
    m.config = config;
    m.params = params.template cast<U>();
    m.layout = layout;
    m.norm_stats = norm_stats;
    return m;
  }
};

// Registers all parameters (zero weights, unit norm gains) and returns the
// layout. Registration order is deterministic and defines the file order.
template <typename T>
Model<T> build_model(const ModelConfig& config);

// Orthogonal weights, zero biases; the FiLM dense layers stay zero so every
// conditioned block starts as the identity modulation.
template <typename T>
void init_params(Model<T>& m, uint64_t seed);

// Fills `w` (treated as a row-major [rows, cols] matrix) with an orthogonal
// matrix: orthonormal rows when rows <= cols, orthonormal columns otherwise.
template <typename T>
void orthogonal_fill(T* w, int rows, int cols, Rng& rng);

extern template void orthogonal_fill<float>(float*, int, int, Rng&);
extern template void orthogonal_fill<double>(double*, int, int, Rng&);

// ---------------------------------------------------------------------------
// Graph builders.

namespace detail {

template <typename T>
int unet_block(Graph<T>& g, const BlockIds& blk, int x, int z) {
  int h = g.conv2d(x, g.param(blk.conv1.w), g.param(blk.conv1.b), 1, 1);
  h = g.layer_norm(h, g.param(blk.norm1.g), g.param(blk.norm1.b));
  h = g.elu(h);
  h = g.conv2d(h, g.param(blk.conv2.w), g.param(blk.conv2.b), 1, 1);
  h = g.layer_norm(h, g.param(blk.norm2.g), g.param(blk.norm2.b));
  if (blk.has_film) {
    check(z >= 0, "unet_block: conditioned block needs z");
    const int s = g.affine(g.dense(z, g.param(blk.film.ws), g.param(blk.film.bs)), T(1), T(1));
    const int t = g.dense(z, g.param(blk.film.wt), g.param(blk.film.bt));
    h = g.channel_affine(h, s, t);
  }
  return g.elu(h);
}

}  // namespace detail

// window: [1, spec_bins, context_frames] for CB/NTC, [spec_bins] for FB.
// Returns the embedding node [embed_dim].
template <typename T>
int encoder_forward(Graph<T>& g, const Model<T>& m, int window) {
  check(g.store() == &m.params, "graph is not bound to this model's parameters");
  const ModelLayout& L = m.layout;
  if (!m.config.context_encoder()) {
    if (g.value(window).rank() != 1 || g.value(window).dim(0) != m.config.spec_bins)
      fail<ContractViolation>("encoder: frame must be [", m.config.spec_bins, "], got ",
                              g.value(window).shape_str());
    int h = g.dense(window, g.param(L.enc_dense.w), g.param(L.enc_dense.b));
    h = g.layer_norm(h, g.param(L.enc_dense_norm.g), g.param(L.enc_dense_norm.b));
    return g.elu(h);
  }
  const Tensor<T>& wv = g.value(window);
  if (wv.rank() != 3 || wv.dim(0) != 1 || wv.dim(1) != m.config.spec_bins ||
      wv.dim(2) != m.config.context_frames)
    fail<ContractViolation>("encoder: window must be [1,", m.config.spec_bins, ",",
                            m.config.context_frames, "], got ", wv.shape_str());
  int h = window;
  size_t conv = 0;
  for (int stage = 0; stage < 4; ++stage) {
    for (int rep = 0; rep < 2; ++rep, ++conv) {
      h = g.conv2d(h, g.param(L.enc_convs[conv].w), g.param(L.enc_convs[conv].b), 1, 1);
      h = g.layer_norm(h, g.param(L.enc_norms[conv].g), g.param(L.enc_norms[conv].b));
      h = g.elu(h);
    }
    h = g.max_pool2(h);
  }
  h = g.conv2d(h, g.param(L.enc_convs[conv].w), g.param(L.enc_convs[conv].b), 0, 1);
  h = g.layer_norm(h, g.param(L.enc_norms[conv].g), g.param(L.enc_norms[conv].b));
  h = g.elu(h);
  h = g.reshape(h, {int(g.value(h).numel())});
  h = g.dense(h, g.param(L.enc_dense.w), g.param(L.enc_dense.b));
  h = g.layer_norm(h, g.param(L.enc_dense_norm.g), g.param(L.enc_dense_norm.b));
  return g.elu(h);
}

struct CondNodes {
  int z = -1, h = -1, c = -1;
};

// One conditioner step. CB/FB advance the LSTM (h, c are [cond_units] nodes)
// and return z = h'. NTC maps the embedding through a dense layer; state
// passes through untouched.
template <typename T>
CondNodes condition_forward(Graph<T>& g, const Model<T>& m, int embed, int h, int c) {
  check(g.store() == &m.params, "graph is not bound to this model's parameters");
  const ModelLayout& L = m.layout;
  CondNodes out;
  if (!m.config.recurrent()) {
    out.z = g.dense(embed, g.param(L.cond_dense.w), g.param(L.cond_dense.b));
    out.h = h;
    out.c = c;
    return out;
  }
  check(h >= 0 && c >= 0, "condition_forward: recurrent conditioner needs state");
  const LstmStepNodes<T> s =
      lstm_step(g, embed, h, c, g.param(L.lstm_wx), g.param(L.lstm_wh), g.param(L.lstm_b));
  out.z = s.h;
  out.h = s.h;
  out.c = s.c;
  return out;
}

// page: [1, Hp, Wp] with Hp, Wp multiples of pad_multiple(); z: [cond_units].
// Returns probabilities [1, out_h, out_w] (the top-left crop).
template <typename T>
int unet_forward(Graph<T>& g, const Model<T>& m, int page, int z, int out_h, int out_w) {
  check(g.store() == &m.params, "graph is not bound to this model's parameters");
  const ModelConfig& cfg = m.config;
  const ModelLayout& L = m.layout;
  const Tensor<T>& pv = g.value(page);
  const int mult = cfg.pad_multiple();
  if (pv.rank() != 3 || pv.dim(0) != 1)
    fail<ContractViolation>("unet: page must be [1,H,W], got ", pv.shape_str());
  const int hp = pv.dim(1), wp = pv.dim(2);
  if (hp % mult != 0 || wp % mult != 0)
    fail<ContractViolation>("unet: padded page dims must be multiples of ", mult, ", got ",
                            hp, "x", wp);
  if (out_h < mult || out_w < mult)
    fail<ContractViolation>("unet: output dims must be at least ", mult, ", got ", out_h,
                            "x", out_w);
  if (out_h > hp || out_w > wp)
    fail<ContractViolation>("unet: crop ", out_h, "x", out_w, " exceeds page ", hp, "x", wp);

  std::vector<int> skips;
  int x = page;
  for (int i = 0; i < cfg.depth; ++i) {
    if (i > 0) x = g.max_pool2(x);
    x = detail::unet_block(g, L.enc[size_t(i)], x, z);
    if (i + 1 < cfg.depth) skips.push_back(x);
  }
  for (int j = 0; j < cfg.n_dec(); ++j) {
    x = g.bilinear_upsample2(x);
    x = g.conv2d(x, g.param(L.reduce[size_t(j)].w), g.param(L.reduce[size_t(j)].b), 0, 1);
    x = g.concat_channels(x, skips[size_t(cfg.depth - 2 - j)]);
    x = detail::unet_block(g, L.dec[size_t(j)], x, z);
  }
  x = g.conv2d(x, g.param(L.out.w), g.param(L.out.b), 0, 1);
  x = g.sigmoid(x);
  if (out_h != hp || out_w != wp) x = g.crop2d(x, 0, 0, out_h, out_w);
  return x;
}

// ---------------------------------------------------------------------------
// Input preparation.

// Reflect-pads [1,H,W] on the bottom/right up to multiples of `multiple`.
// Reflection excludes the edge sample, so H must exceed the pad amount,
// which holds whenever H, W >= multiple.
template <typename T>
Tensor<T> pad_page(const Tensor<T>& page, int multiple) {
  if (page.rank() != 3 || page.dim(0) != 1)
    fail<ContractViolation>("pad_page: expected [1,H,W], got ", page.shape_str());
  const int h = page.dim(1), w = page.dim(2);
  if (h < multiple || w < multiple)
    fail<ContractViolation>("pad_page: page ", h, "x", w, " smaller than ", multiple);
  const int hp = (h + multiple - 1) / multiple * multiple;
  const int wp = (w + multiple - 1) / multiple * multiple;
  Tensor<T> out({1, hp, wp});
  for (int r = 0; r < hp; ++r) {
    const int sr = r < h ? r : 2 * (h - 1) - r;
    const T* src = page.data() + int64_t(sr) * w;
    T* dst = out.data() + int64_t(r) * wp;
    for (int cidx = 0; cidx < wp; ++cidx)
      dst[cidx] = src[cidx < w ? cidx : 2 * (w - 1) - cidx];
  }
  return out;
}

// CB window ending at `end_frame` (inclusive): [1, bins, frames], frames
// before the stream start are zero.
template <typename T>
Tensor<T> spec_window(const dsp::Spectrogram& s, int end_frame, int frames) {
  check(frames > 0, "spec_window: frames must be positive");
  Tensor<T> out = Tensor<T>::full({1, s.bins, frames}, T(0));
  for (int j = 0; j < frames; ++j) {
    const int t = end_frame - frames + 1 + j;
    if (t < 0 || t >= s.n_frames) continue;
    const float* src = s.frame(t);
    for (int b = 0; b < s.bins; ++b) out.at(0, b, j) = T(src[b]);
  }
  return out;
}

template <typename T>
Tensor<T> spec_frame(const dsp::Spectrogram& s, int t) {
  Tensor<T> out = Tensor<T>::full({s.bins}, T(0));
  if (t >= 0 && t < s.n_frames) {
    const float* src = s.frame(t);
    for (int b = 0; b < s.bins; ++b) out[b] = T(src[b]);
  }
  return out;
}

// One-shot convenience: pad, run the U-Net with a fixed conditioning vector,
// crop. No gradients; use the graph builders for training.
template <typename T>
Tensor<T> predict_page(const Model<T>& m, const Tensor<T>& page, const Tensor<T>& z) {
  Graph<T> g(&m.params);
  const int pg = g.input(pad_page(page, m.config.pad_multiple()));
  const int zn = g.input(z);
  const int out = unet_forward(g, m, pg, zn, page.dim(1), page.dim(2));
  return g.value(out);
}

// ---------------------------------------------------------------------------
// Model container file.
//
// Layout: magic "PGTK", u32 format version, u64 metadata length + UTF-8 JSON
// (config, tensor manifest with names/shapes/offsets, norm stats), raw
// little-endian f32 payloads in manifest order, u64 FNV-1a of the payload.

inline constexpr uint32_t kModelFormatVersion = 1;

void save_model(const Model<float>& m, const std::string& path);
Model<float> load_model(const std::string& path);

}  // namespace pgtk::model

#endif  // PGTK_MODEL_HPP_
