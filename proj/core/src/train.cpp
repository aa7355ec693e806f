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

#include "pgtk/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

namespace pgtk {
namespace train {

void TrainConfig::validate() const {
  if (lr <= 0) fail<ConfigError>("train: lr must be positive");
  if (weight_decay < 0) fail<ConfigError>("train: weight_decay must be nonnegative");
  if (batch_size < 0) fail<ConfigError>("train: batch_size must be nonnegative");
  if (seq_len < 1) fail<ConfigError>("train: seq_len must be positive");
  if (lr_patience < 1 || stop_patience < 1)
    fail<ConfigError>("train: patience must be positive");
  if (max_epochs < 1) fail<ConfigError>("train: max_epochs must be positive");
  if (min_improve < 0) fail<ConfigError>("train: min_improve must be nonnegative");
  if (shift_aug_max < 0) fail<ConfigError>("train: shift_aug_max must be nonnegative");
  if (windows_per_piece < 1 || val_windows_per_piece < 1)
    fail<ConfigError>("train: windows per piece must be positive");
}

int TrainConfig::resolved_batch(const ModelConfig& m) const {
  if (batch_size > 0) return batch_size;
  return m.recurrent() ? 4 : 64;
}

int TrainConfig::resolved_seq(const ModelConfig& m) const {
  return m.recurrent() ? seq_len : 1;
}

namespace {

// A piece readied for the loop: model-resolution geometry, the page as a
// [1, H, W] tensor, and one standardized spectrogram per tempo factor.
// Track times stay unaugmented; frame times are mapped back through the
// factor when targets are built.
struct Prepped {
  std::string id;
  data::ScorePage model_page;
  data::AlignmentTrack track;
  data::Unroller unroller;
  Tensor<float> page;
  std::vector<dsp::Spectrogram> specs;
};

struct WindowRef {
  int piece = 0;
  int factor = 0;
  int start = 0;
  int steps = 0;
  int dx = 0, dy = 0;
};

dsp::Spectrogram piece_spectrogram(const data::Piece& piece, double factor,
                                   const dsp::Filterbank& fbank,
                                   const dsp::NormStats& stats) {
  if (factor == 1.0) return data::piece_features(piece, fbank, &stats);
  const data::Piece scaled = data::augment_tempo(piece, factor);
  return data::piece_features(scaled, fbank, &stats);
}

Prepped prep_piece(const data::Piece& piece, const ModelConfig& mcfg,
                   const std::vector<double>& factors,
                   const dsp::Filterbank& fbank, const dsp::NormStats& stats) {
  if (piece.feats && piece.feats->bins != mcfg.spec_bins)
    fail<ConfigError>("piece ", piece.id, ": feature bins ", piece.feats->bins,
                      " do not match the model's ", mcfg.spec_bins);
  data::ScorePage mp = data::downscale_page(piece.page, mcfg.input_downscale);
  data::AlignmentTrack tr = data::downscale_track(piece.track, mcfg.input_downscale);
  const int h = mp.height(), w = mp.width();
  Tensor<float> page({1, h, w});
  std::memcpy(page.data(), mp.image.data(), sizeof(float) * size_t(h) * size_t(w));
  std::vector<dsp::Spectrogram> specs;
  specs.reserve(factors.size());
  for (double f : factors) {
    specs.push_back(piece_spectrogram(piece, f, fbank, stats));
    if (specs.back().n_frames <= 0)
      fail<ConfigError>("piece ", piece.id, " yields no spectrogram frames");
  }
  data::Unroller unroller(mp.staves);
  return Prepped{piece.id,           std::move(mp),   std::move(tr),
                 std::move(unroller), std::move(page), std::move(specs)};
}

// Target mask for base-timeline time t, moved along with a page shift and
// clipped back to the page.
Tensor<float> window_mask(const Prepped& p, double t, int dx, int dy) {
  const data::Position pos = data::interpolate_position(p.unroller, p.track, t);
  const data::MaskRect r = data::mask_rect(p.model_page, pos);
  const int h = p.model_page.height(), w = p.model_page.width();
  Tensor<float> mask = Tensor<float>::full({1, h, w}, 0.0f);
  if (!r.empty()) {
    const int x0 = std::max(r.x0 + dx, 0), x1 = std::min(r.x1 + dx, w - 1);
    const int y0 = std::max(r.y0 + dy, 0), y1 = std::min(r.y1 + dy, h - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) mask.at(0, y, x) = 1.0f;
  }
  return mask;
}

// One window, forward always, backward when acc is given.  The conditioner
// runs on a single tape across the window; each step's U-Net runs on its own
// tape so only one step's activations are alive at a time.  Step losses are
// seeded with seed_scale, the conditioning-vector gradients are collected,
// and one multi-seed sweep pulls them through the recurrent tape.  Returns
// the sum of step losses.
double process_window(const Model<float>& m, const Prepped& p,
                      const WindowRef& w, double factor, float seed_scale,
                      GradBuffer<float>* acc) {
  const ModelConfig& cfg = m.config;
  const dsp::Spectrogram& spec = p.specs[size_t(w.factor)];
  const int H = p.model_page.height(), W = p.model_page.width();

  Tensor<float> page = p.page;
  if (w.dx != 0 || w.dy != 0) page = data::shift_image(page, w.dx, w.dy);
  const Tensor<float> padded = model::pad_page(page, cfg.pad_multiple());

  Graph<float> cg(&m.params);
  int h = -1, c = -1;
  if (cfg.recurrent()) {
    h = cg.input(Tensor<float>::full({cfg.cond_units}, 0.0f));
    c = cg.input(Tensor<float>::full({cfg.cond_units}, 0.0f));
  }
  std::vector<int> z_nodes;
  std::vector<Tensor<float>> z_vals;
  z_nodes.reserve(size_t(w.steps));
  z_vals.reserve(size_t(w.steps));
  for (int k = 0; k < w.steps; ++k) {
    const int t = w.start + k;
    const int x = cfg.context_encoder()
                      ? cg.input(model::spec_window<float>(spec, t, cfg.context_frames))
                      : cg.input(model::spec_frame<float>(spec, t));
    const int e = model::encoder_forward(cg, m, x);
    const model::CondNodes cn = model::condition_forward(cg, m, e, h, c);
    h = cn.h;
    c = cn.c;
    z_nodes.push_back(cn.z);
    z_vals.push_back(cg.value(cn.z));
  }

  const bool train_mode = acc != nullptr;
  double loss_sum = 0;
  std::vector<std::pair<int, Tensor<float>>> z_seeds;
  for (int k = 0; k < w.steps; ++k) {
    const int t = w.start + k;
    Graph<float> ug(&m.params);
    const int pg = ug.input(padded);
    const int zn = ug.input(z_vals[size_t(k)], train_mode);
    const int out = model::unet_forward(ug, m, pg, zn, H, W);
    const int tgt =
        ug.input(window_mask(p, double(t) / spec.fps * factor, w.dx, w.dy));
    const int loss = dice_loss(ug, out, tgt);
    const double lv = double(ug.value(loss)[0]);
    if (!std::isfinite(lv))
      fail<TrainAbort>("non-finite loss on piece ", p.id, " at frame ", t);
    loss_sum += lv;
    if (train_mode) {
      ug.backward_seeded({{loss, Tensor<float>::scalar(seed_scale)}});
      ug.accumulate_param_grads(*acc);
      if (ug.has_grad(zn)) z_seeds.emplace_back(z_nodes[size_t(k)], ug.grad(zn));
    }
  }
  if (train_mode && !z_seeds.empty()) {
    cg.backward_seeded(z_seeds);
    cg.accumulate_param_grads(*acc);
  }
  return loss_sum;
}

}  // namespace

TrainResult train(const std::vector<data::Piece>& train_pieces,
                  const std::vector<data::Piece>& val_pieces,
                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const ProgressFn& progress) {
  mcfg.validate();
  tcfg.validate();
  if (train_pieces.empty()) fail<ConfigError>("train: training set is empty");
  if (val_pieces.empty()) fail<ConfigError>("train: validation set is empty");

  const dsp::Filterbank fbank = dsp::build_filterbank(mcfg.spec_bins);

  // Per-bin statistics come from the unaugmented training spectra only.
  // Pieces that arrive already standardized cannot contribute.
  std::vector<dsp::Spectrogram> raw;
  raw.reserve(train_pieces.size());
  std::vector<const dsp::Spectrogram*> raw_ptrs;
  for (const data::Piece& piece : train_pieces) {
    if (piece.audio) {
      raw.push_back(dsp::compute_spectrogram(*piece.audio, fbank));
      raw_ptrs.push_back(&raw.back());
    } else if (piece.feats && !piece.feats->standardized) {
      raw_ptrs.push_back(&*piece.feats);
    }
  }
  const dsp::NormStats stats =
      raw_ptrs.empty() ? dsp::NormStats{} : dsp::compute_norm_stats(raw_ptrs);
  raw.clear();

  std::vector<double> factors{1.0};
  if (tcfg.tempo_aug)
    for (double f : data::default_tempo_factors())
      if (f != 1.0) factors.push_back(f);

  std::vector<Prepped> train_prep, val_prep;
  train_prep.reserve(train_pieces.size());
  val_prep.reserve(val_pieces.size());
  for (const data::Piece& piece : train_pieces)
    train_prep.push_back(prep_piece(piece, mcfg, factors, fbank, stats));
  const std::vector<double> unaugmented{1.0};
  for (const data::Piece& piece : val_pieces)
    val_prep.push_back(prep_piece(piece, mcfg, unaugmented, fbank, stats));

  Model<float> m = model::build_model<float>(mcfg);
  model::init_params(m, tcfg.seed);
  m.norm_stats = stats;

  const int seq = tcfg.resolved_seq(mcfg);
  const int batch = tcfg.resolved_batch(mcfg);

  // Validation windows are fixed up front: evenly spaced starts, factor 1,
  // no shift, so the selection signal is comparable across epochs.
  std::vector<WindowRef> val_windows;
  val_windows.reserve(val_prep.size() * size_t(tcfg.val_windows_per_piece));
  for (int pi = 0; pi < int(val_prep.size()); ++pi) {
    const int n = val_prep[size_t(pi)].specs[0].n_frames;
    const int steps = std::min(seq, n);
    const int max_start = n - steps;
    const int vw = tcfg.val_windows_per_piece;
    for (int j = 0; j < vw; ++j) {
      WindowRef w;
      w.piece = pi;
      w.steps = steps;
      w.start = vw == 1 ? max_start / 2
                        : int(std::lround(double(j) * max_start / (vw - 1)));
      val_windows.push_back(w);
    }
  }

  AdamState<float> adam(m.params);
  GradBuffer<float> acc(m.params);
  LrSchedule sched(tcfg.lr, tcfg.lr_patience, tcfg.stop_patience, tcfg.min_improve);
  Rng rng(tcfg.seed ^ 0x77696e646f777321ull);  // window stream, apart from init

  TrainResult res;
  ParamStore<float> best = m.params;

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const double lr_used = sched.lr();

    std::vector<WindowRef> wins;
    wins.reserve(train_prep.size() * size_t(tcfg.windows_per_piece));
    for (int pi = 0; pi < int(train_prep.size()); ++pi) {
      for (int k = 0; k < tcfg.windows_per_piece; ++k) {
        WindowRef w;
        w.piece = pi;
        w.factor =
            tcfg.tempo_aug ? int(rng.uniform_int(0, int64_t(factors.size()) - 1)) : 0;
        const int n = train_prep[size_t(pi)].specs[size_t(w.factor)].n_frames;
        w.steps = std::min(seq, n);
        w.start = int(rng.uniform_int(0, n - w.steps));
        if (tcfg.shift_aug_max > 0) {
          w.dx = int(rng.uniform_int(-tcfg.shift_aug_max, tcfg.shift_aug_max));
          w.dy = int(rng.uniform_int(-tcfg.shift_aug_max, tcfg.shift_aug_max));
        }
        wins.push_back(w);
      }
    }
    rng.shuffle(wins.begin(), wins.end());

    double train_sum = 0;
    int64_t train_steps = 0;
    for (size_t b0 = 0; b0 < wins.size(); b0 += size_t(batch)) {
      const size_t b1 = std::min(wins.size(), b0 + size_t(batch));
      int total_steps = 0;
      for (size_t i = b0; i < b1; ++i) total_steps += wins[i].steps;
      acc.zero();
      for (size_t i = b0; i < b1; ++i) {
        const WindowRef& w = wins[i];
        train_sum += process_window(m, train_prep[size_t(w.piece)], w,
                                    factors[size_t(w.factor)],
                                    float(1.0 / total_steps), &acc);
      }
      train_steps += total_steps;
      for (int pid = 0; pid < acc.count(); ++pid) {
        const Tensor<float>& g = acc[pid];
        for (int64_t j = 0; j < g.numel(); ++j)
          if (!std::isfinite(double(g[j])))
            fail<TrainAbort>("non-finite gradient in ", m.params.name(pid),
                             " at epoch ", epoch);
      }
      adam_step(m.params, acc, adam, lr_used, tcfg.weight_decay);
    }

    double val_sum = 0;
    int64_t val_steps = 0;
    for (const WindowRef& w : val_windows) {
      val_sum += process_window(m, val_prep[size_t(w.piece)], w, 1.0, 0.0f, nullptr);
      val_steps += w.steps;
    }
    const double val_loss = val_sum / double(val_steps);
    if (!std::isfinite(val_loss))
      fail<TrainAbort>("non-finite validation loss at epoch ", epoch);

    const bool stop = sched.observe(val_loss);
    if (sched.improved()) {
      best = m.params;
      res.best_epoch = epoch;
      res.best_val = val_loss;
    }
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr_used;
    st.train_loss = train_sum / double(std::max<int64_t>(train_steps, 1));
    st.val_loss = val_loss;
    res.history.push_back(st);
    if (progress && !progress(st, m)) break;
    if (stop) break;
  }

  m.params = std::move(best);
  res.model = std::move(m);
  return res;
}

}  // namespace train
}  // namespace pgtk
