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

#include "pgtk/track.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "pgtk/graph.hpp"

namespace pgtk {
namespace track {

std::optional<Com> center_of_mass(const Tensor<float>& mask, double threshold,
                                  bool weighted) {
  check(mask.rank() == 2, "center_of_mass: mask must be [H, W]");
  const int h = mask.dim(0), w = mask.dim(1);
  double sx = 0, sy = 0, sw = 0;
  const float* p = mask.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = double(*p++);
      if (v < threshold) continue;
      const double wt = weighted ? v : 1.0;
      sx += wt * x;
      sy += wt * y;
      sw += wt;
    }
  }
  if (sw <= 0) return std::nullopt;
  return Com{sx / sw, sy / sw};
}

double map_to_time(const Com& pos, const data::Unroller& unroller,
                   const data::AlignmentTrack& track) {
  if (track.events.empty()) fail<ContractViolation>("map_to_time: empty track");
  const std::vector<data::Staff>& staves = unroller.staves();
  int staff = 0;
  double best = std::abs(pos.y - staves[0].y_center);
  for (int i = 1; i < int(staves.size()); ++i) {
    const double d = std::abs(pos.y - staves[size_t(i)].y_center);
    if (d < best) {
      best = d;
      staff = i;
    }
  }
  const double u = unroller.unroll(pos.x, staff);

  const std::vector<data::AlignEvent>& ev = track.events;
  double prev_u = unroller.unroll(ev[0].x, ev[0].staff);
  double prev_t = ev[0].onset;
  if (u <= prev_u) return prev_t;
  for (size_t i = 1; i < ev.size(); ++i) {
    const double cu = unroller.unroll(ev[i].x, ev[i].staff);
    const double lo = std::min(prev_u, cu), hi = std::max(prev_u, cu);
    if (u >= lo && u <= hi) {
      if (hi == lo) return prev_t;
      return prev_t + (u - prev_u) / (cu - prev_u) * (ev[i].onset - prev_t);
    }
    prev_u = cu;
    prev_t = ev[i].onset;
  }
  return ev.back().onset;
}

Tracker::Tracker(const model::Model<float>& m, const data::ScorePage& page,
                 TrackerConfig cfg)
    : m_(&m), page_(page), cfg_(cfg) {
  m.config.validate();
  if (cfg_.unet_stride < 1) fail<ConfigError>("tracker: unet_stride must be positive");
  const int mult = m.config.pad_multiple();
  if (page.height() < mult || page.width() < mult)
    fail<ContractViolation>("tracker: page ", page.height(), "x", page.width(),
                            " smaller than ", mult, "x", mult);
  out_h_ = page.height();
  out_w_ = page.width();
  Tensor<float> p3({1, out_h_, out_w_});
  std::memcpy(p3.data(), page.image.data(),
              sizeof(float) * size_t(out_h_) * size_t(out_w_));
  padded_ = model::pad_page(p3, mult);
  win_len_ = m.config.context_encoder() ? m.config.context_frames : 1;
  bins_ = m.config.spec_bins;
  ring_.assign(size_t(win_len_) * size_t(bins_), 0.0f);
  h_ = Tensor<float>::full({m.config.cond_units}, 0.0f);
  c_ = Tensor<float>::full({m.config.cond_units}, 0.0f);
  mask_ = Tensor<float>::full({out_h_, out_w_}, 0.0f);
  // Until a mask clears the threshold the held position is the page center,
  // so the tracker always has an answer.
  held_x_ = out_w_ / 2.0;
  held_y_ = out_h_ / 2.0;
}

Tensor<float> Tracker::window() const {
  Tensor<float> w = Tensor<float>::full({1, bins_, win_len_}, 0.0f);
  for (int j = 0; j < win_len_; ++j) {
    const int64_t t = steps_ - win_len_ + j;
    if (t < 0) continue;
    const float* src = ring_.data() + size_t(t % win_len_) * size_t(bins_);
    for (int b = 0; b < bins_; ++b) w.at(0, b, j) = src[b];
  }
  return w;
}

Prediction Tracker::step(const float* frame, int bins) {
  const auto t0 = std::chrono::steady_clock::now();
  check(frame != nullptr, "tracker: null frame");
  if (bins != bins_)
    fail<ContractViolation>("tracker: expected ", bins_, " bins, got ", bins);

  std::memcpy(ring_.data() + size_t(steps_ % win_len_) * size_t(bins_), frame,
              sizeof(float) * size_t(bins_));
  ++steps_;

  const model::Model<float>& m = *m_;
  Graph<float> g(&m.params);
  int x;
  if (m.config.context_encoder()) {
    x = g.input(window());
  } else {
    Tensor<float> f({bins_});
    std::memcpy(f.data(), frame, sizeof(float) * size_t(bins_));
    x = g.input(std::move(f));
  }
  const int e = model::encoder_forward(g, m, x);
  int hn = -1, cn = -1;
  if (m.config.recurrent()) {
    hn = g.input(h_);
    cn = g.input(c_);
  }
  const model::CondNodes cond = model::condition_forward(g, m, e, hn, cn);
  if (m.config.recurrent()) {
    h_ = g.value(cond.h);
    c_ = g.value(cond.c);
  }

  const int64_t idx = steps_ - 1;
  if (idx % cfg_.unet_stride == 0) {
    const int pg = g.input(padded_);
    const int out = model::unet_forward(g, m, pg, cond.z, out_h_, out_w_);
    std::memcpy(mask_.data(), g.value(out).data(),
                sizeof(float) * size_t(out_h_) * size_t(out_w_));
    const std::optional<Com> com =
        center_of_mass(mask_, cfg_.threshold, cfg_.weighted_com);
    mask_valid_ = com.has_value();
    if (com) {
      held_x_ = com->x;
      held_y_ = com->y;
    }
  }

  Prediction p;
  p.mask = mask_;
  p.x = held_x_;
  p.y = held_y_;
  p.valid = mask_valid_;
  p.step = idx;
  p.step_latency =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return p;
}

}  // namespace track
}  // namespace pgtk
