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
//
// Online score following: audio frames in, page positions out, constant
// work per step.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pgtk/data.hpp"
#include "pgtk/model.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk {
namespace track {

struct TrackerConfig {
  double threshold = 0.5;
  bool weighted_com = true;
  // Evaluate the U-Net on every k-th step and reuse the last mask between
  // evaluations; the recurrent state still advances every step.
  int unet_stride = 1;
};

struct Com {
  double x = 0, y = 0;
};

// Center of mass of the pixels at or above threshold, probability-weighted
// by default; nullopt when no pixel passes.
std::optional<Com> center_of_mass(const Tensor<float>& mask, double threshold = 0.5,
                                  bool weighted = true);

// Page position -> score time: snap y to the nearest staff center (ties go
// to the lower index), unroll, and invert the piecewise-linear onset-to-
// unrolled-x map, clamping outside the mapped range.
double map_to_time(const Com& pos, const data::Unroller& unroller,
                   const data::AlignmentTrack& track);

struct Prediction {
  Tensor<float> mask;        // [H, W] probabilities at model resolution
  double x = 0, y = 0;       // px; holds the last valid position when !valid
  bool valid = false;        // some pixel cleared the threshold this step
  int64_t step = 0;          // 0-based
  double step_latency = 0;   // seconds
};

// One tracker per stream.  The model is shared read-only, so concurrent
// streams may use one Model instance.  Frames must already be standardized
// with the model's stats.
class Tracker {
 public:
  // page must be at model resolution; its dimensions must reach the U-Net
  // padding multiple.  The padded page is cached here, so per-step work is
  // independent of both stream length and original page size.
  Tracker(const model::Model<float>& m, const data::ScorePage& page,
          TrackerConfig cfg = {});

  Prediction step(const float* frame, int bins);

  int64_t steps() const { return steps_; }
  const data::ScorePage& page() const { return page_; }
  const TrackerConfig& config() const { return cfg_; }
  const Tensor<float>& state_h() const { return h_; }
  const Tensor<float>& state_c() const { return c_; }
  // The most recent frames as the encoder sees them, oldest first,
  // zero-padded before the stream start; all zeros right after init.
  Tensor<float> window() const;

 private:
  const model::Model<float>* m_;
  data::ScorePage page_;
  TrackerConfig cfg_;
  Tensor<float> padded_;  // [1, Hp, Wp]
  int out_h_, out_w_;
  int win_len_, bins_;
  std::vector<float> ring_;  // win_len_ rows of bins_, row t % win_len_
  Tensor<float> h_, c_;
  Tensor<float> mask_;  // last evaluated U-Net output [H, W]
  bool mask_valid_ = false;
  double held_x_, held_y_;
  int64_t steps_ = 0;
};

}  // namespace track
}  // namespace pgtk
