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
// Dice loss, Adam, the learning-rate schedule, and the sequence training
// loop.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "pgtk/data.hpp"
#include "pgtk/graph.hpp"
#include "pgtk/model.hpp"

namespace pgtk {
namespace train {

using model::Model;
using model::ModelConfig;

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  // 0 resolves per encoder: 4 for the recurrent encoders, 64 for the
  // no-context ablation, which also trains on single frames.
  int batch_size = 0;
  int seq_len = 16;
  int lr_patience = 5;    // epochs without improvement before halving
  int stop_patience = 10; // epochs without improvement before stopping
  int max_epochs = 100;
  double min_improve = 1e-5;
  bool tempo_aug = false;
  int shift_aug_max = 10;  // px at model resolution; 0 disables
  int windows_per_piece = 1;
  int val_windows_per_piece = 1;
  uint64_t seed = 1;

  void validate() const;
  int resolved_batch(const ModelConfig& m) const;
  int resolved_seq(const ModelConfig& m) const;
};

// Soft Dice: 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps) with eps = 1
// so empty masks stay finite.  Returns a scalar node.
template <typename T>
int dice_loss(Graph<T>& g, int pred, int target) {
  check(g.value(pred).shape() == g.value(target).shape(),
        "dice_loss: shape mismatch");
  const T eps = T(1);
  const int inter = g.sum(g.mul(pred, target));
  const int sums = g.add(g.sum(pred), g.sum(target));
  const int num = g.affine(inter, T(2), eps);
  const int den = g.affine(sums, T(1), eps);
  return g.affine(g.div(num, den), T(-1), T(1));
}

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(const ParamStore<T>& store) {
    m.reserve(size_t(store.count()));
    v.reserve(size_t(store.count()));
    for (int i = 0; i < store.count(); ++i) {
      m.emplace_back(store.value(i).shape());
      v.emplace_back(store.value(i).shape());
    }
  }
};

// One update: grad' = grad + weight_decay * param, then Adam with bias
// correction.
template <typename T>
void adam_step(ParamStore<T>& params, const GradBuffer<T>& grads,
               AdamState<T>& state, double lr, double weight_decay) {
  check(grads.count() == params.count(), "adam_step: grad/param mismatch");
  check(int(state.m.size()) == params.count(), "adam_step: stale state");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
  for (int pid = 0; pid < params.count(); ++pid) {
    Tensor<T>& p = params.value(pid);
    Tensor<T>& m = state.m[size_t(pid)];
    Tensor<T>& v = state.v[size_t(pid)];
    const Tensor<T>& g = grads[pid];
    check(p.numel() == g.numel(), "adam_step: grad shape mismatch");
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double gj = double(g[j]) + weight_decay * double(p[j]);
      const double mj = state.beta1 * double(m[j]) + (1.0 - state.beta1) * gj;
      const double vj =
          state.beta2 * double(v[j]) + (1.0 - state.beta2) * gj * gj;
      m[j] = T(mj);
      v[j] = T(vj);
      p[j] -= T(lr * (mj / bc1) / (std::sqrt(vj / bc2) + state.eps));
    }
  }
}

// Patience-based plateau schedule over validation loss.  An epoch improves
// when it beats the best seen so far by at least min_improve; the rate
// halves every lr_patience stale epochs and observe() returns true (stop)
// after stop_patience of them.
class LrSchedule {
 public:
  LrSchedule(double lr0, int lr_patience, int stop_patience,
             double min_improve)
      : lr_(lr0),
        lr_patience_(lr_patience),
        stop_patience_(stop_patience),
        min_improve_(min_improve) {}

  bool observe(double val_loss) {
    if (best_ - val_loss >= min_improve_) {
      best_ = val_loss;
      stale_ = 0;
      improved_ = true;
      return false;
    }
    improved_ = false;
    ++stale_;
    if (stale_ >= stop_patience_) return true;
    if (stale_ % lr_patience_ == 0) lr_ *= 0.5;
    return false;
  }

  double lr() const { return lr_; }
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  double lr_;
  int lr_patience_, stop_patience_;
  double min_improve_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
  bool improved_ = false;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
};

// Called after every epoch with the running model; return false to stop
// early.
using ProgressFn = std::function<bool(const EpochStats&, const Model<float>&)>;

struct TrainResult {
  Model<float> model;  // parameters with the lowest validation loss
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
};

// Sequence training: per epoch, contiguous seq_len-target-frame windows are
// sampled from every piece, the recurrent state starts at zero for each
// window and gradients truncate at its boundary.  Validation windows are
// fixed (evenly spaced) and never augmented.  Callers keep val_pieces
// disjoint from train_pieces for honest selection.
TrainResult train(const std::vector<data::Piece>& train_pieces,
                  const std::vector<data::Piece>& val_pieces,
                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const ProgressFn& progress = nullptr);

}  // namespace train
}  // namespace pgtk
