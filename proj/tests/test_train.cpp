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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "pgtk/grad_check.hpp"
#include "pgtk/train.hpp"

using namespace pgtk;

namespace {

model::ModelConfig tiny_cb() {
  model::ModelConfig cfg;
  cfg.encoder_kind = model::EncoderKind::kCb;
  cfg.base_filters = 2;
  cfg.encoder_filters = 4;
  cfg.embed_dim = 8;
  cfg.cond_units = 16;
  return cfg;
}

data::GenConfig tiny_gen() {
  data::GenConfig cfg;
  cfg.model_h = 64;
  cfg.model_w = 96;
  cfg.staves = 2;
  cfg.notes_per_staff = 6;
  return cfg;
}

train::TrainConfig tiny_tc() {
  train::TrainConfig tc;
  tc.lr = 3e-4;
  tc.batch_size = 2;
  tc.seq_len = 4;
  tc.windows_per_piece = 2;
  tc.val_windows_per_piece = 1;
  tc.max_epochs = 8;
  tc.shift_aug_max = 0;
  tc.seed = 5;
  return tc;
}

Tensor<float> const_mask(std::vector<int> shape, float v) {
  return Tensor<float>::full(std::move(shape), v);
}

struct FaultGuard {
  ~FaultGuard() { debug::grad_fault.store(0.0); }
};

}  // namespace

TEST_CASE("dice loss matches hand-computed values") {
  ParamStore<float> store;
  Graph<float> g(&store);

  // Perfect binary agreement scores zero.
  Tensor<float> a = const_mask({1, 4, 4}, 0.0f);
  for (int i = 0; i < 5; ++i) a[i] = 1.0f;
  const int la = train::dice_loss(g, g.input(a), g.input(a));
  CHECK(g.value(la)[0] == doctest::Approx(0.0).epsilon(1e-6));

  // Empty prediction against 100 positives: 1 - 1/101.
  const int lb = train::dice_loss(g, g.input(const_mask({1, 10, 10}, 0.0f)),
                                  g.input(const_mask({1, 10, 10}, 1.0f)));
  CHECK(double(g.value(lb)[0]) == doctest::Approx(1.0 - 1.0 / 101.0).epsilon(1e-6));

  // Both empty: the smoothing term keeps it at exactly zero.
  const int lc = train::dice_loss(g, g.input(const_mask({3, 3}, 0.0f)),
                                  g.input(const_mask({3, 3}, 0.0f)));
  CHECK(g.value(lc)[0] == 0.0f);

  // Uniform 0.5 against a single positive cell out of four.
  Tensor<float> t = const_mask({1, 2, 2}, 0.0f);
  t[0] = 1.0f;
  const int ld = train::dice_loss(g, g.input(const_mask({1, 2, 2}, 0.5f)), g.input(t));
  CHECK(double(g.value(ld)[0]) == doctest::Approx(0.5).epsilon(1e-6));

  CHECK_THROWS_AS(train::dice_loss(g, g.input(const_mask({1, 2, 2}, 0.0f)),
                                   g.input(const_mask({1, 2, 3}, 0.0f))),
                  ContractViolation);
}

TEST_CASE("dice loss gradient matches central differences") {
  Tensor<double> x0({2, 3});
  const double xv[6] = {0.3, -0.7, 1.2, 0.1, -0.4, 0.9};
  for (int i = 0; i < 6; ++i) x0[i] = xv[i];
  Tensor<double> tgt({2, 3});
  const double tv[6] = {1, 0, 1, 0, 0, 1};
  for (int i = 0; i < 6; ++i) tgt[i] = tv[i];

  const auto loss_at = [&](const Tensor<double>& x) {
    ParamStore<double> store;
    const int pid = store.add("x", x);
    Graph<double> g(&store);
    const int pred = g.sigmoid(g.param(pid));
    return double(g.value(train::dice_loss(g, pred, g.input(tgt)))[0]);
  };

  ParamStore<double> store;
  const int pid = store.add("x", x0);
  Graph<double> g(&store);
  const int xn = g.param(pid);
  const int loss = train::dice_loss(g, g.sigmoid(xn), g.input(tgt));
  g.backward(loss);
  const GradCheckReport rep = grad_check(loss_at, x0, g.grad(xn), 1e-6, 1e-7);
  CHECK(rep.ok);
}

TEST_CASE("adam leaves parameters untouched by zero gradients without decay") {
  ParamStore<double> store;
  Tensor<double> a({3});
  a[0] = 0.5;
  a[1] = -1.25;
  a[2] = 4.0;
  store.add("a", a);
  train::AdamState<double> st(store);
  GradBuffer<double> grads(store);
  train::adam_step(store, grads, st, 1e-3, 0.0);
  for (int j = 0; j < 3; ++j) CHECK(store.value(0)[j] == a[j]);
  CHECK(st.t == 1);
}

TEST_CASE("adam first step on a unit gradient moves by the learning rate") {
  ParamStore<double> store;
  store.add("w", Tensor<double>::full({1}, 0.3));
  train::AdamState<double> st(store);
  GradBuffer<double> grads(store);
  grads[0][0] = 1.0;
  train::adam_step(store, grads, st, 1e-4, 0.0);
  // Bias correction cancels at t = 1, so the step is lr to within eps.
  CHECK(std::abs(store.value(0)[0] - (0.3 - 1e-4)) < 1e-11);
}

TEST_CASE("adam step magnitude stays bounded by the learning rate") {
  const double lr = 1e-3;
  Rng rng(31);
  ParamStore<double> store;
  Tensor<double> w({16});
  for (int64_t j = 0; j < 16; ++j) w[j] = rng.uniform(-1.0, 1.0);
  store.add("w", w);

  // Fresh state: |step| = lr * |g| / (|g| + eps) < lr regardless of scale.
  {
    train::AdamState<double> st(store);
    GradBuffer<double> grads(store);
    for (int64_t j = 0; j < 16; ++j)
      grads[0][j] = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-6.0, 6.0));
    Tensor<double> before = store.value(0);
    train::adam_step(store, grads, st, lr, 0.0);
    for (int64_t j = 0; j < 16; ++j)
      CHECK(std::abs(store.value(0)[j] - before[j]) <= lr + 1e-15);
  }

  // Constant gradients: bias corrections cancel exactly at every step.
  {
    train::AdamState<double> st(store);
    GradBuffer<double> grads(store);
    for (int64_t j = 0; j < 16; ++j) grads[0][j] = (j % 2 ? 2.5 : -0.03);
    for (int step = 0; step < 20; ++step) {
      Tensor<double> before = store.value(0);
      train::adam_step(store, grads, st, lr, 0.0);
      for (int64_t j = 0; j < 16; ++j)
        CHECK(std::abs(store.value(0)[j] - before[j]) <= lr + 1e-15);
    }
  }
}

TEST_CASE("plateau schedule halves on stale epochs and requests a stop") {
  SUBCASE("defaults: one halving, stop at ten stale epochs") {
    train::LrSchedule s(1e-4, 5, 10, 1e-5);
    CHECK_FALSE(s.observe(1.0));
    CHECK(s.improved());
    for (int i = 1; i <= 9; ++i) {
      CHECK_FALSE(s.observe(1.0));
      CHECK_FALSE(s.improved());
    }
    CHECK(s.lr() == doctest::Approx(5e-5));
    CHECK(s.observe(1.0));  // tenth stale epoch
  }

  SUBCASE("two plateaus quarter the rate") {
    train::LrSchedule s(1e-4, 5, 30, 1e-5);
    CHECK_FALSE(s.observe(0.8));
    for (int i = 0; i < 10; ++i) CHECK_FALSE(s.observe(0.8));
    CHECK(s.lr() == doctest::Approx(2.5e-5));
  }

  SUBCASE("improvement must clear the threshold") {
    train::LrSchedule s(1e-4, 2, 10, 1e-5);
    CHECK_FALSE(s.observe(0.5));
    CHECK_FALSE(s.observe(0.5 - 5e-6));  // too small to count
    CHECK_FALSE(s.improved());
    CHECK_FALSE(s.observe(0.5 - 2e-5));
    CHECK(s.improved());
    CHECK(s.best() == doctest::Approx(0.5 - 2e-5));
    CHECK(s.lr() == doctest::Approx(1e-4));  // stale counter was reset
  }
}

TEST_CASE("batch size and sequence length resolve per encoder") {
  train::TrainConfig tc;
  model::ModelConfig cb = tiny_cb();
  model::ModelConfig fb = tiny_cb();
  fb.encoder_kind = model::EncoderKind::kFb;
  model::ModelConfig ntc = tiny_cb();
  ntc.encoder_kind = model::EncoderKind::kNtc;

  CHECK(tc.resolved_batch(cb) == 4);
  CHECK(tc.resolved_batch(fb) == 4);
  CHECK(tc.resolved_batch(ntc) == 64);
  CHECK(tc.resolved_seq(cb) == 16);
  CHECK(tc.resolved_seq(fb) == 16);
  CHECK(tc.resolved_seq(ntc) == 1);

  tc.batch_size = 7;
  CHECK(tc.resolved_batch(cb) == 7);
  CHECK(tc.resolved_batch(ntc) == 7);
}

TEST_CASE("training configuration is validated") {
  const std::vector<data::Piece> pieces{data::generate_piece(300, tiny_gen())};

  train::TrainConfig tc = tiny_tc();
  tc.lr = 0.0;
  CHECK_THROWS_AS(train::train(pieces, pieces, tiny_cb(), tc), ConfigError);
  tc = tiny_tc();
  tc.seq_len = 0;
  CHECK_THROWS_AS(train::train(pieces, pieces, tiny_cb(), tc), ConfigError);
  tc = tiny_tc();
  tc.stop_patience = 0;
  CHECK_THROWS_AS(train::train(pieces, pieces, tiny_cb(), tc), ConfigError);
  tc = tiny_tc();
  tc.windows_per_piece = 0;
  CHECK_THROWS_AS(train::train(pieces, pieces, tiny_cb(), tc), ConfigError);
  tc = tiny_tc();
  tc.shift_aug_max = -1;
  CHECK_THROWS_AS(train::train(pieces, pieces, tiny_cb(), tc), ConfigError);

  tc = tiny_tc();
  CHECK_THROWS_AS(train::train({}, pieces, tiny_cb(), tc), ConfigError);
  CHECK_THROWS_AS(train::train(pieces, {}, tiny_cb(), tc), ConfigError);
}

TEST_CASE("training learns the fixture and reports history") {
  const std::vector<data::Piece> pieces{data::generate_piece(101, tiny_gen()),
                                        data::generate_piece(102, tiny_gen())};
  const train::TrainConfig tc = tiny_tc();

  int calls = 0;
  const train::TrainResult res = train::train(
      pieces, pieces, tiny_cb(), tc,
      [&](const train::EpochStats& st, const model::Model<float>&) {
        ++calls;
        CHECK(st.epoch == calls);
        return true;
      });

  REQUIRE(res.history.size() == 8);
  CHECK(calls == 8);
  for (const train::EpochStats& st : res.history) {
    CHECK(std::isfinite(st.train_loss));
    CHECK(std::isfinite(st.val_loss));
    CHECK(st.train_loss > 0.0);
    CHECK(st.lr > 0.0);
  }
  CHECK(res.history.back().train_loss < res.history.front().train_loss);

  REQUIRE(res.best_epoch >= 1);
  REQUIRE(res.best_epoch <= 8);
  CHECK(res.best_val == res.history[size_t(res.best_epoch - 1)].val_loss);
  double min_val = std::numeric_limits<double>::infinity();
  for (const train::EpochStats& st : res.history) min_val = std::min(min_val, st.val_loss);
  CHECK(res.best_val <= min_val + tc.min_improve);

  CHECK_FALSE(res.model.norm_stats.empty());
  CHECK(res.model.config.encoder_kind == model::EncoderKind::kCb);
}

TEST_CASE("training stops on callback and reproduces bit for bit") {
  const std::vector<data::Piece> pieces{data::generate_piece(103, tiny_gen())};
  train::TrainConfig tc = tiny_tc();
  tc.windows_per_piece = 1;
  tc.seq_len = 3;
  tc.max_epochs = 3;

  const train::TrainResult a = train::train(pieces, pieces, tiny_cb(), tc);
  const train::TrainResult b = train::train(pieces, pieces, tiny_cb(), tc);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }

  const train::TrainResult c = train::train(
      pieces, pieces, tiny_cb(), tc,
      [](const train::EpochStats& st, const model::Model<float>&) {
        return st.epoch < 2;
      });
  CHECK(c.history.size() == 2);
}

TEST_CASE("validation windows ignore augmentation") {
  const std::vector<data::Piece> pieces{data::generate_piece(104, tiny_gen())};
  // A learning rate this small leaves float parameters bitwise unchanged,
  // so any difference in the epoch's validation loss could only come from
  // the augmentation settings leaking into the validation path.
  train::TrainConfig plain = tiny_tc();
  plain.lr = 1e-30;
  plain.max_epochs = 1;
  plain.windows_per_piece = 1;
  train::TrainConfig augmented = plain;
  augmented.shift_aug_max = 6;
  augmented.tempo_aug = true;

  const train::TrainResult a = train::train(pieces, pieces, tiny_cb(), plain);
  const train::TrainResult b = train::train(pieces, pieces, tiny_cb(), augmented);
  REQUIRE(a.history.size() == 1);
  REQUIRE(b.history.size() == 1);
  CHECK(a.history[0].val_loss == b.history[0].val_loss);
  CHECK(a.history[0].train_loss != b.history[0].train_loss);
}

TEST_CASE("training aborts when a gradient goes non-finite") {
  const std::vector<data::Piece> pieces{data::generate_piece(105, tiny_gen())};
  train::TrainConfig tc = tiny_tc();
  tc.windows_per_piece = 1;
  tc.max_epochs = 1;

  FaultGuard guard;
  debug::grad_fault.store(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(train::train(pieces, pieces, tiny_cb(), tc), TrainAbort);
}
