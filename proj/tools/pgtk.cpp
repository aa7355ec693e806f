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
// pgtk: command line front end for the page tracking pipeline.  Subcommands
// cover dataset generation, training, tracking, evaluation, self
// verification, and latency benchmarking.  Every subcommand that produces
// files also writes its fully resolved configuration next to them, so a run
// can be reproduced from the output directory alone.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pgtk/data.hpp"
#include "pgtk/dsp.hpp"
#include "pgtk/eval.hpp"
#include "pgtk/grad_check.hpp"
#include "pgtk/graph.hpp"
#include "pgtk/model.hpp"
#include "pgtk/rng.hpp"
#include "pgtk/track.hpp"
#include "pgtk/train.hpp"

namespace fs = std::filesystem;
using namespace pgtk;
using nlohmann::json;

namespace {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(size_t(threads));
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail<IoError>("cannot write ", path.string());
  out << text;
  if (!out.good()) fail<IoError>("short write to ", path.string());
}

void write_resolved_config(const CLI::App* sub, const fs::path& dir,
                           const char* name) {
  fs::create_directories(dir);
  write_text(dir / name, sub->config_to_str(true, true));
}

void require_clean_dataset(const data::Dataset& ds) {
  for (const data::LoadIssue& issue : ds.issues)
    std::fprintf(stderr, "invalid piece %s: %s\n", issue.piece_id.c_str(),
                 issue.message.c_str());
  if (!ds.issues.empty())
    fail<IoError>(ds.issues.size(), " invalid pieces in dataset");
  if (ds.pieces.empty()) fail<IoError>("dataset is empty");
}

Tensor<double> flatten_params(const ParamStore<double>& ps) {
  Tensor<double> flat({int(ps.total_scalars())});
  int64_t off = 0;
  for (int pid = 0; pid < ps.count(); ++pid) {
    const Tensor<double>& v = ps.value(pid);
    std::memcpy(flat.data() + off, v.data(), size_t(v.numel()) * sizeof(double));
    off += v.numel();
  }
  return flat;
}

void unflatten_params(const Tensor<double>& flat, ParamStore<double>& ps) {
  int64_t off = 0;
  for (int pid = 0; pid < ps.count(); ++pid) {
    Tensor<double>& v = ps.value(pid);
    std::memcpy(v.data(), flat.data() + off, size_t(v.numel()) * sizeof(double));
    off += v.numel();
  }
}

// Central-difference check at the first scalar of every conv kernel.  The
// random sample in grad_check can miss these coordinates, and they are
// exactly where an injected gradient fault lands.
void check_conv_coords(const ParamStore<double>& ps,
                       const std::function<double(const Tensor<double>&)>& f,
                       const Tensor<double>& theta0,
                       const Tensor<double>& analytic, double step, double tol,
                       double* worst, bool* ok) {
  std::vector<int64_t> coords;
  int64_t off = 0;
  for (int pid = 0; pid < ps.count(); ++pid) {
    if (ps.value(pid).rank() == 4) coords.push_back(off);
    off += ps.value(pid).numel();
  }
  Tensor<double> probe = theta0;
  for (int64_t ci : coords) {
    probe[ci] = theta0[ci] + step;
    const double up = f(probe);
    probe[ci] = theta0[ci] - step;
    const double dn = f(probe);
    probe[ci] = theta0[ci];
    const double num = (up - dn) / (2 * step);
    const double rel = std::abs(analytic[ci] - num) /
                       (std::abs(analytic[ci]) + std::abs(num) + 1e-12);
    *worst = std::max(*worst, rel);
    *ok = *ok && rel <= tol;
  }
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOpts {
  std::string out;
  int pieces = 8;
  uint64_t seed = 1;
  int threads = 1;
  bool force = false;
  data::GenConfig gen;
};

int cmd_gen_data(const CLI::App* sub, const GenDataOpts& o) {
  o.gen.validate();
  const fs::path root(o.out);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!o.force)
      fail<IoError>("output directory ", o.out,
                    " is not empty; pass --force to replace it");
    fs::remove_all(root);
  }

  std::vector<data::Piece> pieces(size_t(o.pieces));
  std::vector<uint64_t> seeds(size_t(o.pieces));
  parallel_for(o.pieces, o.threads, [&](int i) {
    const uint64_t seed = o.seed + 0x9e3779b97f4a7c15ull * uint64_t(i + 1);
    data::Piece p = data::generate_piece(seed, o.gen);
    char id[32];
    std::snprintf(id, sizeof id, "piece-%03d", i);
    p.id = id;
    seeds[size_t(i)] = seed;
    pieces[size_t(i)] = std::move(p);
  });
  data::save_dataset(pieces, o.out);

  // Record generation provenance the data layer does not know about.
  std::ifstream in(root / "manifest.json");
  json manifest = json::parse(in);
  in.close();
  manifest["root_seed"] = o.seed;
  manifest["ambiguity"] = o.gen.ambiguity;
  size_t idx = 0;
  for (json& entry : manifest["pieces"]) {
    entry["seed"] = seeds[idx];
    entry["ambiguous"] = o.gen.ambiguity;
    ++idx;
  }
  write_text(root / "manifest.json", manifest.dump(2));

  write_resolved_config(sub, root, "gen-data.cfg");
  std::printf("wrote %d pieces to %s\n", o.pieces, o.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string data, out;
  std::string encoder = "cb";
  int base_filters = 8;
  int encoder_filters = 24;
  int embed_dim = 32;
  int cond_units = 128;
  double val_fraction = 0.25;
  train::TrainConfig tc;
};

int cmd_train(const CLI::App* sub, const TrainOpts& o) {
  const data::Dataset ds = data::load_dataset(o.data);
  require_clean_dataset(ds);

  model::ModelConfig mcfg;
  mcfg.encoder_kind = model::encoder_kind_from_string(o.encoder);
  mcfg.base_filters = o.base_filters;
  mcfg.encoder_filters = o.encoder_filters;
  mcfg.embed_dim = o.embed_dim;
  mcfg.cond_units = o.cond_units;
  mcfg.validate();

  std::vector<data::Piece> tr, va;
  if (o.val_fraction <= 0.0) {
    // Overfit runs validate on the training pieces; selection is no longer
    // honest, which is the point of the fixture.
    tr = ds.pieces;
    va = ds.pieces;
    std::printf("val-fraction 0: validating on the training set\n");
  } else {
    const int k = std::max(2, int(std::lround(1.0 / o.val_fraction)));
    for (size_t i = 0; i < ds.pieces.size(); ++i)
      ((i % size_t(k)) == size_t(k) - 1 ? va : tr).push_back(ds.pieces[i]);
    if (va.empty()) {
      va.push_back(tr.back());
      tr.pop_back();
    }
    if (tr.empty())
      fail<ConfigError>("not enough pieces to split train/val; ",
                        "use --val-fraction 0 to train on everything");
  }
  std::printf("training on %zu pieces, validating on %zu\n", tr.size(),
              va.size());

  const fs::path root(o.out);
  fs::create_directories(root);
  std::ofstream hist(root / "history.csv", std::ios::binary);
  if (!hist) fail<IoError>("cannot write ", (root / "history.csv").string());
  hist << "epoch,lr,train_loss,val_loss\n";

  const train::ProgressFn progress = [&](const train::EpochStats& s,
                                         const model::Model<float>&) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.10g,%.10g,%.10g\n", s.epoch, s.lr,
                  s.train_loss, s.val_loss);
    hist << line;
    hist.flush();
    std::printf("epoch %3d  lr %.2e  train %.4f  val %.4f\n", s.epoch, s.lr,
                s.train_loss, s.val_loss);
    std::fflush(stdout);
    return true;
  };

  train::TrainResult res = train::train(tr, va, mcfg, o.tc, progress);
  if (!hist.good()) fail<IoError>("short write to history.csv");
  model::save_model(res.model, (root / "best.model").string());
  write_resolved_config(sub, root, "train.cfg");
  std::printf("best epoch %d  val %.6f\nwrote %s\n", res.best_epoch,
              res.best_val, (root / "best.model").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// track

struct TrackOpts {
  std::string model, data, out;
  std::string piece_id;
  int index = 0;
  double threshold = 0.5;
  int stride = 1;
  bool mask_dump = false;
};

int cmd_track(const CLI::App* sub, const TrackOpts& o) {
  const model::Model<float> m = model::load_model(o.model);
  const data::Dataset ds = data::load_dataset(o.data);
  require_clean_dataset(ds);

  const data::Piece* piece = nullptr;
  if (!o.piece_id.empty()) {
    for (const data::Piece& p : ds.pieces)
      if (p.id == o.piece_id) piece = &p;
    if (!piece) fail<ConfigError>("no piece with id ", o.piece_id);
  } else {
    if (o.index >= int(ds.pieces.size()))
      fail<ConfigError>("piece index ", o.index, " out of range (",
                        ds.pieces.size(), " pieces)");
    piece = &ds.pieces[size_t(o.index)];
  }

  const int factor = m.config.input_downscale;
  const data::ScorePage page = data::downscale_page(piece->page, factor);
  const data::AlignmentTrack track = data::downscale_track(piece->track, factor);
  const data::Unroller unroller(page.staves);
  const dsp::Filterbank fbank = dsp::build_filterbank(m.config.spec_bins);
  const dsp::Spectrogram spec = data::piece_features(*piece, fbank, &m.norm_stats);

  track::TrackerConfig tcfg;
  tcfg.threshold = o.threshold;
  tcfg.unet_stride = o.stride;
  track::Tracker tracker(m, page, tcfg);

  const fs::path root(o.out);
  fs::create_directories(root);
  if (o.mask_dump) fs::create_directories(root / "masks");
  std::ofstream csv(root / "track.csv", std::ios::binary);
  if (!csv) fail<IoError>("cannot write ", (root / "track.csv").string());
  csv << "step,time_s,x,y,predicted_score_time_s,latency_ms\n";

  for (int t = 0; t < spec.n_frames; ++t) {
    const track::Prediction p = tracker.step(spec.frame(t), spec.bins);
    const double score_t = track::map_to_time({p.x, p.y}, unroller, track);
    char line[160];
    std::snprintf(line, sizeof line, "%lld,%.6f,%.3f,%.3f,%.6f,%.3f\n",
                  (long long)p.step, double(t) / spec.fps, p.x, p.y, score_t,
                  p.step_latency * 1e3);
    csv << line;
    if (o.mask_dump) {
      char name[32];
      std::snprintf(name, sizeof name, "mask-%06d.pgm", t);
      data::write_pgm((root / "masks" / name).string(), p.mask);
    }
  }
  if (!csv.good()) fail<IoError>("short write to track.csv");
  write_resolved_config(sub, root, "track.cfg");
  std::printf("tracked %d frames of %s\n", spec.n_frames, piece->id.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCliOpts {
  std::string model, data, out;
  std::string mode = "all";
  double threshold = 0.5;
  int stride = 1;
  bool oracle = false;
  bool per_piece = false;
};

int cmd_eval(const CLI::App* sub, const EvalCliOpts& o) {
  const model::Model<float> m = model::load_model(o.model);
  const data::Dataset ds = data::load_dataset(o.data);
  require_clean_dataset(ds);

  eval::EvalOptions eo;
  eo.mode = eval::mode_from_string(o.mode);
  eo.threshold = o.threshold;
  eo.oracle = o.oracle;
  eo.per_piece = o.per_piece;
  eo.unet_stride = o.stride;
  const eval::EvalReport rep = eval::evaluate(m, ds.pieces, eo);

  const fs::path root(o.out);
  fs::create_directories(root);
  eval::write_report_json(rep, (root / "report.json").string());
  eval::write_onsets_csv(rep, (root / "onsets.csv").string());
  write_resolved_config(sub, root, "eval.cfg");

  std::printf("frames %lld  onsets %lld  unpredicted %lld\n",
              (long long)rep.frames, (long long)rep.onsets,
              (long long)rep.unpredicted);
  const bool pixel = eo.mode == eval::Mode::kPixel || eo.mode == eval::Mode::kAll;
  const bool geo =
      eo.mode == eval::Mode::kGeometric || eo.mode == eval::Mode::kAll;
  const bool temporal =
      eo.mode == eval::Mode::kTemporal || eo.mode == eval::Mode::kAll;
  if (pixel)
    std::printf("precision %.4f  recall %.4f  f1 %.4f\n", rep.precision,
                rep.recall, rep.f1);
  if (geo)
    std::printf("alignment error mean %.3f cm  median %.3f cm\n",
                rep.mean_err_cm, rep.median_err_cm);
  if (temporal)
    for (const auto& [tau, frac] : rep.onset_table)
      std::printf("  <= %.2f s  %5.1f%%\n", tau, frac * 100.0);
  return 0;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOpts {
  bool fault = false;
};

struct VerifyResult {
  std::string name;
  bool ok = false;
  std::string note;
};

VerifyResult check_encoder_gradients() {
  VerifyResult r;
  r.name = "gradients/encoder";
  model::ModelConfig cfg;
  cfg.base_filters = 2;
  cfg.encoder_filters = 4;
  cfg.embed_dim = 8;
  cfg.cond_units = 16;
  model::Model<double> m = model::build_model<double>(cfg);
  model::init_params(m, 11);
  Rng rng(11);
  Tensor<double> window({1, cfg.spec_bins, cfg.context_frames});
  for (int64_t i = 0; i < window.numel(); ++i) window[i] = rng.uniform(-2.0, 2.0);

  auto run = [&](Tensor<double>* grad_out) {
    Graph<double> g(&m.params);
    const int emb = model::encoder_forward(g, m, g.input(window));
    const int loss = g.sum(g.mul(emb, emb));
    if (grad_out) {
      g.backward(loss);
      *grad_out = Tensor<double>({int(m.params.total_scalars())});
      std::vector<int64_t> offsets(size_t(m.params.count()) + 1, 0);
      for (int pid = 0; pid < m.params.count(); ++pid)
        offsets[size_t(pid) + 1] = offsets[size_t(pid)] + m.params.value(pid).numel();
      g.for_each_param_grad([&](int pid, const Tensor<double>& gv) {
        std::memcpy(grad_out->data() + offsets[size_t(pid)], gv.data(),
                    size_t(gv.numel()) * sizeof(double));
      });
    }
    return g.value(loss)[0];
  };

  Tensor<double> analytic;
  run(&analytic);
  const Tensor<double> theta0 = flatten_params(m.params);
  const auto f = [&](const Tensor<double>& theta) {
    unflatten_params(theta, m.params);
    return run(nullptr);
  };
  const GradCheckReport rep = grad_check(f, theta0, analytic, 1e-5, 1e-4, 160, 7);
  double worst = rep.max_rel_err;
  bool ok = rep.ok;
  check_conv_coords(m.params, f, theta0, analytic, 1e-5, 1e-4, &worst, &ok);
  unflatten_params(theta0, m.params);
  r.ok = ok;
  r.note = str_cat("max rel err ", worst, " over ", rep.coords_checked,
                   " sampled + all conv kernels");
  return r;
}

VerifyResult check_model_gradients() {
  VerifyResult r;
  r.name = "gradients/full-model";
  model::ModelConfig cfg;
  cfg.encoder_kind = model::EncoderKind::kFb;
  cfg.spec_bins = 13;
  cfg.base_filters = 2;
  cfg.embed_dim = 8;
  cfg.cond_units = 16;
  const int steps = 4, page_hw = 32;

  Rng rng(2024);
  Tensor<double> page({1, page_hw, page_hw});
  for (int64_t i = 0; i < page.numel(); ++i) page[i] = rng.uniform();
  Tensor<double> target(page.shape());
  for (int64_t i = 0; i < target.numel(); ++i)
    target[i] = rng.uniform() < 0.05 ? 1.0 : 0.0;
  std::vector<Tensor<double>> frames;
  for (int t = 0; t < steps; ++t) {
    Tensor<double> fr({cfg.spec_bins});
    for (int64_t i = 0; i < fr.numel(); ++i) fr[i] = rng.uniform(-2.0, 2.0);
    frames.push_back(std::move(fr));
  }

  model::Model<double> m = model::build_model<double>(cfg);
  model::init_params(m, 31337);

  auto run = [&](Tensor<double>* grad_out) {
    Graph<double> g(&m.params);
    const int pg = g.input(page);
    const int tgt = g.affine(g.input(target), -1.0, 0.0);
    int h = g.input(Tensor<double>({cfg.cond_units}));
    int c = g.input(Tensor<double>({cfg.cond_units}));
    int total = -1;
    for (int t = 0; t < steps; ++t) {
      const int emb = model::encoder_forward(g, m, g.input(frames[size_t(t)]));
      const model::CondNodes cn = model::condition_forward(g, m, emb, h, c);
      h = cn.h;
      c = cn.c;
      const int y = model::unet_forward(g, m, pg, cn.z, page_hw, page_hw);
      const int d = g.add(y, tgt);
      const int loss = g.sum(g.mul(d, d));
      total = total < 0 ? loss : g.add(total, loss);
    }
    total = g.affine(total, 1.0 / steps, 0.0);
    if (grad_out) {
      g.backward(total);
      *grad_out = Tensor<double>({int(m.params.total_scalars())});
      std::vector<int64_t> offsets(size_t(m.params.count()) + 1, 0);
      for (int pid = 0; pid < m.params.count(); ++pid)
        offsets[size_t(pid) + 1] = offsets[size_t(pid)] + m.params.value(pid).numel();
      g.for_each_param_grad([&](int pid, const Tensor<double>& gv) {
        std::memcpy(grad_out->data() + offsets[size_t(pid)], gv.data(),
                    size_t(gv.numel()) * sizeof(double));
      });
    }
    return g.value(total)[0];
  };

  Tensor<double> analytic;
  run(&analytic);
  const Tensor<double> theta0 = flatten_params(m.params);
  const auto f = [&](const Tensor<double>& theta) {
    unflatten_params(theta, m.params);
    return run(nullptr);
  };
  const GradCheckReport rep = grad_check(f, theta0, analytic, 1e-5, 1e-3, 120, 77);
  double worst = rep.max_rel_err;
  bool ok = rep.ok;
  check_conv_coords(m.params, f, theta0, analytic, 1e-5, 1e-3, &worst, &ok);
  unflatten_params(theta0, m.params);
  r.ok = ok;
  r.note = str_cat("max rel err ", worst, " over ", rep.coords_checked,
                   " sampled + all conv kernels");
  return r;
}

VerifyResult check_film_identity() {
  VerifyResult r;
  r.name = "film/identity";
  model::ModelConfig cfg;
  model::Model<float> m = model::build_model<float>(cfg);
  model::init_params(m, 41);
  Rng rng(41);
  Tensor<float> page({1, 64, 48});
  for (int64_t i = 0; i < page.numel(); ++i) page[i] = float(rng.uniform());
  Tensor<float> z1({cfg.cond_units}), z2({cfg.cond_units});
  for (int64_t i = 0; i < z1.numel(); ++i) z1[i] = float(rng.uniform(-1.0, 1.0));
  for (int64_t i = 0; i < z2.numel(); ++i) z2[i] = float(rng.uniform(-1.0, 1.0));

  const auto equal = [](const Tensor<float>& a, const Tensor<float>& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(float)) == 0;
  };
  const bool invariant = equal(model::predict_page(m, page, z1),
                               model::predict_page(m, page, z2));
  m.params.value(m.layout.enc[1].film.ws)[0] = 0.1f;
  const bool sensitive = !equal(model::predict_page(m, page, z1),
                                model::predict_page(m, page, z2));
  r.ok = invariant && sensitive;
  r.note = invariant ? (sensitive ? "zero FiLM ignores conditioning; perturbed FiLM reacts"
                                  : "perturbed FiLM did not react")
                     : "zero FiLM output depends on conditioning";
  return r;
}

VerifyResult check_shapes() {
  VerifyResult r;
  r.name = "shapes/contracts";
  model::ModelConfig cfg;
  model::Model<float> m = model::build_model<float>(cfg);
  model::init_params(m, 7);
  Rng rng(7);

  Graph<float> g(&m.params);
  Tensor<float> window({1, cfg.spec_bins, cfg.context_frames});
  for (int64_t i = 0; i < window.numel(); ++i) window[i] = float(rng.gaussian());
  const int emb = model::encoder_forward(g, m, g.input(window));
  const bool enc_ok = g.value(emb).numel() == cfg.embed_dim;

  Tensor<float> page({1, 70, 90});
  for (int64_t i = 0; i < page.numel(); ++i) page[i] = float(rng.uniform());
  Tensor<float> z({cfg.cond_units});
  for (int64_t i = 0; i < z.numel(); ++i) z[i] = float(rng.uniform(-1.0, 1.0));
  const Tensor<float> y = model::predict_page(m, page, z);
  const bool unet_ok = y.shape() == page.shape();

  r.ok = enc_ok && unet_ok;
  r.note = str_cat("encoder ", cfg.spec_bins, "x", cfg.context_frames, " -> ",
                   g.value(emb).numel(), "; unet preserves 70x90: ",
                   unet_ok ? "yes" : "no");
  return r;
}

VerifyResult check_metric_oracle() {
  VerifyResult r;
  r.name = "metrics/oracle";
  Rng rng(3);
  const double thresholds[] = {0.3, 0.5, 0.8};
  double worst = 0.0;
  bool ok = true;

  for (int trial = 0; trial < 50; ++trial) {
    Tensor<float> a({16, 16}), b({16, 16});
    for (int64_t i = 0; i < a.numel(); ++i) a[i] = float(rng.uniform());
    for (int64_t i = 0; i < b.numel(); ++i) b[i] = float(rng.uniform());
    const double thr = thresholds[trial % 3];

    int64_t tp = 0, fp = 0, fn = 0;
    double sxa = 0, sya = 0, swa = 0, sxb = 0, syb = 0, swb = 0;
    for (int row = 0; row < 16; ++row)
      for (int col = 0; col < 16; ++col) {
        const double va = a.data()[row * 16 + col];
        const double vb = b.data()[row * 16 + col];
        const bool pa = va >= thr, pb = vb >= thr;
        tp += pa && pb;
        fp += pa && !pb;
        fn += !pa && pb;
        if (pa) { sxa += va * col; sya += va * row; swa += va; }
        if (pb) { sxb += vb * col; syb += vb * row; swb += vb; }
      }

    const eval::PixelCounts c = eval::count_pixels(a, b, thr);
    ok = ok && c.tp == tp && c.fp == fp && c.fn == fn;

    const auto com = track::center_of_mass(a, thr);
    if (swa > 0 && com) {
      worst = std::max(worst, std::abs(com->x - sxa / swa));
      worst = std::max(worst, std::abs(com->y - sya / swa));
    } else {
      ok = ok && (swa > 0) == com.has_value();
    }

    const auto err = eval::alignment_error_cm(a, b, thr, 3);
    if (swa > 0 && swb > 0 && err) {
      const double want =
          std::hypot(sxa / swa - sxb / swb, sya / swa - syb / swb) * 3 *
          eval::kCmPerPx;
      worst = std::max(worst, std::abs(*err - want));
    }
  }

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> errors;
    const int n = 1 + int(rng.uniform_int(0, 14));
    for (int i = 0; i < n; ++i)
      errors.push_back(rng.uniform() < 0.2
                           ? std::numeric_limits<double>::infinity()
                           : rng.uniform(0.0, 8.0));
    for (const auto& [tau, frac] : eval::onset_error_table(errors)) {
      int64_t hits = 0;
      for (double e : errors) hits += e <= tau;
      worst = std::max(worst, std::abs(frac - double(hits) / n));
    }
  }

  r.ok = ok && worst <= 1e-9;
  r.note = str_cat("max deviation ", worst, " vs brute force");
  return r;
}

int cmd_verify(const VerifyOpts& o) {
  if (o.fault) {
    debug::grad_fault.store(1.0);
    std::printf("injecting a gradient fault; the gradient checks must fail\n");
  }
  std::vector<VerifyResult> results;
  results.push_back(check_encoder_gradients());
  results.push_back(check_model_gradients());
  debug::grad_fault.store(0.0);
  results.push_back(check_film_identity());
  results.push_back(check_shapes());
  results.push_back(check_metric_oracle());

  bool all = true;
  for (const VerifyResult& r : results) {
    std::printf("[%s] %-22s %s\n", r.ok ? "PASS" : "FAIL", r.name.c_str(),
                r.note.c_str());
    all = all && r.ok;
  }
  return all ? 0 : 1;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOpts {
  std::string model, out;
  std::string encoder = "cb";
  int base_filters = 8;
  int encoder_filters = 24;
  int embed_dim = 32;
  int cond_units = 128;
  int page_h = 192, page_w = 256;
  int steps = 1000, warmup = 50;
  int stride = 1;
  uint64_t seed = 1;
};

int cmd_bench(const CLI::App* sub, const BenchOpts& o) {
  if (o.warmup >= o.steps)
    fail<ConfigError>("warmup ", o.warmup, " must be below steps ", o.steps);
  if (o.steps < 100)
    std::fprintf(stderr, "warning: %d steps is too few for stable statistics\n",
                 o.steps);

  model::Model<float> m = [&] {
    if (!o.model.empty()) return model::load_model(o.model);
    model::ModelConfig cfg;
    cfg.encoder_kind = model::encoder_kind_from_string(o.encoder);
    cfg.base_filters = o.base_filters;
    cfg.encoder_filters = o.encoder_filters;
    cfg.embed_dim = o.embed_dim;
    cfg.cond_units = o.cond_units;
    model::Model<float> fresh = model::build_model<float>(cfg);
    model::init_params(fresh, o.seed);
    return fresh;
  }();

  Rng rng(o.seed);
  data::ScorePage page;
  page.image = Tensor<float>({o.page_h, o.page_w});
  for (int64_t i = 0; i < page.image.numel(); ++i)
    page.image[i] = float(rng.uniform());

  track::TrackerConfig tcfg;
  tcfg.unet_stride = o.stride;
  track::Tracker tracker(m, page, tcfg);

  std::vector<float> frame(size_t(m.config.spec_bins));
  std::vector<double> lat_ms(size_t(o.steps));
  for (int t = 0; t < o.steps; ++t) {
    for (float& v : frame) v = float(rng.gaussian());
    const track::Prediction p = tracker.step(frame.data(), int(frame.size()));
    lat_ms[size_t(t)] = p.step_latency * 1e3;
  }

  std::vector<double> post(lat_ms.begin() + o.warmup, lat_ms.end());
  const size_t n = post.size();
  double mean = 0;
  for (double v : post) mean += v;
  mean /= double(n);
  double var = 0;
  for (double v : post) var += (v - mean) * (v - mean);
  const double cv = mean > 0 ? std::sqrt(var / double(n)) / mean : 0.0;
  std::vector<double> sorted = post;
  std::sort(sorted.begin(), sorted.end());
  const double median = n % 2 ? sorted[n / 2]
                              : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const double p95 = sorted[std::min(n - 1, size_t(std::ceil(0.95 * double(n))) - 1)];

  std::printf("steps=%d warmup=%d mean_ms=%.3f median_ms=%.3f p95_ms=%.3f cv=%.3f",
              o.steps, o.warmup, mean, median, p95, cv);
  if (n >= 200) {
    double first = 0, last = 0;
    for (size_t i = 0; i < 100; ++i) first += post[i];
    for (size_t i = n - 100; i < n; ++i) last += post[i];
    std::printf(" first100_ms=%.3f last100_ms=%.3f", first / 100.0, last / 100.0);
  }
  std::printf("\n");

  if (!o.out.empty()) {
    const fs::path root(o.out);
    fs::create_directories(root);
    std::ofstream csv(root / "bench.csv", std::ios::binary);
    if (!csv) fail<IoError>("cannot write ", (root / "bench.csv").string());
    csv << "step,latency_ms\n";
    for (int t = 0; t < o.steps; ++t) {
      char line[64];
      std::snprintf(line, sizeof line, "%d,%.6f\n", t, lat_ms[size_t(t)]);
      csv << line;
    }
    if (!csv.good()) fail<IoError>("short write to bench.csv");
    write_resolved_config(sub, root, "bench.cfg");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-conditioned full-page score following pipeline"};
  app.require_subcommand(1);
  int rc = 0;

  GenDataOpts gen;
  CLI::App* cgen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  cgen->set_config("--config", "", "key=value config file; flags override it");
  cgen->add_option("--out", gen.out, "Output dataset directory")
      ->required()
      ->configurable(false);
  cgen->add_option("--pieces", gen.pieces, "Number of pieces")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cgen->add_option("--seed", gen.seed, "Root seed; per-piece seeds derive from it")
      ->capture_default_str();
  cgen->add_option("--model-h", gen.gen.model_h, "Page height at model resolution")
      ->check(CLI::Range(32, 4096))
      ->capture_default_str();
  cgen->add_option("--model-w", gen.gen.model_w, "Page width at model resolution")
      ->check(CLI::Range(32, 4096))
      ->capture_default_str();
  cgen->add_option("--downscale", gen.gen.downscale,
                   "Full-resolution to model-resolution factor")
      ->check(CLI::Range(1, 8))
      ->capture_default_str();
  cgen->add_option("--staves", gen.gen.staves, "Staves per page")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cgen->add_option("--notes", gen.gen.notes_per_staff, "Notes per staff")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cgen->add_option("--tempo-min", gen.gen.tempo_min_bpm, "Minimum tempo in bpm")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cgen->add_option("--tempo-max", gen.gen.tempo_max_bpm, "Maximum tempo in bpm")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cgen->add_flag("--ambiguity", gen.gen.ambiguity,
                 "Duplicate one bar per piece so pages are locally ambiguous");
  cgen->add_flag("--features-only", gen.gen.features_only,
                 "Store precomputed features instead of audio");
  cgen->add_flag("--force", gen.force, "Replace an existing non-empty directory")
      ->configurable(false);
  cgen->add_option("--threads", gen.threads, "Worker threads for piece generation")
      ->envname("PGTK_THREADS")
      ->check(CLI::Range(1, 256))
      ->configurable(false);
  cgen->callback([&] { rc = cmd_gen_data(cgen, gen); });

  TrainOpts tro;
  CLI::App* ctr = app.add_subcommand("train", "Train a tracking model");
  ctr->set_config("--config", "", "key=value config file; flags override it");
  ctr->add_option("--data", tro.data, "Dataset directory")->required();
  ctr->add_option("--out", tro.out, "Output directory")
      ->required()
      ->configurable(false);
  ctr->add_option("--encoder", tro.encoder, "Audio encoder: cb, fb, or ntc")
      ->check(CLI::IsMember({"cb", "fb", "ntc"}))
      ->capture_default_str();
  ctr->add_option("--base-filters", tro.base_filters, "U-Net width at full scale")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  ctr->add_option("--encoder-filters", tro.encoder_filters,
                  "Context encoder width")
      ->check(CLI::Range(1, 128))
      ->capture_default_str();
  ctr->add_option("--embed-dim", tro.embed_dim, "Audio embedding size")
      ->check(CLI::Range(1, 512))
      ->capture_default_str();
  ctr->add_option("--cond-units", tro.cond_units, "Conditioning state size")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();
  ctr->add_option("--lr", tro.tc.lr, "Initial learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ctr->add_option("--weight-decay", tro.tc.weight_decay, "L2 penalty")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  ctr->add_option("--batch", tro.tc.batch_size,
                  "Windows per batch; 0 picks the encoder default")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  ctr->add_option("--seq-len", tro.tc.seq_len, "Frames per training window")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ctr->add_option("--epochs", tro.tc.max_epochs, "Maximum training epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ctr->add_option("--windows-per-piece", tro.tc.windows_per_piece,
                  "Training windows drawn per piece per epoch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ctr->add_flag("--tempo-aug", tro.tc.tempo_aug,
                "Augment training with time-scaled performances");
  ctr->add_option("--shift-aug", tro.tc.shift_aug_max,
                  "Maximum page shift augmentation in pixels")
      ->check(CLI::Range(0, 64))
      ->capture_default_str();
  ctr->add_option("--val-fraction", tro.val_fraction,
                  "Fraction of pieces held out for validation; 0 validates on "
                  "the training set")
      ->check(CLI::Range(0.0, 0.5))
      ->capture_default_str();
  ctr->add_option("--seed", tro.tc.seed, "Training seed")->capture_default_str();
  ctr->callback([&] { rc = cmd_train(ctr, tro); });

  TrackOpts tko;
  CLI::App* ctk = app.add_subcommand("track", "Track one piece frame by frame");
  ctk->set_config("--config", "", "key=value config file; flags override it");
  ctk->add_option("--model", tko.model, "Model file")->required();
  ctk->add_option("--data", tko.data, "Dataset directory")->required();
  ctk->add_option("--out", tko.out, "Output directory")
      ->required()
      ->configurable(false);
  ctk->add_option("--piece", tko.piece_id, "Piece id; overrides --index");
  ctk->add_option("--index", tko.index, "Piece index in manifest order")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  ctk->add_option("--threshold", tko.threshold, "Mask threshold")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ctk->add_option("--stride", tko.stride, "Run the U-Net every k-th frame")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  ctk->add_flag("--mask-dump", tko.mask_dump, "Write each predicted mask as PGM");
  ctk->callback([&] { rc = cmd_track(ctk, tko); });

  EvalCliOpts evo;
  CLI::App* cev = app.add_subcommand("eval", "Evaluate a model on a dataset");
  cev->set_config("--config", "", "key=value config file; flags override it");
  cev->add_option("--model", evo.model, "Model file")->required();
  cev->add_option("--data", evo.data, "Dataset directory")->required();
  cev->add_option("--out", evo.out, "Output directory")
      ->required()
      ->configurable(false);
  cev->add_option("--mode", evo.mode, "pixel, geometric, temporal, or all")
      ->check(CLI::IsMember({"pixel", "geometric", "temporal", "all"}))
      ->capture_default_str();
  cev->add_option("--threshold", evo.threshold, "Mask threshold")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cev->add_option("--stride", evo.stride, "Run the U-Net every k-th frame")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  cev->add_flag("--oracle", evo.oracle,
                "Score the ground truth against itself (harness self-test)");
  cev->add_flag("--per-piece", evo.per_piece,
                "Aggregate alignment errors per piece before averaging");
  cev->callback([&] { rc = cmd_eval(cev, evo); });

  VerifyOpts vfo;
  CLI::App* cvf = app.add_subcommand("verify", "Self-check gradients, metrics, and contracts");
  cvf->add_flag("--fault", vfo.fault,
                "Inject a gradient fault to prove the checks can fail");
  cvf->callback([&] { rc = cmd_verify(vfo); });

  BenchOpts bno;
  CLI::App* cbn = app.add_subcommand("bench", "Measure per-step tracking latency");
  cbn->set_config("--config", "", "key=value config file; flags override it");
  cbn->add_option("--model", bno.model, "Model file; omit to build an untrained model");
  cbn->add_option("--encoder", bno.encoder, "Encoder when building: cb, fb, or ntc")
      ->check(CLI::IsMember({"cb", "fb", "ntc"}))
      ->capture_default_str();
  cbn->add_option("--base-filters", bno.base_filters, "U-Net width when building")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  cbn->add_option("--encoder-filters", bno.encoder_filters,
                  "Context encoder width when building")
      ->check(CLI::Range(1, 128))
      ->capture_default_str();
  cbn->add_option("--embed-dim", bno.embed_dim, "Embedding size when building")
      ->check(CLI::Range(1, 512))
      ->capture_default_str();
  cbn->add_option("--cond-units", bno.cond_units, "Conditioning size when building")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();
  cbn->add_option("--page-h", bno.page_h, "Page height at model resolution")
      ->check(CLI::Range(16, 2048))
      ->capture_default_str();
  cbn->add_option("--page-w", bno.page_w, "Page width at model resolution")
      ->check(CLI::Range(16, 2048))
      ->capture_default_str();
  cbn->add_option("--steps", bno.steps, "Number of tracking steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cbn->add_option("--warmup", bno.warmup, "Steps excluded from statistics")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cbn->add_option("--stride", bno.stride, "Run the U-Net every k-th frame")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  cbn->add_option("--seed", bno.seed, "Seed for the page and audio frames")
      ->capture_default_str();
  cbn->add_option("--out", bno.out, "Directory for per-step latency CSV")
      ->configurable(false);
  cbn->callback([&] { rc = cmd_bench(cbn, bno); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
