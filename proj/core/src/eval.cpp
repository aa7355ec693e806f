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

#include "pgtk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "pgtk/track.hpp"

namespace pgtk {
namespace eval {

using nlohmann::json;

const std::vector<double>& onset_thresholds() {
  static const std::vector<double> taus{0.05, 0.10, 0.50, 1.00, 5.00};
  return taus;
}

PixelCounts count_pixels(const Tensor<float>& pred, const Tensor<float>& gt,
                         double threshold) {
  if (!pred.same_shape(gt))
    fail<ContractViolation>("count_pixels: shape mismatch, ", pred.shape_str(),
                            " vs ", gt.shape_str());
  PixelCounts c;
  const float* p = pred.data();
  const float* g = gt.data();
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool pp = double(p[i]) >= threshold;
    const bool gg = double(g[i]) >= threshold;
    c.tp += pp && gg;
    c.fp += pp && !gg;
    c.fn += !pp && gg;
  }
  return c;
}

PixelMetrics metrics_from_counts(const PixelCounts& c) {
  PixelMetrics m;
  m.precision = c.tp + c.fp > 0 ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn > 0 ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

PixelMetrics pixel_metrics(const std::vector<Tensor<float>>& pred,
                           const std::vector<Tensor<float>>& gt,
                           double threshold) {
  check(pred.size() == gt.size(), "pixel_metrics: frame count mismatch");
  PixelCounts acc;
  for (size_t i = 0; i < pred.size(); ++i)
    acc.add(count_pixels(pred[i], gt[i], threshold));
  return metrics_from_counts(acc);
}

std::optional<double> alignment_error_cm(const Tensor<float>& pred,
                                         const Tensor<float>& gt,
                                         double threshold, int downscale) {
  check(downscale >= 1, "alignment_error_cm: downscale must be positive");
  const std::optional<track::Com> gc = track::center_of_mass(gt, threshold);
  if (!gc) fail<ContractViolation>("alignment_error_cm: empty ground truth");
  const std::optional<track::Com> pc = track::center_of_mass(pred, threshold);
  if (!pc) return std::nullopt;
  const double d = std::hypot(pc->x - gc->x, pc->y - gc->y);
  return d * downscale * kCmPerPx;
}

std::vector<std::pair<double, double>> onset_error_table(
    const std::vector<double>& abs_errors, const std::vector<double>& thresholds) {
  std::vector<std::pair<double, double>> table;
  table.reserve(thresholds.size());
  for (double tau : thresholds) {
    int64_t hit = 0;
    for (double e : abs_errors) hit += e <= tau;
    const double frac = abs_errors.empty() ? 0.0 : double(hit) / double(abs_errors.size());
    table.emplace_back(tau, frac);
  }
  return table;
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kPixel: return "pixel";
    case Mode::kGeometric: return "geometric";
    case Mode::kTemporal: return "temporal";
    case Mode::kAll: return "all";
  }
  fail<ContractViolation>("unknown mode");
}

Mode mode_from_string(const std::string& s) {
  if (s == "pixel") return Mode::kPixel;
  if (s == "geometric") return Mode::kGeometric;
  if (s == "temporal") return Mode::kTemporal;
  if (s == "all") return Mode::kAll;
  fail<ConfigError>("unknown eval mode: ", s, " (pixel|geometric|temporal|all)");
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

struct FramePos {
  double x = 0, y = 0;
  bool valid = false;
};

}  // namespace

EvalReport evaluate(const model::Model<float>& m,
                    const std::vector<data::Piece>& pieces,
                    const EvalOptions& opts) {
  m.config.validate();
  if (opts.threshold <= 0) fail<ConfigError>("evaluate: threshold must be positive");
  if (pieces.empty()) fail<ConfigError>("evaluate: no pieces");
  const bool want_pixel = opts.mode == Mode::kPixel || opts.mode == Mode::kAll;
  const bool want_geo = opts.mode == Mode::kGeometric || opts.mode == Mode::kAll;
  const bool want_time = opts.mode == Mode::kTemporal || opts.mode == Mode::kAll;

  const dsp::Filterbank fbank = dsp::build_filterbank(m.config.spec_bins);
  const int ds = m.config.input_downscale;

  EvalReport report;
  PixelCounts counts;
  std::vector<double> all_dists, piece_means, piece_medians;

  for (const data::Piece& piece : pieces) {
    const data::ScorePage page = data::downscale_page(piece.page, ds);
    const data::AlignmentTrack track = data::downscale_track(piece.track, ds);
    check(!track.events.empty(), "evaluate: piece has no events");
    const data::Unroller unroller(page.staves);
    const dsp::Spectrogram spec = data::piece_features(piece, fbank, &m.norm_stats);
    check(spec.n_frames > 0, "evaluate: piece has no frames");

    track::TrackerConfig tcfg;
    tcfg.threshold = opts.threshold;
    tcfg.unet_stride = opts.unet_stride;
    std::optional<track::Tracker> tracker;
    if (!opts.oracle) tracker.emplace(m, page, tcfg);

    std::vector<FramePos> positions(size_t(spec.n_frames));
    std::vector<double> dists;
    for (int t = 0; t < spec.n_frames; ++t) {
      const data::Position gt_pos =
          data::interpolate_position(unroller, track, double(t) / spec.fps);
      const Tensor<float> gt = data::render_target_mask(page, gt_pos);
      const std::optional<track::Com> gt_com =
          track::center_of_mass(gt, 0.5, true);

      FramePos fp;
      const Tensor<float>* pred = &gt;
      Tensor<float> pred_store;
      if (opts.oracle) {
        if (gt_com) {
          fp.x = gt_com->x;
          fp.y = gt_com->y;
          fp.valid = true;
        }
      } else {
        track::Prediction p = tracker->step(spec.frame(t), spec.bins);
        fp.x = p.x;
        fp.y = p.y;
        fp.valid = p.valid;
        pred_store = std::move(p.mask);
        pred = &pred_store;
      }
      positions[size_t(t)] = fp;
      if (!fp.valid) ++report.unpredicted;

      if (want_pixel) counts.add(count_pixels(*pred, gt, opts.threshold));
      if (want_geo && fp.valid && gt_com) {
        const double d = std::hypot(fp.x - gt_com->x, fp.y - gt_com->y);
        dists.push_back(d * ds * kCmPerPx);
      }
    }

    if (want_time) {
      for (const data::AlignEvent& e : track.events) {
        OnsetRecord rec;
        rec.onset = e.onset;
        const int f = int(std::clamp<int64_t>(std::llround(e.onset * spec.fps), 0,
                                              spec.n_frames - 1));
        if (opts.oracle) {
          // The oracle reads the exact interpolated position, not the mask
          // center; mask quantization would otherwise leak into the time
          // error through slow passages.
          const data::Position pos =
              data::interpolate_position(unroller, track, double(f) / spec.fps);
          rec.predicted = track::map_to_time({pos.x, pos.y}, unroller, track);
          rec.abs_err = std::abs(rec.predicted - e.onset);
        } else {
          const FramePos& fp = positions[size_t(f)];
          if (fp.valid) {
            rec.predicted = track::map_to_time({fp.x, fp.y}, unroller, track);
            rec.abs_err = std::abs(rec.predicted - e.onset);
          }
        }
        report.onset_records.push_back(rec);
      }
    }

    report.frames += spec.n_frames;
    report.onsets += int64_t(track.events.size());
    if (want_geo) {
      piece_means.push_back(mean(dists));
      piece_medians.push_back(median(dists));
      all_dists.insert(all_dists.end(), dists.begin(), dists.end());
    }
  }

  if (want_pixel) {
    const PixelMetrics pm = metrics_from_counts(counts);
    report.precision = pm.precision;
    report.recall = pm.recall;
    report.f1 = pm.f1;
  }
  if (want_geo) {
    report.mean_err_cm = opts.per_piece ? mean(piece_means) : mean(all_dists);
    report.median_err_cm =
        opts.per_piece ? median(piece_medians) : median(all_dists);
  }
  if (want_time) {
    std::vector<double> errors;
    errors.reserve(report.onset_records.size());
    for (const OnsetRecord& r : report.onset_records) errors.push_back(r.abs_err);
    report.onset_table = onset_error_table(errors);
  }
  return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  json j;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["mean_err_cm"] = report.mean_err_cm;
  j["median_err_cm"] = report.median_err_cm;
  j["frames"] = report.frames;
  j["onsets"] = report.onsets;
  j["unpredicted"] = report.unpredicted;
  json table = json::array();
  for (const auto& [tau, frac] : report.onset_table)
    table.push_back(json{{"threshold_s", tau}, {"fraction", frac}});
  j["onset_table"] = table;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail<IoError>("cannot write ", path);
  out << j.dump(2) << "\n";
  if (!out.good()) fail<IoError>("short write to ", path);
}

void write_onsets_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail<IoError>("cannot write ", path);
  out << "onset_time,predicted_time,abs_error\n";
  char line[96];
  for (const OnsetRecord& r : report.onset_records) {
    if (std::isfinite(r.abs_err))
      std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f\n", r.onset, r.predicted,
                    r.abs_err);
    else
      std::snprintf(line, sizeof line, "%.6f,,inf\n", r.onset);
    out << line;
  }
  if (!out.good()) fail<IoError>("short write to ", path);
}

}  // namespace eval
}  // namespace pgtk
