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
// Tracking quality measures: pixel precision/recall/F1, geometric alignment
// error in centimeters, and cumulative onset-error tables.

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pgtk/data.hpp"
#include "pgtk/model.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk {
namespace eval {

// Page scale: 0.0352 cm per full-resolution pixel at 72 dpi.
inline constexpr double kCmPerPx = 0.0352;

// Onset-error thresholds in seconds.
const std::vector<double>& onset_thresholds();

struct PixelCounts {
  int64_t tp = 0, fp = 0, fn = 0;

  void add(const PixelCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
  }
};

struct PixelMetrics {
  double precision = 0, recall = 0, f1 = 0;
};

// Both masks are thresholded at `threshold`; shape mismatch throws.
PixelCounts count_pixels(const Tensor<float>& pred, const Tensor<float>& gt,
                         double threshold = 0.5);

// Zero denominators yield zero, including F1 when P + R = 0.
PixelMetrics metrics_from_counts(const PixelCounts& c);

// Micro-average over all pixels of all frames.
PixelMetrics pixel_metrics(const std::vector<Tensor<float>>& pred,
                           const std::vector<Tensor<float>>& gt,
                           double threshold = 0.5);

// Euclidean distance between the two thresholded centers of mass, scaled to
// full resolution by `downscale` and converted at kCmPerPx.  The ground
// truth must have at least one pixel over the threshold; an empty
// prediction skips the frame (nullopt).
std::optional<double> alignment_error_cm(const Tensor<float>& pred,
                                         const Tensor<float>& gt,
                                         double threshold = 0.5,
                                         int downscale = 1);

// Cumulative fraction of onsets with |error| <= tau for each threshold.
// Unpredicted onsets carry error infinity and never count.
std::vector<std::pair<double, double>> onset_error_table(
    const std::vector<double>& abs_errors,
    const std::vector<double>& thresholds = onset_thresholds());

enum class Mode { kPixel, kGeometric, kTemporal, kAll };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct EvalOptions {
  Mode mode = Mode::kAll;
  double threshold = 0.5;
  // Score ground truth against itself instead of running the model; a
  // plumbing check that must come out perfect.
  bool oracle = false;
  // Aggregate mean/median per piece first, then across pieces, instead of
  // pooling all frames.
  bool per_piece = false;
  int unet_stride = 1;
};

struct OnsetRecord {
  double onset = 0;
  double predicted = std::numeric_limits<double>::quiet_NaN();
  double abs_err = std::numeric_limits<double>::infinity();
};

struct EvalReport {
  double precision = 0, recall = 0, f1 = 0;
  double mean_err_cm = 0, median_err_cm = 0;
  std::vector<std::pair<double, double>> onset_table;  // threshold -> fraction
  int64_t frames = 0;
  int64_t onsets = 0;
  int64_t unpredicted = 0;  // steps where no pixel cleared the threshold
  std::vector<OnsetRecord> onset_records;
};

// Runs the tracker over every piece at the feature frame rate, scoring each
// frame against the ground-truth mask built from the alignment.  Onset
// errors are read at the frame nearest each onset; invalid positions there
// count as unpredicted.
EvalReport evaluate(const model::Model<float>& m,
                    const std::vector<data::Piece>& pieces,
                    const EvalOptions& opts = {});

void write_report_json(const EvalReport& report, const std::string& path);
void write_onsets_csv(const EvalReport& report, const std::string& path);

}  // namespace eval
}  // namespace pgtk
