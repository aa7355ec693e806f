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
// Dataset model: score pages with notehead alignments, ground-truth mask
// construction, a synthetic piece generator, augmentation, and the on-disk
// dataset format.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgtk/common.hpp"
#include "pgtk/dsp.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk {
namespace data {

// One five-line staff.  y_top/y_bottom are the outermost line centers, so
// the gap between adjacent lines is (y_bottom - y_top) / 4.
struct Staff {
  double y_center = 0;
  double y_top = 0;
  double y_bottom = 0;
  double x_start = 0;
  double x_end = 0;

  double space() const { return (y_bottom - y_top) / 4.0; }
  double width() const { return x_end - x_start; }
};

// Grayscale page plus staff geometry.  Pixel values are ink intensity in
// [0, 1] (1 = black); the PGM files on disk use the usual inverted scale.
// Coordinates are pixels at this image's own resolution, whether that is
// the full render or the downscaled model input.
struct ScorePage {
  Tensor<float> image;  // [h, w]
  std::vector<Staff> staves;
  int dpi = 72;

  int height() const { return image.dim(0); }
  int width() const { return image.dim(1); }
};

// One aligned note onset.  pitch (MIDI) and dur (seconds) are carried so a
// performance can be re-synthesized at another tempo; pitch < 0 means
// unknown.
struct AlignEvent {
  double onset = 0;
  double x = 0;
  double y = 0;
  int staff = 0;
  int pitch = -1;
  double dur = 0;
};

struct AlignmentTrack {
  std::vector<AlignEvent> events;  // sorted by onset
};

struct Piece {
  std::string id;
  ScorePage page;          // full resolution
  AlignmentTrack track;    // full-resolution coordinates
  int downscale = 3;
  std::optional<dsp::AudioSignal> audio;
  std::optional<dsp::Spectrogram> feats;  // alternative to audio

  double duration_s() const;
};

// Area-averaged integer downscale; output dims are floor(h/f) x floor(w/f)
// and trailing rows/columns that do not fill a block are dropped.
Tensor<float> downscale_image(const Tensor<float>& image, int factor);

// Page / track mapped to model resolution (coordinates divided by factor).
ScorePage downscale_page(const ScorePage& page, int factor);
AlignmentTrack downscale_track(const AlignmentTrack& track, int factor);

struct Position {
  double x = 0;
  double y = 0;
  int staff = 0;
};

// Staves concatenated left-to-right into one horizontal strip.  Position on
// the strip is cumulative staff width plus the offset into the staff, so
// motion that is continuous on the strip jumps instantaneously between
// staves on the page.
class Unroller {
 public:
  explicit Unroller(std::vector<Staff> staves);

  double length() const { return cum_.back(); }
  double unroll(double x, int staff) const;
  // Inverse map; u is clamped to [0, length()].  Boundary points belong to
  // the later staff.
  Position roll(double u) const;

  const std::vector<Staff>& staves() const { return staves_; }

 private:
  std::vector<Staff> staves_;
  std::vector<double> cum_;  // strip offset per staff, plus total length
};

// Piecewise-linear interpolation of the unrolled position between the
// surrounding onsets.  Before the first onset the first event is held,
// after the last the last one; when two consecutive events share an
// unrolled position but sit on different staves, the staff flips at the
// temporal midpoint between them.
Position interpolate_position(const Unroller& unroller,
                              const AlignmentTrack& track, double t);

// Ground-truth region: 10 px wide, centered on the x position, spanning
// the staff's line span plus one staff-space margin above and below.
// Bounds are inclusive; clipping against the page may shrink the box or
// (entirely off-page) empty it, counted via *clip_warnings when given.
struct MaskRect {
  int x0 = 0, x1 = -1;
  int y0 = 0, y1 = -1;

  bool empty() const { return x1 < x0 || y1 < y0; }
  int64_t area() const {
    return empty() ? 0 : int64_t(x1 - x0 + 1) * (y1 - y0 + 1);
  }
  bool contains(int x, int y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

MaskRect mask_rect(const ScorePage& page, const Position& pos,
                   int* clip_warnings = nullptr);
Tensor<float> render_target_mask(const ScorePage& page, const Position& pos,
                                 int* clip_warnings = nullptr);

// Synthetic generator configuration.  Page size is given at model
// resolution; the rendered page is model size times downscale.
struct GenConfig {
  int model_h = 192;
  int model_w = 256;
  int downscale = 3;
  int staves = 3;
  int notes_per_staff = 12;
  double tempo_min_bpm = 90;
  double tempo_max_bpm = 130;
  // Duplicates one bar's notehead pattern at two page locations so the
  // score is locally ambiguous without temporal context.
  bool ambiguity = false;
  int ambiguity_bar_notes = 4;
  // Emit the precomputed feature sequence instead of audio samples.
  bool features_only = false;

  void validate() const;
};

Piece generate_piece(uint64_t seed, const GenConfig& cfg);

// Additive-sine rendering of a track (fundamental plus two harmonics per
// note, exponential decay).  Every event needs a MIDI pitch.
dsp::AudioSignal synthesize_audio(const AlignmentTrack& track);

// Rigid shift by (dx, dy) pixels with background fill; accepts [h, w] or
// [c, h, w] tensors.
Tensor<float> shift_image(const Tensor<float>& image, int dx, int dy,
                          float fill = 0.0f);

// Time-scales a performance: onsets and durations divided by factor, audio
// re-synthesized from event pitches (or the feature timeline resampled);
// the page is untouched.
Piece augment_tempo(const Piece& piece, double factor);

// The seven training tempo factors, equally spaced over [0.5, 1.5].
std::vector<double> default_tempo_factors();

// The feature sequence the model consumes for a piece: computed from the
// audio when present, otherwise the stored features; standardized with
// `stats` when given (already standardized features pass through).
dsp::Spectrogram piece_features(const Piece& piece, const dsp::Filterbank& fbank,
                                const dsp::NormStats* stats = nullptr);

// On-disk layout, all coordinates full-resolution pixels:
//   <dir>/manifest.json
//   <dir>/pieces/<id>/page.pgm        binary PGM, full resolution
//   <dir>/pieces/<id>/meta.json       staves, dpi, downscale
//   <dir>/pieces/<id>/align.json      events
//   <dir>/pieces/<id>/audio.wav       or feats.f32 + feats.json
void save_dataset(const std::vector<Piece>& pieces, const std::string& dir);

struct LoadIssue {
  std::string piece_id;
  std::string message;  // names the violated invariant
};

struct Dataset {
  std::vector<Piece> pieces;
  std::vector<LoadIssue> issues;  // rejected pieces, itemized
};

// Loads every piece named by the manifest, validating all invariants.
// Pieces that fail validation are skipped and reported in issues; a
// missing or malformed manifest throws.
Dataset load_dataset(const std::string& dir);

// Invariant check shared by the loader and the generator tests; returns an
// empty string when the piece is well formed.
std::string validate_piece(const Piece& piece);

Tensor<float> read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Tensor<float>& image);

}  // namespace data
}  // namespace pgtk
