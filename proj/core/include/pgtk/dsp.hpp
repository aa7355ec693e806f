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
// Audio front end: WAV I/O, short-time spectra, and the semitone-spaced
// filterbank that feeds the conditioning encoders.

#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgtk/common.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk {
namespace dsp {

inline constexpr int kSampleRate = 22050;
inline constexpr int kFps = 20;
inline constexpr int kWindowSize = 2048;
inline constexpr int kSpecBins = 78;
inline constexpr double kFminHz = 60.0;
inline constexpr double kFmaxHz = 6000.0;

struct AudioSignal {
  int sample_rate = kSampleRate;
  std::vector<float> samples;  // mono, [-1, 1]

  double duration_s() const {
    return samples.empty() ? 0.0 : double(samples.size()) / sample_rate;
  }
};

// Canonical 44-byte-header mono WAV, PCM16 or IEEE float32.
AudioSignal read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioSignal& audio);

// Radix-2 FFT with precomputed twiddles; n must be a power of two.
class FftPlan {
 public:
  explicit FftPlan(int n);
  int size() const { return n_; }
  // In-place DIT transform of n_ complex points.
  void forward(std::complex<double>* data) const;

 private:
  int n_;
  std::vector<int> bit_reverse_;
  std::vector<std::complex<double>> twiddles_;
};

// Frames exist for every t >= 0 with round(t * sr / fps) <= n_samples - 1,
// i.e. count = floor((n - 1) * fps / sr) + 1 and 0 for empty audio.
int64_t frame_count(int64_t n_samples, int sample_rate = kSampleRate, int fps = kFps);
// Sample index at the center of frame t: round(t * sr / fps).
int64_t frame_center(int64_t frame, int sample_rate = kSampleRate, int fps = kFps);

// Triangular filters on FFT bins whose centers approximate a geometric
// (semitone) frequency grid.  Rows are area-normalized to sum to one.
struct Filterbank {
  int fft_size = kWindowSize;
  int sample_rate = kSampleRate;
  std::vector<int> center_bins;     // ascending, one per filter
  Tensor<float> weights;            // [n_filters, fft_size/2 + 1]

  int n_filters() const { return int(center_bins.size()); }
  double center_hz(int i) const {
    return double(center_bins[size_t(i)]) * sample_rate / fft_size;
  }
};

Filterbank build_filterbank(int n_filters = kSpecBins, double fmin = kFminHz,
                            double fmax = kFmaxHz, int sample_rate = kSampleRate,
                            int fft_size = kWindowSize);

// Per-bin standardization statistics.  std is floored at 1e-6 so degenerate
// training material cannot produce a divide-by-zero.
struct NormStats {
  std::vector<float> mean, std;

  bool empty() const { return mean.empty(); }
  int bins() const { return int(mean.size()); }
};

struct Spectrogram {
  int n_frames = 0;
  int bins = 0;
  int fps = kFps;
  bool standardized = false;
  std::vector<float> data;  // [n_frames, bins] row-major

  const float* frame(int64_t t) const { return data.data() + t * bins; }
  float* frame(int64_t t) { return data.data() + t * bins; }
};

// Full pipeline: centered Hann windows at frame centers (zero-padded at the
// edges), magnitude spectra, filterbank projection, ln(1 + x) compression,
// and optional standardization.
Spectrogram compute_spectrogram(const AudioSignal& audio, const Filterbank& fb,
                                const NormStats* stats = nullptr);

NormStats compute_norm_stats(const std::vector<const Spectrogram*>& specs);
void standardize(Spectrogram& spec, const NormStats& stats);

}  // namespace dsp
}  // namespace pgtk
