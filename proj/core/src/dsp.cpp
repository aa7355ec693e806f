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

#include "pgtk/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pgtk {
namespace dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

template <typename T>
T read_le(std::istream& in) {
  T v;
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

}  // namespace

AudioSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail<IoError>("cannot open wav file: ", path);

  char riff[4], wave[4];
  in.read(riff, 4);
  const uint32_t riff_size = read_le<uint32_t>(in);
  (void)riff_size;
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    fail<IoError>("not a RIFF/WAVE file: ", path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<float> samples;
  bool have_data = false;

  while (in) {
    char id[4];
    in.read(id, 4);
    if (!in) break;
    const uint32_t size = read_le<uint32_t>(in);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_le<uint16_t>(in);
      channels = read_le<uint16_t>(in);
      sample_rate = read_le<uint32_t>(in);
      read_le<uint32_t>(in);  // byte rate
      read_le<uint16_t>(in);  // block align
      bits = read_le<uint16_t>(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) fail<IoError>("wav data chunk before fmt chunk: ", path);
      if (channels != 1) fail<IoError>("wav must be mono, got ", channels, " channels: ", path);
      if (format == 1 && bits == 16) {
        const uint32_t n = size / 2;
        samples.resize(n);
        for (uint32_t i = 0; i < n; ++i)
          samples[i] = float(read_le<int16_t>(in)) / 32768.0f;
      } else if (format == 3 && bits == 32) {
        const uint32_t n = size / 4;
        samples.resize(n);
        for (uint32_t i = 0; i < n; ++i) samples[i] = read_le<float>(in);
      } else {
        fail<IoError>("unsupported wav encoding (format ", format, ", ", bits,
                      " bits), need PCM16 or float32: ", path);
      }
      have_data = true;
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_data) fail<IoError>("wav file has no data chunk: ", path);

  AudioSignal audio;
  audio.sample_rate = int(sample_rate);
  audio.samples = std::move(samples);
  return audio;
}

void write_wav(const std::string& path, const AudioSignal& audio) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail<IoError>("cannot write wav file: ", path);
  const uint32_t data_bytes = uint32_t(audio.samples.size()) * 4;
  out.write("RIFF", 4);
  write_le<uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<uint32_t>(out, 16);
  write_le<uint16_t>(out, 3);  // IEEE float
  write_le<uint16_t>(out, 1);  // mono
  write_le<uint32_t>(out, uint32_t(audio.sample_rate));
  write_le<uint32_t>(out, uint32_t(audio.sample_rate) * 4);
  write_le<uint16_t>(out, 4);
  write_le<uint16_t>(out, 32);
  out.write("data", 4);
  write_le<uint32_t>(out, data_bytes);
  for (float s : audio.samples) write_le<float>(out, s);
  if (!out) fail<IoError>("short write to wav file: ", path);
}

FftPlan::FftPlan(int n) : n_(n) {
  if (n < 2 || (n & (n - 1)) != 0)
    fail<ContractViolation>("fft size must be a power of two >= 2, got ", n);
  bit_reverse_.resize(size_t(n));
  int bits = 0;
  while ((1 << bits) < n) ++bits;
  for (int i = 0; i < n; ++i) {
    int r = 0;
    for (int b = 0; b < bits; ++b)
      if (i & (1 << b)) r |= 1 << (bits - 1 - b);
    bit_reverse_[size_t(i)] = r;
  }
  twiddles_.resize(size_t(n / 2));
  for (int i = 0; i < n / 2; ++i) {
    const double a = -2.0 * kPi * i / n;
    twiddles_[size_t(i)] = {std::cos(a), std::sin(a)};
  }
}

void FftPlan::forward(std::complex<double>* data) const {
  for (int i = 0; i < n_; ++i) {
    const int j = bit_reverse_[size_t(i)];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (int len = 2; len <= n_; len <<= 1) {
    const int step = n_ / len;
    for (int start = 0; start < n_; start += len) {
      for (int i = 0; i < len / 2; ++i) {
        const std::complex<double> w = twiddles_[size_t(i * step)];
        const std::complex<double> a = data[start + i];
        const std::complex<double> b = data[start + i + len / 2] * w;
        data[start + i] = a + b;
        data[start + i + len / 2] = a - b;
      }
    }
  }
}

int64_t frame_count(int64_t n_samples, int sample_rate, int fps) {
  if (n_samples <= 0) return 0;
  return (n_samples - 1) * fps / sample_rate + 1;
}

int64_t frame_center(int64_t frame, int sample_rate, int fps) {
  return int64_t(std::llround(double(frame) * sample_rate / fps));
}

Filterbank build_filterbank(int n_filters, double fmin, double fmax,
                            int sample_rate, int fft_size) {
  if (n_filters < 1) fail<ConfigError>("filterbank needs at least one filter");
  if (!(fmin > 0) || !(fmax > fmin))
    fail<ConfigError>("filterbank range must satisfy 0 < fmin < fmax");
  const int n_bins = fft_size / 2 + 1;
  const double df = double(sample_rate) / fft_size;
  const int bin_lo = int(std::ceil(fmin / df));
  const int bin_hi = int(std::floor(fmax / df));
  if (bin_lo < 1 || bin_hi >= n_bins || bin_lo > bin_hi)
    fail<ConfigError>("filterbank range [", fmin, ", ", fmax,
                      "] does not fit the spectrum resolution");

  // Semitone grid snapped to FFT bins; adjacent duplicates collapse.
  std::vector<char> used(size_t(n_bins), 0);
  std::vector<int> centers;
  for (int k = 0;; ++k) {
    const double f = fmin * std::pow(2.0, double(k) / 12.0);
    if (f > fmax * (1.0 + 1e-12)) break;
    int bin = int(std::llround(f / df));
    bin = std::clamp(bin, bin_lo, bin_hi);
    if (!used[size_t(bin)]) {
      used[size_t(bin)] = 1;
      centers.push_back(bin);
    }
  }
  std::sort(centers.begin(), centers.end());

  // Snap collisions shrink the set; refill with the lowest unused in-range
  // bins so the filter count is exact.  Shrinking from the low end keeps
  // the top of the range intact.
  int probe = bin_lo;
  while (int(centers.size()) < n_filters) {
    while (probe <= bin_hi && used[size_t(probe)]) ++probe;
    if (probe > bin_hi)
      fail<ConfigError>("cannot build ", n_filters, " filters between ", fmin,
                        " and ", fmax, " Hz at this FFT resolution");
    used[size_t(probe)] = 1;
    centers.insert(std::lower_bound(centers.begin(), centers.end(), probe), probe);
  }
  while (int(centers.size()) > n_filters) centers.erase(centers.begin());

  Filterbank fb;
  fb.fft_size = fft_size;
  fb.sample_rate = sample_rate;
  fb.center_bins = centers;
  fb.weights = Tensor<float>({n_filters, n_bins});
  for (int i = 0; i < n_filters; ++i) {
    const int c = centers[size_t(i)];
    // Edge filters mirror their single neighbor to form a full triangle.
    const int step_left = i > 0 ? c - centers[size_t(i) - 1]
                                : (n_filters > 1 ? centers[1] - c : 1);
    const int step_right = i + 1 < n_filters ? centers[size_t(i) + 1] - c
                                             : (n_filters > 1 ? c - centers[size_t(i) - 1] : 1);
    const int left = std::max(0, c - step_left);
    const int right = std::min(n_bins - 1, c + step_right);
    double total = 0;
    for (int b = left; b <= right; ++b) {
      double w = 0;
      if (b == c) {
        w = 1.0;
      } else if (b < c && c > left) {
        w = double(b - left) / double(c - left);
      } else if (b > c && right > c) {
        w = double(right - b) / double(right - c);
      }
      fb.weights.at(i, b) = float(w);
      total += w;
    }
    check(total > 0, "degenerate filter in filterbank");
    for (int b = left; b <= right; ++b)
      fb.weights.at(i, b) = float(double(fb.weights.at(i, b)) / total);
  }
  return fb;
}

Spectrogram compute_spectrogram(const AudioSignal& audio, const Filterbank& fb,
                                const NormStats* stats) {
  if (audio.sample_rate != fb.sample_rate)
    fail<ContractViolation>("audio sample rate ", audio.sample_rate,
                            " does not match filterbank rate ", fb.sample_rate);
  const int n = fb.fft_size;
  const int n_bins = n / 2 + 1;
  const int64_t frames = frame_count(int64_t(audio.samples.size()), audio.sample_rate);

  Spectrogram spec;
  spec.n_frames = int(frames);
  spec.bins = fb.n_filters();
  spec.data.assign(size_t(frames) * fb.n_filters(), 0.0f);

  std::vector<double> hann(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) hann[size_t(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));

  FftPlan plan(n);
  std::vector<std::complex<double>> buf(static_cast<size_t>(n));
  std::vector<float> mags(static_cast<size_t>(n_bins));
  const int64_t total = int64_t(audio.samples.size());

  for (int64_t t = 0; t < frames; ++t) {
    const int64_t center = frame_center(t, audio.sample_rate);
    const int64_t start = center - n / 2;
    for (int i = 0; i < n; ++i) {
      const int64_t s = start + i;
      const double v = (s >= 0 && s < total) ? double(audio.samples[size_t(s)]) : 0.0;
      buf[size_t(i)] = {v * hann[size_t(i)], 0.0};
    }
    plan.forward(buf.data());
    for (int b = 0; b < n_bins; ++b) mags[size_t(b)] = float(std::abs(buf[size_t(b)]));

    float* out = spec.frame(t);
    for (int fidx = 0; fidx < fb.n_filters(); ++fidx) {
      const float* w = fb.weights.data() + int64_t(fidx) * n_bins;
      double acc = 0;
      for (int b = 0; b < n_bins; ++b) acc += double(w[b]) * double(mags[size_t(b)]);
      out[fidx] = float(std::log1p(acc));
    }
  }
  if (stats) standardize(spec, *stats);
  return spec;
}

NormStats compute_norm_stats(const std::vector<const Spectrogram*>& specs) {
  check(!specs.empty(), "compute_norm_stats: no spectrograms");
  const int bins = specs[0]->bins;
  int64_t total = 0;
  std::vector<double> sum(size_t(bins), 0.0), sq(size_t(bins), 0.0);
  for (const Spectrogram* s : specs) {
    check(s != nullptr && s->bins == bins, "compute_norm_stats: bin count mismatch");
    for (int64_t t = 0; t < s->n_frames; ++t) {
      const float* f = s->frame(t);
      for (int b = 0; b < bins; ++b) {
        sum[size_t(b)] += f[b];
        sq[size_t(b)] += double(f[b]) * f[b];
      }
    }
    total += s->n_frames;
  }
  check(total > 0, "compute_norm_stats: no frames");
  NormStats st;
  st.mean.resize(size_t(bins));
  st.std.resize(size_t(bins));
  for (int b = 0; b < bins; ++b) {
    const double m = sum[size_t(b)] / double(total);
    const double var = std::max(0.0, sq[size_t(b)] / double(total) - m * m);
    st.mean[size_t(b)] = float(m);
    st.std[size_t(b)] = float(std::max(std::sqrt(var), 1e-6));
  }
  return st;
}

void standardize(Spectrogram& spec, const NormStats& stats) {
  check(!spec.standardized, "spectrogram already standardized");
  check(stats.bins() == spec.bins, "norm stats bin count mismatch");
  for (int64_t t = 0; t < spec.n_frames; ++t) {
    float* f = spec.frame(t);
    for (int b = 0; b < spec.bins; ++b)
      f[b] = (f[b] - stats.mean[size_t(b)]) / stats.std[size_t(b)];
  }
  spec.standardized = true;
}

}  // namespace dsp
}  // namespace pgtk
