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

#include "pgtk/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "pgtk/rng.hpp"

namespace pgtk {
namespace data {

namespace fs = std::filesystem;
using nlohmann::json;

double Piece::duration_s() const {
  if (audio) return audio->duration_s();
  if (feats) return double(feats->n_frames) / feats->fps;
  return 0.0;
}

Tensor<float> downscale_image(const Tensor<float>& image, int factor) {
  check(image.rank() == 2, "downscale_image: image must be [h, w]");
  check(factor >= 1, "downscale_image: factor must be >= 1");
  const int oh = image.dim(0) / factor;
  const int ow = image.dim(1) / factor;
  check(oh >= 1 && ow >= 1, "downscale_image: image smaller than factor");
  Tensor<float> out({oh, ow});
  const float inv = 1.0f / float(factor * factor);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      float acc = 0;
      for (int i = 0; i < factor; ++i)
        for (int j = 0; j < factor; ++j)
          acc += image.at(r * factor + i, c * factor + j);
      out.at(r, c) = acc * inv;
    }
  }
  return out;
}

ScorePage downscale_page(const ScorePage& page, int factor) {
  ScorePage out;
  out.image = downscale_image(page.image, factor);
  out.dpi = page.dpi;
  out.staves.reserve(page.staves.size());
  const double inv = 1.0 / factor;
  for (const Staff& s : page.staves)
    out.staves.push_back({s.y_center * inv, s.y_top * inv, s.y_bottom * inv,
                          s.x_start * inv, s.x_end * inv});
  return out;
}

AlignmentTrack downscale_track(const AlignmentTrack& track, int factor) {
  AlignmentTrack out = track;
  const double inv = 1.0 / factor;
  for (AlignEvent& e : out.events) {
    e.x *= inv;
    e.y *= inv;
  }
  return out;
}

Unroller::Unroller(std::vector<Staff> staves) : staves_(std::move(staves)) {
  check(!staves_.empty(), "unroller: needs at least one staff");
  cum_.resize(staves_.size() + 1);
  cum_[0] = 0;
  for (size_t i = 0; i < staves_.size(); ++i) {
    check(staves_[i].width() > 0, "unroller: staff has non-positive width");
    cum_[i + 1] = cum_[i] + staves_[i].width();
  }
}

double Unroller::unroll(double x, int staff) const {
  check(staff >= 0 && size_t(staff) < staves_.size(), "unroll: staff index");
  return cum_[size_t(staff)] + (x - staves_[size_t(staff)].x_start);
}

Position Unroller::roll(double u) const {
  u = std::min(std::max(u, 0.0), length());
  auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
  size_t s = size_t(it - cum_.begin()) - 1;
  if (s >= staves_.size()) s = staves_.size() - 1;
  return {staves_[s].x_start + (u - cum_[s]), staves_[s].y_center, int(s)};
}

Position interpolate_position(const Unroller& unroller,
                              const AlignmentTrack& track, double t) {
  const auto& ev = track.events;
  check(!ev.empty(), "interpolate_position: empty track");
  if (t <= ev.front().onset)
    return {ev.front().x, ev.front().y, ev.front().staff};
  if (t >= ev.back().onset) return {ev.back().x, ev.back().y, ev.back().staff};
  auto it = std::upper_bound(
      ev.begin(), ev.end(), t,
      [](double v, const AlignEvent& e) { return v < e.onset; });
  const AlignEvent& b = *it;
  const AlignEvent& a = *(it - 1);
  if (t == a.onset) return {a.x, a.y, a.staff};
  const double ua = unroller.unroll(a.x, a.staff);
  const double ub = unroller.unroll(b.x, b.staff);
  if (ua == ub) {
    const AlignEvent& e = t < 0.5 * (a.onset + b.onset) ? a : b;
    return {e.x, e.y, e.staff};
  }
  const double w = (t - a.onset) / (b.onset - a.onset);
  return unroller.roll(ua + w * (ub - ua));
}

MaskRect mask_rect(const ScorePage& page, const Position& pos,
                   int* clip_warnings) {
  check(pos.staff >= 0 && size_t(pos.staff) < page.staves.size(),
        "mask_rect: staff index out of range");
  const Staff& st = page.staves[size_t(pos.staff)];
  const double margin = st.space();
  const int xi = int(std::lround(pos.x));
  MaskRect r;
  r.x0 = xi - 4;
  r.x1 = xi + 5;
  r.y0 = int(std::lround(st.y_top - margin));
  r.y1 = int(std::lround(st.y_bottom + margin));
  MaskRect clipped{std::max(r.x0, 0), std::min(r.x1, page.width() - 1),
                   std::max(r.y0, 0), std::min(r.y1, page.height() - 1)};
  const bool clips = clipped.x0 != r.x0 || clipped.x1 != r.x1 ||
                     clipped.y0 != r.y0 || clipped.y1 != r.y1;
  if (clips && clip_warnings) ++*clip_warnings;
  return clipped;
}

Tensor<float> render_target_mask(const ScorePage& page, const Position& pos,
                                 int* clip_warnings) {
  const MaskRect r = mask_rect(page, pos, clip_warnings);
  Tensor<float> mask({page.height(), page.width()});
  if (!r.empty())
    for (int y = r.y0; y <= r.y1; ++y)
      for (int x = r.x0; x <= r.x1; ++x) mask.at(y, x) = 1.0f;
  return mask;
}

namespace {

// Shared layout for the generator and its feasibility checks.  The page is
// split into one horizontal band per staff; every glyph a staff owns stays
// inside its band, which is what makes duplicated bars pixel-identical
// under the integer translation between bands.
struct PageGeom {
  int full_h = 0, full_w = 0;
  int space = 0;       // gap between adjacent staff lines, even
  int band = 0;        // band height per staff
  int line_th = 0;
  double x_start = 0, x_end = 0;
  double pad = 0;      // lead-in/out inside a staff before the first note
  double slot_w = 0;   // horizontal slot per note

  int y_center(int staff) const { return band * staff + band / 2; }
  int y_top(int staff) const { return y_center(staff) - 2 * space; }
  int y_bottom(int staff) const { return y_center(staff) + 2 * space; }
  double note_x(int slot, double jitter) const {
    return x_start + pad + slot_w * (slot + 0.5 + jitter);
  }
  double bar_x(int group) const { return x_start + pad + slot_w * group; }
};

PageGeom page_geom(const GenConfig& cfg) {
  PageGeom g;
  g.full_h = cfg.model_h * cfg.downscale;
  g.full_w = cfg.model_w * cfg.downscale;
  g.band = g.full_h / cfg.staves;
  int s = g.band / 16;
  s -= s % 2;
  s = std::min(s, 16);
  if (s < 4)
    fail<ConfigError>("page of height ", g.full_h, " px cannot fit ",
                      cfg.staves, " staves");
  g.space = s;
  g.line_th = std::max(1, (cfg.downscale + 1) / 2);
  g.x_start = 3.0 * cfg.downscale;
  g.x_end = g.full_w - 3.0 * cfg.downscale;
  g.pad = 2.0 * s;
  const double usable = (g.x_end - g.x_start) - 2.0 * g.pad;
  g.slot_w = usable / cfg.notes_per_staff;
  if (g.slot_w < 2.5 * s)
    fail<ConfigError>("staff width ", usable, " px cannot fit ",
                      cfg.notes_per_staff, " notes");
  return g;
}

void fill_rect(Tensor<float>& img, int r0, int r1, int c0, int c1) {
  r0 = std::max(r0, 0);
  c0 = std::max(c0, 0);
  r1 = std::min(r1, img.dim(0) - 1);
  c1 = std::min(c1, img.dim(1) - 1);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) img.at(r, c) = 1.0f;
}

void hline(Tensor<float>& img, int y, double x0, double x1, int th) {
  fill_rect(img, y, y + th - 1, int(std::lround(x0)), int(std::lround(x1)));
}

void vline(Tensor<float>& img, double x, int y0, int y1, int th) {
  const int c = int(std::lround(x));
  fill_rect(img, y0, y1, c, c + th - 1);
}

void ellipse(Tensor<float>& img, double cx, double cy, double rx, double ry) {
  const int r0 = int(std::floor(cy - ry));
  const int r1 = int(std::ceil(cy + ry));
  const int c0 = int(std::floor(cx - rx));
  const int c1 = int(std::ceil(cx + rx));
  for (int r = r0; r <= r1; ++r) {
    if (r < 0 || r >= img.dim(0)) continue;
    for (int c = c0; c <= c1; ++c) {
      if (c < 0 || c >= img.dim(1)) continue;
      const double u = (c - cx) / rx;
      const double v = (r - cy) / ry;
      if (u * u + v * v <= 1.0) img.at(r, c) = 1.0f;
    }
  }
}

// Staff position p counts half-spaces up from the bottom line; p = -2 is
// the first ledger line below (middle C for a treble staff).  Pitches
// follow the C-major scale.
int midi_for_position(int p) {
  static const int kCMajor[7] = {0, 2, 4, 5, 7, 9, 11};
  const int n = p + 2;  // diatonic steps above C4
  check(n >= 0, "midi_for_position: position below supported range");
  return 60 + 12 * (n / 7) + kCMajor[n % 7];
}

struct NotePlan {
  int position = 0;     // half-spaces above the bottom line
  double beats = 1.0;
  double jitter = 0.0;  // fraction of a slot, in [-0.15, 0.15]
};

void draw_note(Tensor<float>& img, const PageGeom& g, int staff, int slot,
               const NotePlan& n) {
  const double s = g.space;
  const double x = g.note_x(slot, n.jitter);
  const double y = g.y_bottom(staff) - n.position * s / 2.0;
  const double rx = 0.7 * s;
  const double ry = 0.5 * s;
  ellipse(img, x, y, rx, ry);
  const int stem_len = 3 * g.space;
  if (n.position < 4) {
    vline(img, x + rx - g.line_th + 1, int(std::lround(y)) - stem_len,
          int(std::lround(y)), g.line_th);
  } else {
    vline(img, x - rx, int(std::lround(y)), int(std::lround(y)) + stem_len,
          g.line_th);
  }
  for (int q = -2; q >= n.position; q -= 2) {
    const int yl = g.y_bottom(staff) - q * g.space / 2;
    hline(img, yl, x - 1.2 * s, x + 1.2 * s, g.line_th);
  }
  for (int q = 10; q <= n.position; q += 2) {
    const int yl = g.y_bottom(staff) - q * g.space / 2;
    hline(img, yl, x - 1.2 * s, x + 1.2 * s, g.line_th);
  }
}

}  // namespace

void GenConfig::validate() const {
  if (model_h < 1 || model_w < 1) fail<ConfigError>("page size must be positive");
  if (downscale < 1) fail<ConfigError>("downscale must be >= 1");
  if (staves < 1) fail<ConfigError>("need at least one staff");
  if (notes_per_staff < 1) fail<ConfigError>("need at least one note per staff");
  if (!(tempo_min_bpm > 0) || tempo_max_bpm < tempo_min_bpm)
    fail<ConfigError>("bad tempo range [", tempo_min_bpm, ", ", tempo_max_bpm, "]");
  if (ambiguity) {
    if (staves < 2) fail<ConfigError>("ambiguity mode needs at least two staves");
    if (ambiguity_bar_notes < 1 || ambiguity_bar_notes > notes_per_staff)
      fail<ConfigError>("ambiguity bar of ", ambiguity_bar_notes,
                        " notes does not fit a staff of ", notes_per_staff);
  }
  page_geom(*this);
}

dsp::AudioSignal synthesize_audio(const AlignmentTrack& track) {
  check(!track.events.empty(), "synthesize_audio: empty track");
  constexpr double kPi = 3.14159265358979323846;
  constexpr double kRelease = 0.25;
  constexpr double kDecay = 0.35;
  constexpr double kAmps[3] = {0.4, 0.2, 0.1};
  double total = 0;
  for (const AlignEvent& e : track.events) {
    check(e.pitch >= 0, "synthesize_audio: event without a pitch");
    total = std::max(total, e.onset + std::max(e.dur, 0.05) + kRelease);
  }
  dsp::AudioSignal audio;
  audio.sample_rate = dsp::kSampleRate;
  audio.samples.assign(size_t(std::ceil((total + 0.2) * audio.sample_rate)), 0.0f);
  const double sr = audio.sample_rate;
  for (const AlignEvent& e : track.events) {
    const double f0 = 440.0 * std::exp2((e.pitch - 69) / 12.0);
    const double end = e.onset + std::max(e.dur, 0.05) + kRelease;
    const int64_t i0 = std::max<int64_t>(0, int64_t(std::ceil(e.onset * sr)));
    const int64_t i1 =
        std::min<int64_t>(int64_t(audio.samples.size()), int64_t(end * sr));
    for (int64_t i = i0; i < i1; ++i) {
      const double t = double(i) / sr - e.onset;
      const double env = std::exp(-t / kDecay);
      double v = 0;
      for (int h = 1; h <= 3; ++h)
        v += kAmps[h - 1] * std::sin(2.0 * kPi * h * f0 * t);
      audio.samples[size_t(i)] += float(v * env);
    }
  }
  return audio;
}

Piece generate_piece(uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  const PageGeom g = page_geom(cfg);
  Rng rng(seed);

  const double bpm = rng.uniform(cfg.tempo_min_bpm, cfg.tempo_max_bpm);
  const double spb = 60.0 / bpm;
  static const double kBeatChoices[4] = {0.5, 1.0, 1.0, 2.0};

  std::vector<std::vector<NotePlan>> plan(size_t(cfg.staves));
  for (auto& staff_plan : plan) {
    staff_plan.resize(size_t(cfg.notes_per_staff));
    for (NotePlan& n : staff_plan) {
      n.position = int(rng.uniform_int(-2, 12));
      n.beats = kBeatChoices[rng.uniform_int(0, 3)];
      n.jitter = rng.uniform(-0.15, 0.15);
    }
  }
  if (cfg.ambiguity) {
    for (int i = 0; i < cfg.ambiguity_bar_notes; ++i)
      plan[size_t(cfg.staves - 1)][size_t(i)] = plan[0][size_t(i)];
  }

  Piece piece;
  piece.id = str_cat("piece-", seed);
  piece.downscale = cfg.downscale;
  piece.page.image = Tensor<float>({g.full_h, g.full_w});
  piece.page.dpi = 72;
  for (int st = 0; st < cfg.staves; ++st)
    piece.page.staves.push_back({double(g.y_center(st)), double(g.y_top(st)),
                                 double(g.y_bottom(st)), g.x_start, g.x_end});

  Tensor<float>& img = piece.page.image;
  double t = 0.5;
  for (int st = 0; st < cfg.staves; ++st) {
    for (int k = 0; k < 5; ++k)
      hline(img, g.y_top(st) + k * g.space, g.x_start, g.x_end, g.line_th);
    vline(img, g.x_start, g.y_top(st), g.y_bottom(st) + g.line_th - 1, g.line_th);
    vline(img, g.x_end, g.y_top(st), g.y_bottom(st) + g.line_th - 1, g.line_th);
    for (int grp = 4; grp < cfg.notes_per_staff; grp += 4)
      vline(img, g.bar_x(grp), g.y_top(st), g.y_bottom(st) + g.line_th - 1,
            g.line_th);
    for (int i = 0; i < cfg.notes_per_staff; ++i) {
      const NotePlan& n = plan[size_t(st)][size_t(i)];
      draw_note(img, g, st, i, n);
      AlignEvent e;
      e.onset = t;
      e.x = g.note_x(i, n.jitter);
      e.y = g.y_center(st);
      e.staff = st;
      e.pitch = midi_for_position(n.position);
      e.dur = n.beats * spb;
      piece.track.events.push_back(e);
      t += n.beats * spb;
    }
  }

  const dsp::AudioSignal audio = synthesize_audio(piece.track);
  if (cfg.features_only) {
    piece.feats = dsp::compute_spectrogram(audio, dsp::build_filterbank());
  } else {
    piece.audio = audio;
  }
  return piece;
}

Tensor<float> shift_image(const Tensor<float>& image, int dx, int dy,
                          float fill) {
  check(image.rank() == 2 || image.rank() == 3,
        "shift_image: image must be [h, w] or [c, h, w]");
  const int ch = image.rank() == 3 ? image.dim(0) : 1;
  const int h = image.dim(image.rank() - 2);
  const int w = image.dim(image.rank() - 1);
  Tensor<float> out = Tensor<float>::full(image.shape(), fill);
  const float* src = image.data();
  float* dst = out.data();
  for (int k = 0; k < ch; ++k) {
    const int64_t base = int64_t(k) * h * w;
    for (int r = 0; r < h; ++r) {
      const int sr = r - dy;
      if (sr < 0 || sr >= h) continue;
      for (int c = 0; c < w; ++c) {
        const int sc = c - dx;
        if (sc < 0 || sc >= w) continue;
        dst[base + int64_t(r) * w + c] = src[base + int64_t(sr) * w + sc];
      }
    }
  }
  return out;
}

Piece augment_tempo(const Piece& piece, double factor) {
  check(factor > 0, "augment_tempo: factor must be positive");
  Piece out = piece;
  const double inv = 1.0 / factor;
  for (AlignEvent& e : out.track.events) {
    e.onset *= inv;
    e.dur *= inv;
  }
  if (piece.audio) {
    for (const AlignEvent& e : out.track.events)
      check(e.pitch >= 0,
            "augment_tempo: events need pitches to re-synthesize audio");
    out.audio = synthesize_audio(out.track);
  } else if (piece.feats) {
    const dsp::Spectrogram& src = *piece.feats;
    check(src.n_frames > 0, "augment_tempo: empty feature sequence");
    dsp::Spectrogram dst = src;
    dst.n_frames = std::max<int>(1, int(std::lround(src.n_frames * inv)));
    dst.data.resize(size_t(dst.n_frames) * src.bins);
    for (int64_t f = 0; f < dst.n_frames; ++f) {
      const int64_t s =
          std::min<int64_t>(src.n_frames - 1, int64_t(std::lround(f * factor)));
      std::copy_n(src.frame(s), src.bins, dst.frame(f));
    }
    out.feats = std::move(dst);
  } else {
    fail<ContractViolation>("augment_tempo: piece has neither audio nor features");
  }
  return out;
}

std::vector<double> default_tempo_factors() {
  std::vector<double> f(7);
  for (int i = 0; i < 7; ++i) f[size_t(i)] = 0.5 + i / 6.0;
  return f;
}

dsp::Spectrogram piece_features(const Piece& piece, const dsp::Filterbank& fbank,
                                const dsp::NormStats* stats) {
  if (stats && stats->empty()) stats = nullptr;
  if (piece.audio) return dsp::compute_spectrogram(*piece.audio, fbank, stats);
  check(piece.feats.has_value(), "piece carries neither audio nor features");
  dsp::Spectrogram spec = *piece.feats;
  if (!spec.standardized && stats) dsp::standardize(spec, *stats);
  return spec;
}

// ---------------------------------------------------------------------------
// On-disk format.

namespace {

void require_clean_id(const std::string& id) {
  if (id.empty()) fail<IoError>("empty piece id");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_';
    if (!ok) fail<IoError>("piece id '", id, "' has unsafe characters");
  }
}

json staff_to_json(const Staff& s) {
  return json{{"y_center", s.y_center},
              {"y_top", s.y_top},
              {"y_bottom", s.y_bottom},
              {"x_start", s.x_start},
              {"x_end", s.x_end}};
}

Staff staff_from_json(const json& j) {
  return {j.at("y_center").get<double>(), j.at("y_top").get<double>(),
          j.at("y_bottom").get<double>(), j.at("x_start").get<double>(),
          j.at("x_end").get<double>()};
}

json parse_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail<IoError>("cannot open ", path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail<IoError>("malformed JSON in ", path.string());
  return j;
}

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail<IoError>("missing-file: cannot open ", path.string());
  uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a(h, buf, size_t(in.gcount()));
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)h);
  return hex;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail<IoError>("cannot write ", path.string());
  out << text;
  if (!out) fail<IoError>("short write to ", path.string());
}

// Writes every file of one piece and returns their checksums for the
// manifest.
json save_piece(const Piece& piece, const fs::path& dir) {
  fs::create_directories(dir);
  write_pgm((dir / "page.pgm").string(), piece.page.image);

  json meta;
  meta["dpi"] = piece.page.dpi;
  meta["downscale"] = piece.downscale;
  meta["staves"] = json::array();
  for (const Staff& s : piece.page.staves) meta["staves"].push_back(staff_to_json(s));
  write_text_file(dir / "meta.json", meta.dump(2));

  json align;
  align["events"] = json::array();
  for (const AlignEvent& e : piece.track.events) {
    json je{{"onset", e.onset}, {"x", e.x}, {"y", e.y}, {"staff", e.staff}};
    if (e.pitch >= 0) {
      je["pitch"] = e.pitch;
      je["dur"] = e.dur;
    }
    align["events"].push_back(std::move(je));
  }
  write_text_file(dir / "align.json", align.dump(2));

  std::vector<std::string> files{"page.pgm", "meta.json", "align.json"};
  if (piece.audio) {
    dsp::write_wav((dir / "audio.wav").string(), *piece.audio);
    files.push_back("audio.wav");
  } else if (piece.feats) {
    const dsp::Spectrogram& sp = *piece.feats;
    json fj{{"fps", sp.fps},
            {"bins", sp.bins},
            {"frames", sp.n_frames},
            {"standardized", sp.standardized}};
    write_text_file(dir / "feats.json", fj.dump(2));
    std::ofstream out(dir / "feats.f32", std::ios::binary);
    if (!out) fail<IoError>("cannot write ", (dir / "feats.f32").string());
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(sp.data.data()),
              std::streamsize(sp.data.size() * 4));
    if (!out) fail<IoError>("short write to ", (dir / "feats.f32").string());
    files.push_back("feats.json");
    files.push_back("feats.f32");
  } else {
    fail<IoError>("piece ", piece.id, " has neither audio nor features");
  }
  json sums;
  for (const std::string& f : files) sums[f] = file_checksum(dir / f);
  return sums;
}

Piece load_piece(const std::string& id, const fs::path& dir) {
  Piece piece;
  piece.id = id;
  piece.page.image = read_pgm((dir / "page.pgm").string());

  const json meta = parse_json_file(dir / "meta.json");
  try {
    piece.page.dpi = meta.at("dpi").get<int>();
    piece.downscale = meta.at("downscale").get<int>();
    for (const json& js : meta.at("staves"))
      piece.page.staves.push_back(staff_from_json(js));
  } catch (const json::exception& e) {
    fail<IoError>("bad meta.json for ", id, ": ", e.what());
  }
  if (piece.downscale < 1) fail<IoError>("bad downscale for ", id);

  const json align = parse_json_file(dir / "align.json");
  try {
    for (const json& je : align.at("events")) {
      AlignEvent e;
      e.onset = je.at("onset").get<double>();
      e.x = je.at("x").get<double>();
      e.y = je.at("y").get<double>();
      e.staff = je.at("staff").get<int>();
      if (je.contains("pitch")) {
        e.pitch = je.at("pitch").get<int>();
        e.dur = je.value("dur", 0.0);
      }
      piece.track.events.push_back(e);
    }
  } catch (const json::exception& e) {
    fail<IoError>("bad align.json for ", id, ": ", e.what());
  }

  if (fs::exists(dir / "audio.wav")) {
    piece.audio = dsp::read_wav((dir / "audio.wav").string());
  } else if (fs::exists(dir / "feats.f32")) {
    const json fj = parse_json_file(dir / "feats.json");
    dsp::Spectrogram sp;
    try {
      sp.fps = fj.at("fps").get<int>();
      sp.bins = fj.at("bins").get<int>();
      sp.n_frames = fj.at("frames").get<int>();
      sp.standardized = fj.at("standardized").get<bool>();
    } catch (const json::exception& e) {
      fail<IoError>("bad feats.json for ", id, ": ", e.what());
    }
    if (sp.fps <= 0 || sp.bins <= 0 || sp.n_frames < 0)
      fail<IoError>("bad feature dims for ", id);
    std::ifstream in(dir / "feats.f32", std::ios::binary | std::ios::ate);
    if (!in) fail<IoError>("cannot open ", (dir / "feats.f32").string());
    const auto size = in.tellg();
    const int64_t want = int64_t(sp.n_frames) * sp.bins * 4;
    if (int64_t(size) != want)
      fail<IoError>("feats.f32 for ", id, " is ", int64_t(size),
                    " bytes, expected ", want);
    in.seekg(0);
    sp.data.resize(size_t(want / 4));
    in.read(reinterpret_cast<char*>(sp.data.data()), want);
    if (!in) fail<IoError>("short read from feats.f32 for ", id);
    piece.feats = std::move(sp);
  }
  return piece;
}

}  // namespace

std::string validate_piece(const Piece& piece) {
  const auto& staves = piece.page.staves;
  if (piece.page.image.numel() == 0 || staves.empty())
    return "page-has-staves: page image or staff list is empty";
  for (size_t i = 0; i < staves.size(); ++i) {
    const Staff& s = staves[i];
    if (!(s.y_top <= s.y_center && s.y_center <= s.y_bottom) || s.width() <= 0)
      return str_cat("staves-ordered-nonoverlapping: staff ", i, " is degenerate");
    if (i > 0 && !(s.y_top > staves[i - 1].y_bottom))
      return str_cat("staves-ordered-nonoverlapping: staff ", i,
                     " overlaps or precedes staff ", i - 1);
  }
  const auto& ev = piece.track.events;
  if (ev.empty()) return "track-nonempty: no alignment events";
  std::vector<double> last_x(staves.size(),
                             -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < ev.size(); ++i) {
    const AlignEvent& e = ev[i];
    if (e.staff < 0 || size_t(e.staff) >= staves.size())
      return str_cat("event-staff-index: event ", i, " names staff ", e.staff);
    if (i > 0 && e.onset < ev[i - 1].onset)
      return str_cat("events-sorted-by-onset: event ", i, " at ", e.onset,
                     " follows ", ev[i - 1].onset);
    if (std::abs(e.y - staves[size_t(e.staff)].y_center) > 1e-6)
      return str_cat("event-y-at-staff-center: event ", i, " y=", e.y,
                     " but staff center is ", staves[size_t(e.staff)].y_center);
    if (e.x < last_x[size_t(e.staff)])
      return str_cat("x-nondecreasing-within-staff: event ", i,
                     " moves backwards on staff ", e.staff);
    last_x[size_t(e.staff)] = e.x;
  }
  if (!piece.audio && !piece.feats)
    return "audio-or-features-present: piece has neither audio nor features";
  if (ev.back().onset > piece.duration_s())
    return str_cat("track-within-audio: last onset ", ev.back().onset,
                   "s exceeds duration ", piece.duration_s(), "s");
  return "";
}

void save_dataset(const std::vector<Piece>& pieces, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "pieces");
  json manifest;
  manifest["format"] = "pgtk-dataset";
  manifest["version"] = 1;
  manifest["pieces"] = json::array();
  for (const Piece& p : pieces) {
    require_clean_id(p.id);
    json entry;
    entry["id"] = p.id;
    entry["files"] = save_piece(p, root / "pieces" / p.id);
    manifest["pieces"].push_back(std::move(entry));
  }
  write_text_file(root / "manifest.json", manifest.dump(2));
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const json manifest = parse_json_file(root / "manifest.json");
  if (manifest.value("format", "") != "pgtk-dataset" ||
      manifest.value("version", 0) != 1)
    fail<IoError>(dir, " is not a dataset directory");
  if (!manifest.contains("pieces") || !manifest["pieces"].is_array())
    fail<IoError>("manifest in ", dir, " lacks a piece list");

  Dataset ds;
  for (const json& jentry : manifest["pieces"]) {
    if (!jentry.is_object() || !jentry.contains("id") ||
        !jentry["id"].is_string()) {
      ds.issues.push_back({"", "manifest piece entry lacks an id"});
      continue;
    }
    const std::string id = jentry["id"].get<std::string>();
    try {
      require_clean_id(id);
      const fs::path pdir = root / "pieces" / id;
      if (jentry.contains("files"))
        for (const auto& [fname, jsum] : jentry["files"].items()) {
          if (fname.find('/') != std::string::npos || fname.find("..") == 0)
            fail<IoError>("unsafe manifest file name ", fname);
          const std::string got = file_checksum(pdir / fname);
          if (!jsum.is_string() || got != jsum.get<std::string>())
            fail<IoError>("checksum-mismatch: ", fname);
        }
      Piece piece = load_piece(id, pdir);
      const std::string violation = validate_piece(piece);
      if (!violation.empty()) {
        ds.issues.push_back({id, violation});
        continue;
      }
      ds.pieces.push_back(std::move(piece));
    } catch (const IoError& e) {
      ds.issues.push_back({id, e.what()});
    } catch (const ConfigError& e) {
      ds.issues.push_back({id, e.what()});
    }
  }
  return ds;
}

Tensor<float> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail<IoError>("cannot open ", path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        while (in.get(c) && c != '\n') {
        }
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok += c;
    }
    if (tok.empty()) fail<IoError>("truncated PGM header in ", path);
    return tok;
  };
  if (next_token() != "P5") fail<IoError>(path, " is not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    fail<IoError>("bad PGM header in ", path);
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    fail<IoError>("unsupported PGM dims in ", path);
  std::vector<char> bytes(size_t(w) * h);
  in.read(bytes.data(), std::streamsize(bytes.size()));
  if (!in) fail<IoError>("truncated PGM payload in ", path);
  Tensor<float> img({h, w});
  for (int64_t i = 0; i < img.numel(); ++i)
    img.data()[i] =
        1.0f - float(static_cast<unsigned char>(bytes[size_t(i)])) / maxval;
  return img;
}

void write_pgm(const std::string& path, const Tensor<float>& image) {
  check(image.rank() == 2, "write_pgm: image must be [h, w]");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail<IoError>("cannot write ", path);
  out << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  std::vector<char> bytes(size_t(image.numel()));
  for (int64_t i = 0; i < image.numel(); ++i) {
    const long v = std::lround((1.0f - image.data()[i]) * 255.0f);
    bytes[size_t(i)] = char(static_cast<unsigned char>(std::clamp(v, 0l, 255l)));
  }
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) fail<IoError>("short write to ", path);
}

}  // namespace data
}  // namespace pgtk
