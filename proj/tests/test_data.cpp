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
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pgtk/data.hpp"
#include "pgtk/rng.hpp"

using namespace pgtk;
using namespace pgtk::data;
namespace fs = std::filesystem;

namespace {

// Two staves of width 100 on a 200x200 page, integer geometry.
ScorePage two_staff_page() {
  ScorePage page;
  page.image = Tensor<float>({200, 200});
  page.staves.push_back({60.0, 52.0, 68.0, 20.0, 120.0});
  page.staves.push_back({140.0, 132.0, 148.0, 20.0, 120.0});
  return page;
}

AlignEvent ev(double onset, double x, double y, int staff) {
  AlignEvent e;
  e.onset = onset;
  e.x = x;
  e.y = y;
  e.staff = staff;
  return e;
}

GenConfig small_cfg() {
  GenConfig cfg;
  cfg.model_h = 96;
  cfg.model_w = 128;
  cfg.staves = 2;
  cfg.notes_per_staff = 8;
  return cfg;
}

bool images_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

bool events_equal(const AlignmentTrack& a, const AlignmentTrack& b) {
  if (a.events.size() != b.events.size()) return false;
  for (size_t i = 0; i < a.events.size(); ++i) {
    const AlignEvent &x = a.events[i], &y = b.events[i];
    if (x.onset != y.onset || x.x != y.x || x.y != y.y || x.staff != y.staff ||
        x.pitch != y.pitch || x.dur != y.dur)
      return false;
  }
  return true;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void flip_byte(const fs::path& file, int64_t offset_from_end) {
  std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
  REQUIRE(bool(f));
  f.seekg(0, std::ios::end);
  const int64_t size = f.tellg();
  f.seekp(size - offset_from_end);
  char c;
  f.seekg(size - offset_from_end);
  f.get(c);
  f.seekp(size - offset_from_end);
  f.put(char(c ^ 0x40));
}

}  // namespace

TEST_CASE("downscale averages blocks and floors the size") {
  Tensor<float> img({7, 8});
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 8; ++c) img.at(r, c) = float(r * 8 + c);
  Tensor<float> out = downscale_image(img, 3);
  CHECK(out.dim(0) == 2);
  CHECK(out.dim(1) == 2);
  // Block mean of the ramp is the value at the block center.
  CHECK(out.at(0, 0) == doctest::Approx(9.0).epsilon(1e-7));
  CHECK(out.at(0, 1) == doctest::Approx(12.0).epsilon(1e-7));
  CHECK(out.at(1, 0) == doctest::Approx(33.0).epsilon(1e-7));
  CHECK(out.at(1, 1) == doctest::Approx(36.0).epsilon(1e-7));
  CHECK_THROWS_AS(downscale_image(img, 0), ContractViolation);
  CHECK_THROWS_AS(downscale_image(Tensor<float>({2, 2}), 3), ContractViolation);

  ScorePage page = two_staff_page();
  ScorePage small = downscale_page(page, 2);
  CHECK(small.height() == 100);
  CHECK(small.staves[0].y_center == doctest::Approx(30.0));
  CHECK(small.staves[1].x_end == doctest::Approx(60.0));

  AlignmentTrack tr;
  tr.events.push_back(ev(1.0, 30.0, 60.0, 0));
  AlignmentTrack half = downscale_track(tr, 2);
  CHECK(half.events[0].x == doctest::Approx(15.0));
  CHECK(half.events[0].y == doctest::Approx(30.0));
  CHECK(half.events[0].onset == 1.0);
}

TEST_CASE("unroller concatenates staff extents") {
  const ScorePage page = two_staff_page();
  Unroller un(page.staves);
  CHECK(un.length() == doctest::Approx(200.0));
  CHECK(un.unroll(20.0, 0) == doctest::Approx(0.0));
  CHECK(un.unroll(120.0, 0) == doctest::Approx(100.0));
  CHECK(un.unroll(20.0, 1) == doctest::Approx(100.0));

  Position p = un.roll(50.0);
  CHECK(p.staff == 0);
  CHECK(p.x == doctest::Approx(70.0));
  CHECK(p.y == doctest::Approx(60.0));
  // Boundary points belong to the later staff; the end clamps.
  CHECK(un.roll(100.0).staff == 1);
  CHECK(un.roll(100.0).x == doctest::Approx(20.0));
  CHECK(un.roll(200.0).staff == 1);
  CHECK(un.roll(200.0).x == doctest::Approx(120.0));
  CHECK(un.roll(-5.0).staff == 0);
  CHECK_THROWS_AS(Unroller(std::vector<Staff>{}), ContractViolation);
}

TEST_CASE("interpolation is linear between onsets and clamps outside") {
  const ScorePage page = two_staff_page();
  Unroller un(page.staves);
  AlignmentTrack tr;
  tr.events.push_back(ev(1.0, 100.0, 60.0, 0));
  tr.events.push_back(ev(2.0, 120.0, 60.0, 0));

  // Midway between x=100 and x=120 in one staff.
  Position mid = interpolate_position(un, tr, 1.5);
  CHECK(mid.x == doctest::Approx(110.0));
  CHECK(mid.staff == 0);

  // Exactly at an onset, and clamped before/after the track.
  CHECK(interpolate_position(un, tr, 1.0).x == doctest::Approx(100.0));
  CHECK(interpolate_position(un, tr, 2.0).x == doctest::Approx(120.0));
  CHECK(interpolate_position(un, tr, 0.0).x == doctest::Approx(100.0));
  CHECK(interpolate_position(un, tr, 9.0).x == doctest::Approx(120.0));

  // Single-event track returns that event for any t.
  AlignmentTrack single;
  single.events.push_back(ev(3.0, 42.0, 140.0, 1));
  for (double t : {0.0, 3.0, 100.0}) {
    Position p = interpolate_position(un, single, t);
    CHECK(p.x == doctest::Approx(42.0));
    CHECK(p.staff == 1);
  }

  AlignmentTrack empty;
  CHECK_THROWS_AS(interpolate_position(un, empty, 0.0), ContractViolation);
}

TEST_CASE("interpolation crosses staves through unrolled space") {
  const ScorePage page = two_staff_page();
  Unroller un(page.staves);
  AlignmentTrack tr;
  tr.events.push_back(ev(0.0, 100.0, 60.0, 0));  // u = 80
  tr.events.push_back(ev(1.0, 50.0, 140.0, 1));  // u = 130

  // u(t) = 80 + 50 t crosses the staff boundary (u=100) at t = 0.4.
  Position before = interpolate_position(un, tr, 0.3);
  CHECK(before.staff == 0);
  CHECK(before.x == doctest::Approx(115.0));
  CHECK(before.y == doctest::Approx(60.0));
  Position at = interpolate_position(un, tr, 0.4);
  CHECK(at.staff == 1);
  CHECK(at.x == doctest::Approx(20.0));
  Position after = interpolate_position(un, tr, 0.8);
  CHECK(after.staff == 1);
  CHECK(after.x == doctest::Approx(40.0));
  CHECK(after.y == doctest::Approx(140.0));

  // Degenerate pair: same unrolled position on different staves flips at
  // the temporal midpoint.
  AlignmentTrack deg;
  deg.events.push_back(ev(0.0, 120.0, 60.0, 0));   // staff end, u = 100
  deg.events.push_back(ev(2.0, 20.0, 140.0, 1));   // staff start, u = 100
  CHECK(interpolate_position(un, deg, 0.9).staff == 0);
  CHECK(interpolate_position(un, deg, 0.9).x == doctest::Approx(120.0));
  CHECK(interpolate_position(un, deg, 1.1).staff == 1);
  CHECK(interpolate_position(un, deg, 1.1).x == doctest::Approx(20.0));
}

TEST_CASE("target masks are 10 px wide with staff-adaptive height") {
  const ScorePage page = two_staff_page();
  // Staff 0: lines span 52..68, space 4, so rows 48..72 and 10 columns.
  int warnings = 0;
  MaskRect r = mask_rect(page, {60.0, 60.0, 0}, &warnings);
  CHECK(r.x0 == 56);
  CHECK(r.x1 == 65);
  CHECK(r.y0 == 48);
  CHECK(r.y1 == 72);
  CHECK(r.area() == 10 * (17 + 2 * 4));
  CHECK(warnings == 0);

  Tensor<float> mask = render_target_mask(page, {60.0, 60.0, 0});
  double sum = 0;
  for (int64_t i = 0; i < mask.numel(); ++i) sum += mask.data()[i];
  CHECK(sum == doctest::Approx(double(r.area())));
  CHECK(mask.at(48, 56) == 1.0f);
  CHECK(mask.at(72, 65) == 1.0f);
  CHECK(mask.at(47, 60) == 0.0f);
  CHECK(mask.at(60, 66) == 0.0f);

  // Near the left edge the box is clipped: x=3 keeps columns 0..8.
  warnings = 0;
  MaskRect edge = mask_rect(page, {3.0, 60.0, 0}, &warnings);
  CHECK(edge.x0 == 0);
  CHECK(edge.x1 == 8);
  CHECK(edge.x1 - edge.x0 + 1 == 9);
  CHECK(warnings == 1);

  // Entirely off the page: empty box, still counted.
  warnings = 0;
  MaskRect off = mask_rect(page, {-50.0, 60.0, 0}, &warnings);
  CHECK(off.empty());
  CHECK(off.area() == 0);
  CHECK(warnings == 1);

  CHECK_THROWS_AS(mask_rect(page, {60.0, 60.0, 7}), ContractViolation);
}

TEST_CASE("generator is deterministic and satisfies piece invariants") {
  const GenConfig cfg = small_cfg();
  const Piece a = generate_piece(7, cfg);
  const Piece b = generate_piece(7, cfg);
  const Piece c = generate_piece(8, cfg);

  CHECK(images_equal(a.page.image, b.page.image));
  CHECK(events_equal(a.track, b.track));
  REQUIRE(bool(a.audio));
  REQUIRE(bool(b.audio));
  CHECK(a.audio->samples == b.audio->samples);
  CHECK_FALSE(images_equal(a.page.image, c.page.image));

  CHECK(validate_piece(a).empty());
  CHECK(a.page.staves.size() == 2);
  CHECK(a.track.events.size() == 16);
  for (const AlignEvent& e : a.track.events) {
    const Staff& st = a.page.staves[size_t(e.staff)];
    CHECK(e.x >= st.x_start);
    CHECK(e.x <= st.x_end);
    CHECK(e.pitch >= 57);
    CHECK(e.pitch <= 84);
  }
  for (float v : a.audio->samples) {
    CHECK(v <= 1.0f);
    CHECK(v >= -1.0f);
  }

  // Staves must survive the configured downscale with at least one event.
  const ScorePage small = downscale_page(a.page, a.downscale);
  CHECK(small.height() == cfg.model_h);
  CHECK(small.width() == cfg.model_w);
  CHECK(small.staves.size() == a.page.staves.size());

  GenConfig bad = cfg;
  bad.notes_per_staff = 500;
  CHECK_THROWS_AS(generate_piece(1, bad), ConfigError);
  GenConfig tiny = cfg;
  tiny.model_h = 8;
  CHECK_THROWS_AS(generate_piece(1, tiny), ConfigError);
}

TEST_CASE("synthesized notes land on the right filterbank bins") {
  AlignmentTrack tr;
  AlignEvent e = ev(0.2, 50.0, 60.0, 0);
  e.pitch = 69;  // A4 = 440 Hz
  e.dur = 1.0;
  tr.events.push_back(e);
  const dsp::AudioSignal audio = synthesize_audio(tr);
  const dsp::Filterbank fb = dsp::build_filterbank();
  const dsp::Spectrogram spec = dsp::compute_spectrogram(audio, fb);
  // Frame 6 is 0.1 s into the note.
  const float* frame = spec.frame(6);
  int best = 0;
  for (int i = 1; i < spec.bins; ++i)
    if (frame[size_t(i)] > frame[size_t(best)]) best = i;
  const double hz = fb.center_hz(best);
  CHECK(std::abs(hz - 440.0) < 440.0 * 0.06);
}

TEST_CASE("every 20 fps frame yields a nonempty in-page mask") {
  const Piece piece = generate_piece(11, small_cfg());
  const ScorePage page = downscale_page(piece.page, piece.downscale);
  const AlignmentTrack track = downscale_track(piece.track, piece.downscale);
  Unroller un(page.staves);
  const int frames = int(std::ceil(piece.duration_s() * 20.0));
  for (int f = 0; f < frames; ++f) {
    const Position pos = interpolate_position(un, track, f / 20.0);
    const MaskRect r = mask_rect(page, pos);
    CHECK_FALSE(r.empty());
    CHECK(r.x0 >= 0);
    CHECK(r.y0 >= 0);
    CHECK(r.x1 < page.width());
    CHECK(r.y1 < page.height());
  }
}

TEST_CASE("ambiguity mode duplicates a bar pixel for pixel") {
  GenConfig cfg = small_cfg();
  cfg.ambiguity = true;
  const Piece piece = generate_piece(23, cfg);
  const auto& ev = piece.track.events;
  const int n = cfg.notes_per_staff;
  const int m = cfg.ambiguity_bar_notes;

  // The copied bar repeats pitches and horizontal offsets exactly.
  double max_x = 0;
  for (int i = 0; i < m; ++i) {
    CHECK(ev[size_t(i)].pitch == ev[size_t(n + i)].pitch);
    CHECK(ev[size_t(i)].x == ev[size_t(n + i)].x);
    max_x = std::max(max_x, ev[size_t(i)].x);
  }

  const Staff& s0 = piece.page.staves[0];
  const Staff& s1 = piece.page.staves[1];
  const int space = int(std::lround(s0.space()));
  const int r0a = int(std::lround(s0.y_center)) - 7 * space;
  const int r0b = int(std::lround(s1.y_center)) - 7 * space;
  const int rows = 14 * space + 1;
  const int c1 = int(std::lround(max_x + 0.5 * space));
  const Tensor<float>& img = piece.page.image;
  bool same = true;
  double ink = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c <= c1; ++c) {
      if (img.at(r0a + r, c) != img.at(r0b + r, c)) same = false;
      ink += img.at(r0a + r, c);
    }
  CHECK(same);
  CHECK(ink > 0);

  GenConfig bad = cfg;
  bad.staves = 1;
  CHECK_THROWS_AS(generate_piece(1, bad), ConfigError);
}

TEST_CASE("shift moves pixels rigidly and fills with background") {
  Rng rng(5);
  Tensor<float> img({2, 12, 16});
  for (int64_t i = 0; i < img.numel(); ++i)
    img.data()[i] = float(rng.uniform());

  Tensor<float> same = shift_image(img, 0, 0);
  bool eq = true;
  for (int64_t i = 0; i < img.numel(); ++i)
    if (img.data()[i] != same.data()[i]) eq = false;
  CHECK(eq);

  // A single bright pixel moves by exactly (dx, dy).
  Tensor<float> dot({12, 16});
  dot.at(5, 7) = 1.0f;
  Tensor<float> moved = shift_image(dot, 3, -2);
  CHECK(moved.at(3, 10) == 1.0f);
  double sum = 0;
  for (int64_t i = 0; i < moved.numel(); ++i) sum += moved.data()[i];
  CHECK(sum == doctest::Approx(1.0));

  // Shifting out and back restores every interior pixel.
  Tensor<float> round = shift_image(shift_image(img, 4, 0), -4, 0);
  for (int k = 0; k < 2; ++k)
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 16 - 4; ++c)
        CHECK(round.at(k, r, c) == img.at(k, r, c));

  Tensor<float> filled = shift_image(dot, 6, 6, 0.25f);
  CHECK(filled.at(0, 0) == 0.25f);
}

TEST_CASE("tempo augmentation rescales time and commutes with interpolation") {
  GenConfig cfg = small_cfg();
  cfg.notes_per_staff = 4;
  const Piece piece = generate_piece(3, cfg);

  const Piece same = augment_tempo(piece, 1.0);
  CHECK(events_equal(same.track, piece.track));
  CHECK(same.audio->samples == piece.audio->samples);

  const Piece fast = augment_tempo(piece, 2.0);
  for (size_t i = 0; i < fast.track.events.size(); ++i) {
    CHECK(fast.track.events[i].onset ==
          doctest::Approx(piece.track.events[i].onset / 2.0).epsilon(1e-12));
    CHECK(fast.track.events[i].dur ==
          doctest::Approx(piece.track.events[i].dur / 2.0).epsilon(1e-12));
  }
  CHECK(fast.audio->duration_s() < 0.75 * piece.audio->duration_s());
  CHECK(images_equal(fast.page.image, piece.page.image));
  CHECK(validate_piece(fast).empty());

  // Any positive factor preserves event order.
  const Piece odd = augment_tempo(piece, 0.37);
  for (size_t i = 1; i < odd.track.events.size(); ++i)
    CHECK(odd.track.events[i].onset >= odd.track.events[i - 1].onset);

  CHECK_THROWS_AS(augment_tempo(piece, 0.0), ContractViolation);
  CHECK_THROWS_AS(augment_tempo(piece, -1.0), ContractViolation);

  // interpolate(stretch(T), t) == interpolate(T, factor * t).
  const ScorePage page = downscale_page(piece.page, piece.downscale);
  Unroller un(page.staves);
  const AlignmentTrack base = downscale_track(piece.track, piece.downscale);
  const AlignmentTrack slow = downscale_track(
      augment_tempo(piece, 0.75).track, piece.downscale);
  for (int i = 0; i <= 200; ++i) {
    const double t = 0.05 * i;
    const Position pa = interpolate_position(un, slow, t);
    const Position pb = interpolate_position(un, base, 0.75 * t);
    CHECK(pa.staff == pb.staff);
    CHECK(pa.x == doctest::Approx(pb.x).epsilon(1e-9));
    CHECK(pa.y == doctest::Approx(pb.y).epsilon(1e-9));
  }

  // Feature-only pieces resample the frame timeline instead.
  GenConfig fcfg = cfg;
  fcfg.features_only = true;
  const Piece fpiece = generate_piece(3, fcfg);
  REQUIRE(bool(fpiece.feats));
  const Piece ffast = augment_tempo(fpiece, 2.0);
  CHECK(ffast.feats->n_frames ==
        int(std::lround(fpiece.feats->n_frames / 2.0)));
  for (int f = 0; f < ffast.feats->n_frames; ++f) {
    const int64_t src = std::min<int64_t>(fpiece.feats->n_frames - 1,
                                          int64_t(std::lround(f * 2.0)));
    for (int b = 0; b < ffast.feats->bins; ++b)
      CHECK(ffast.feats->frame(f)[size_t(b)] ==
            fpiece.feats->frame(src)[size_t(b)]);
  }

  // Re-synthesis needs pitches.
  Piece stripped = piece;
  for (AlignEvent& e : stripped.track.events) e.pitch = -1;
  CHECK_THROWS_AS(augment_tempo(stripped, 1.5), ContractViolation);

  const std::vector<double> factors = default_tempo_factors();
  REQUIRE(factors.size() == 7);
  CHECK(factors.front() == doctest::Approx(0.5));
  CHECK(factors.back() == doctest::Approx(1.5));
  for (size_t i = 1; i < factors.size(); ++i)
    CHECK(factors[i] - factors[i - 1] == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("datasets round-trip bit-exactly") {
  TempDir dir("pgtk_data_roundtrip");
  GenConfig cfg = small_cfg();
  cfg.notes_per_staff = 4;
  Piece p0 = generate_piece(1, cfg);
  p0.id = "p000";
  GenConfig fcfg = cfg;
  fcfg.features_only = true;
  Piece p1 = generate_piece(2, fcfg);
  p1.id = "p001";

  save_dataset({p0, p1}, dir.path.string());
  const Dataset ds = load_dataset(dir.path.string());
  REQUIRE(ds.issues.empty());
  REQUIRE(ds.pieces.size() == 2);

  const Piece& q0 = ds.pieces[0];
  CHECK(q0.id == "p000");
  CHECK(images_equal(q0.page.image, p0.page.image));
  CHECK(events_equal(q0.track, p0.track));
  CHECK(q0.downscale == p0.downscale);
  REQUIRE(bool(q0.audio));
  CHECK(q0.audio->samples == p0.audio->samples);
  REQUIRE(q0.page.staves.size() == p0.page.staves.size());
  for (size_t i = 0; i < p0.page.staves.size(); ++i) {
    CHECK(q0.page.staves[i].y_center == p0.page.staves[i].y_center);
    CHECK(q0.page.staves[i].x_end == p0.page.staves[i].x_end);
  }

  const Piece& q1 = ds.pieces[1];
  REQUIRE(bool(q1.feats));
  CHECK_FALSE(bool(q1.audio));
  CHECK(q1.feats->n_frames == p1.feats->n_frames);
  CHECK(q1.feats->data == p1.feats->data);
  CHECK(q1.feats->fps == p1.feats->fps);
  CHECK(q1.feats->standardized == p1.feats->standardized);
}

TEST_CASE("the loader rejects invariant violations by name") {
  TempDir dir("pgtk_data_invalid");
  GenConfig cfg = small_cfg();
  cfg.notes_per_staff = 4;

  Piece good = generate_piece(1, cfg);
  good.id = "good";
  Piece backwards = generate_piece(2, cfg);
  backwards.id = "backwards";
  std::swap(backwards.track.events[1].x, backwards.track.events[2].x);
  Piece offcenter = generate_piece(3, cfg);
  offcenter.id = "offcenter";
  offcenter.track.events[0].y += 2.0;

  save_dataset({good, backwards, offcenter}, dir.path.string());
  const Dataset ds = load_dataset(dir.path.string());
  REQUIRE(ds.pieces.size() == 1);
  CHECK(ds.pieces[0].id == "good");
  REQUIRE(ds.issues.size() == 2);
  CHECK(ds.issues[0].piece_id == "backwards");
  CHECK(ds.issues[0].message.find("x-nondecreasing-within-staff") !=
        std::string::npos);
  CHECK(ds.issues[1].piece_id == "offcenter");
  CHECK(ds.issues[1].message.find("event-y-at-staff-center") !=
        std::string::npos);
}

TEST_CASE("the loader detects corruption and missing modalities") {
  TempDir dir("pgtk_data_corrupt");
  GenConfig cfg = small_cfg();
  cfg.notes_per_staff = 4;
  Piece piece = generate_piece(4, cfg);
  piece.id = "piece";

  SUBCASE("flipped image byte") {
    save_dataset({piece}, dir.path.string());
    flip_byte(dir.path / "pieces" / "piece" / "page.pgm", 100);
    const Dataset ds = load_dataset(dir.path.string());
    CHECK(ds.pieces.empty());
    REQUIRE(ds.issues.size() == 1);
    CHECK(ds.issues[0].message.find("checksum-mismatch") != std::string::npos);
  }

  SUBCASE("flipped audio byte") {
    save_dataset({piece}, dir.path.string());
    flip_byte(dir.path / "pieces" / "piece" / "audio.wav", 200);
    const Dataset ds = load_dataset(dir.path.string());
    CHECK(ds.pieces.empty());
    REQUIRE(ds.issues.size() == 1);
    CHECK(ds.issues[0].message.find("checksum-mismatch") != std::string::npos);
  }

  SUBCASE("audio removed entirely") {
    save_dataset({piece}, dir.path.string());
    // Drop the file and its manifest entry so only the invariant trips.
    fs::remove(dir.path / "pieces" / "piece" / "audio.wav");
    std::ifstream in(dir.path / "manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    in.close();
    manifest["pieces"][0]["files"].erase("audio.wav");
    std::ofstream out(dir.path / "manifest.json");
    out << manifest.dump(2);
    out.close();
    const Dataset ds = load_dataset(dir.path.string());
    CHECK(ds.pieces.empty());
    REQUIRE(ds.issues.size() == 1);
    CHECK(ds.issues[0].message.find("audio-or-features-present") !=
          std::string::npos);
  }

  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(load_dataset((dir.path / "nowhere").string()), IoError);
  }

  SUBCASE("manifest is not a dataset") {
    std::ofstream out(dir.path / "manifest.json");
    out << "{\"format\": \"something-else\"}";
    out.close();
    CHECK_THROWS_AS(load_dataset(dir.path.string()), IoError);
  }
}

TEST_CASE("pgm files round-trip binary images") {
  TempDir dir("pgtk_data_pgm");
  Tensor<float> img({5, 9});
  Rng rng(9);
  for (int64_t i = 0; i < img.numel(); ++i)
    img.data()[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
  const std::string path = (dir.path / "img.pgm").string();
  write_pgm(path, img);
  Tensor<float> back = read_pgm(path);
  CHECK(images_equal(img, back));

  std::ofstream bad(dir.path / "bad.pgm");
  bad << "P2\n2 2\n255\n0 0 0 0\n";
  bad.close();
  CHECK_THROWS_AS(read_pgm((dir.path / "bad.pgm").string()), IoError);
}
