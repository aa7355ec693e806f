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

#include "pgtk/model.hpp"

#include <Eigen/Dense>
#include <bit>
#include <cstdio>
#include <cstring>
#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace pgtk::model {

using nlohmann::json;

const char* to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::kCb: return "cb";
    case EncoderKind::kFb: return "fb";
    case EncoderKind::kNtc: return "ntc";
  }
  return "?";
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "cb") return EncoderKind::kCb;
  if (s == "fb") return EncoderKind::kFb;
  if (s == "ntc") return EncoderKind::kNtc;
  fail<ConfigError>("unknown encoder kind '", s, "' (expected cb, fb or ntc)");
}

namespace {

// Spatial sizes of the CB conv stack after each pooling stage.
struct CbChain {
  int h[5], w[5];  // h[0] is the input, h[4] after the 4th pool
};

CbChain cb_chain(const ModelConfig& cfg) {
  CbChain ch;
  ch.h[0] = cfg.spec_bins;
  ch.w[0] = cfg.context_frames;
  for (int s = 0; s < 4; ++s) {
    ch.h[s + 1] = ch.h[s] / 2;
    ch.w[s + 1] = ch.w[s] / 2;
  }
  return ch;
}

}  // namespace

void ModelConfig::validate() const {
  if (base_filters < 1) fail<ConfigError>("base_filters must be >= 1");
  if (depth < 2 || depth > 8) fail<ConfigError>("depth must be in [2, 8], got ", depth);
  if (spec_bins < 1) fail<ConfigError>("spec_bins must be >= 1");
  if (context_frames < 1) fail<ConfigError>("context_frames must be >= 1");
  if (encoder_filters < 1) fail<ConfigError>("encoder_filters must be >= 1");
  if (embed_dim < 1) fail<ConfigError>("embed_dim must be >= 1");
  if (cond_units < 1) fail<ConfigError>("cond_units must be >= 1");
  if (input_downscale < 1) fail<ConfigError>("input_downscale must be >= 1");
  const char last = dec_letter(depth - 2);
  for (char b : film_blocks)
    if (b < 'A' || b > last)
      fail<ConfigError>("film block '", std::string(1, b), "' outside A..",
                        std::string(1, last));
  if (context_encoder()) {
    const CbChain ch = cb_chain(*this);
    for (int s = 0; s < 4; ++s)
      if (ch.h[s] < 2 || ch.w[s] < 2)
        fail<ConfigError>("spectrogram window ", spec_bins, "x", context_frames,
                          " too small for the four-stage encoder");
  }
}

namespace {

template <typename T>
int add_zero(ParamStore<T>& ps, const std::string& name, std::vector<int> shape) {
  return ps.add(name, Tensor<T>(std::move(shape)));
}

template <typename T>
int add_ones(ParamStore<T>& ps, const std::string& name, int n) {
  return ps.add(name, Tensor<T>::full({n}, T(1)));
}

template <typename T>
ConvIds add_conv(ParamStore<T>& ps, const std::string& prefix, int co, int ci, int f) {
  ConvIds ids;
  ids.w = add_zero(ps, prefix + ".w", {co, ci, f, f});
  ids.b = add_zero(ps, prefix + ".b", {co});
  return ids;
}

template <typename T>
DenseIds add_dense(ParamStore<T>& ps, const std::string& prefix, int m, int n) {
  DenseIds ids;
  ids.w = add_zero(ps, prefix + ".w", {m, n});
  ids.b = add_zero(ps, prefix + ".b", {m});
  return ids;
}

template <typename T>
NormIds add_norm(ParamStore<T>& ps, const std::string& prefix, int c) {
  NormIds ids;
  ids.g = add_ones(ps, prefix + ".g", c);
  ids.b = add_zero(ps, prefix + ".b", {c});
  return ids;
}

template <typename T>
BlockIds add_block(ParamStore<T>& ps, const std::string& prefix, int ci, int co,
                   bool film, int cond_units) {
  BlockIds blk;
  blk.conv1 = add_conv(ps, prefix + ".conv1", co, ci, 3);
  blk.norm1 = add_norm<T>(ps, prefix + ".norm1", co);
  blk.conv2 = add_conv(ps, prefix + ".conv2", co, co, 3);
  blk.norm2 = add_norm<T>(ps, prefix + ".norm2", co);
  blk.has_film = film;
  if (film) {
    blk.film.ws = add_zero(ps, prefix + ".film.ws", {co, cond_units});
    blk.film.bs = add_zero(ps, prefix + ".film.bs", {co});
    blk.film.wt = add_zero(ps, prefix + ".film.wt", {co, cond_units});
    blk.film.bt = add_zero(ps, prefix + ".film.bt", {co});
  }
  return blk;
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& config) {
  config.validate();
  Model<T> m;
  m.config = config;
  ParamStore<T>& ps = m.params;
  ModelLayout& L = m.layout;

  if (config.context_encoder()) {
    const int ef = config.encoder_filters;
    const int widths[4] = {ef, 2 * ef, 4 * ef, 4 * ef};
    int ci = 1;
    int idx = 0;
    for (int stage = 0; stage < 4; ++stage)
      for (int rep = 0; rep < 2; ++rep, ++idx) {
        const std::string p = str_cat("enc.conv", idx);
        L.enc_convs.push_back(add_conv(ps, p, widths[stage], ci, 3));
        L.enc_norms.push_back(add_norm<T>(ps, str_cat("enc.norm", idx), widths[stage]));
        ci = widths[stage];
      }
    L.enc_convs.push_back(add_conv(ps, str_cat("enc.conv", idx), 4 * ef, ci, 1));
    L.enc_norms.push_back(add_norm<T>(ps, str_cat("enc.norm", idx), 4 * ef));
    const CbChain ch = cb_chain(config);
    const int flat = 4 * ef * ch.h[4] * ch.w[4];
    L.enc_dense = add_dense<T>(ps, "enc.dense", config.embed_dim, flat);
  } else {
    L.enc_dense = add_dense<T>(ps, "enc.dense", config.embed_dim, config.spec_bins);
  }
  L.enc_dense_norm = add_norm<T>(ps, "enc.dense_norm", config.embed_dim);

  if (config.recurrent()) {
    const int u = config.cond_units;
    L.lstm_wx = add_zero(ps, "cond.lstm.wx", {4 * u, config.embed_dim});
    L.lstm_wh = add_zero(ps, "cond.lstm.wh", {4 * u, u});
    L.lstm_b = add_zero(ps, "cond.lstm.b", {4 * u});
  } else {
    L.cond_dense = add_dense<T>(ps, "cond.dense", config.cond_units, config.embed_dim);
  }

  for (int i = 0; i < config.depth; ++i) {
    const int ci = i == 0 ? 1 : config.enc_channels(i - 1);
    L.enc.push_back(add_block<T>(ps, str_cat("unet.enc", i), ci, config.enc_channels(i),
                                 config.has_film(config.enc_letter(i)), config.cond_units));
  }
  for (int j = 0; j < config.n_dec(); ++j) {
    const int full = config.base_filters << (config.depth - 1 - j);
    const int half = config.dec_channels(j);
    const std::string p = str_cat("unet.dec", j);
    L.reduce.push_back(add_conv(ps, p + ".reduce", half, full, 1));
    L.dec.push_back(add_block<T>(ps, p, 2 * half, half,
                                 config.has_film(config.dec_letter(j)), config.cond_units));
  }
  L.out = add_conv(ps, "unet.out", 1, config.base_filters, 1);
  return m;
}

template <typename T>
void orthogonal_fill(T* w, int rows, int cols, Rng& rng) {
  check(rows >= 1 && cols >= 1, "orthogonal_fill: empty matrix");
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) a(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  if (rows <= cols) {
    // q is cols x rows with orthonormal columns; its transpose has
    // orthonormal rows.
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) w[int64_t(i) * cols + j] = T(q(j, i));
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) w[int64_t(i) * cols + j] = T(q(i, j));
  }
}

template void orthogonal_fill<float>(float*, int, int, Rng&);
template void orthogonal_fill<double>(double*, int, int, Rng&);

namespace {

template <typename T>
void ortho_param(ParamStore<T>& ps, int pid, Rng& rng) {
  Tensor<T>& v = ps.value(pid);
  const int rows = v.dim(0);
  const int cols = int(v.numel() / rows);
  orthogonal_fill(v.data(), rows, cols, rng);
}

}  // namespace

template <typename T>
void init_params(Model<T>& m, uint64_t seed) {
  Rng rng(seed);
  const ModelLayout& L = m.layout;
  for (const ConvIds& c : L.enc_convs) ortho_param(m.params, c.w, rng);
  ortho_param(m.params, m.layout.enc_dense.w, rng);
  if (m.config.recurrent()) {
    ortho_param(m.params, L.lstm_wx, rng);
    ortho_param(m.params, L.lstm_wh, rng);
  } else {
    ortho_param(m.params, L.cond_dense.w, rng);
  }
  for (const BlockIds& blk : L.enc) {
    ortho_param(m.params, blk.conv1.w, rng);
    ortho_param(m.params, blk.conv2.w, rng);
  }
  for (int j = 0; j < m.config.n_dec(); ++j) {
    ortho_param(m.params, L.reduce[size_t(j)].w, rng);
    ortho_param(m.params, L.dec[size_t(j)].conv1.w, rng);
    ortho_param(m.params, L.dec[size_t(j)].conv2.w, rng);
  }
  ortho_param(m.params, L.out.w, rng);
  // Biases, norm offsets and the FiLM dense layers keep their build-time
  // zeros: conditioning starts as the identity.
}

template Model<float> build_model<float>(const ModelConfig&);
template Model<double> build_model<double>(const ModelConfig&);
template void init_params<float>(Model<float>&, uint64_t);
template void init_params<double>(Model<double>&, uint64_t);

// ---------------------------------------------------------------------------
// Container I/O.

namespace {

json config_to_json(const ModelConfig& c) {
  json j;
  j["encoder_kind"] = to_string(c.encoder_kind);
  j["base_filters"] = c.base_filters;
  j["depth"] = c.depth;
  j["film_blocks"] = c.film_blocks;
  j["input_downscale"] = c.input_downscale;
  j["spec_bins"] = c.spec_bins;
  j["context_frames"] = c.context_frames;
  j["encoder_filters"] = c.encoder_filters;
  j["embed_dim"] = c.embed_dim;
  j["cond_units"] = c.cond_units;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.encoder_kind = encoder_kind_from_string(j.at("encoder_kind").get<std::string>());
  c.base_filters = j.at("base_filters").get<int>();
  c.depth = j.at("depth").get<int>();
  c.film_blocks = j.at("film_blocks").get<std::string>();
  c.input_downscale = j.at("input_downscale").get<int>();
  c.spec_bins = j.at("spec_bins").get<int>();
  c.context_frames = j.at("context_frames").get<int>();
  c.encoder_filters = j.at("encoder_filters").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.cond_units = j.at("cond_units").get<int>();
  return c;
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_all(FILE* f, const void* data, size_t n, const std::string& path) {
  if (std::fwrite(data, 1, n, f) != n) fail<IoError>("short write to ", path);
}

}  // namespace

void save_model(const Model<float>& m, const std::string& path) {
  json meta;
  meta["format"] = "pgtk-model";
  meta["config"] = config_to_json(m.config);
  json tensors = json::array();
  uint64_t offset = 0;
  for (int pid = 0; pid < m.params.count(); ++pid) {
    const Tensor<float>& v = m.params.value(pid);
    json t;
    t["name"] = m.params.name(pid);
    t["shape"] = v.shape();
    t["offset"] = offset;
    tensors.push_back(std::move(t));
    offset += uint64_t(v.numel()) * sizeof(float);
  }
  meta["tensors"] = std::move(tensors);
  if (m.norm_stats.empty()) {
    meta["norm_stats"] = nullptr;
  } else {
    meta["norm_stats"] = {{"mean", m.norm_stats.mean}, {"std", m.norm_stats.std}};
  }
  const std::string meta_str = meta.dump();

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail<IoError>("cannot open ", path, " for writing");
  write_all(f.get(), "PGTK", 4, path);
  const uint32_t version = kModelFormatVersion;
  write_all(f.get(), &version, sizeof(version), path);
  const uint64_t meta_len = meta_str.size();
  write_all(f.get(), &meta_len, sizeof(meta_len), path);
  write_all(f.get(), meta_str.data(), meta_str.size(), path);
  uint64_t h = kFnvOffset;
  for (int pid = 0; pid < m.params.count(); ++pid) {
    const Tensor<float>& v = m.params.value(pid);
    const size_t bytes = size_t(v.numel()) * sizeof(float);
    h = fnv1a(h, v.data(), bytes);
    write_all(f.get(), v.data(), bytes, path);
  }
  write_all(f.get(), &h, sizeof(h), path);
  if (std::fflush(f.get()) != 0) fail<IoError>("flush failed for ", path);
}

Model<float> load_model(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail<IoError>("cannot open ", path);
  std::fseek(f.get(), 0, SEEK_END);
  const long size = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  if (size < 24) fail<IoError>(path, ": too short for a model container");
  std::vector<unsigned char> buf(static_cast<size_t>(size));
  if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
    fail<IoError>("short read from ", path);

  if (std::memcmp(buf.data(), "PGTK", 4) != 0) fail<IoError>(path, ": bad magic");
  uint32_t version = 0;
  std::memcpy(&version, buf.data() + 4, 4);
  if (version != kModelFormatVersion)
    fail<IoError>(path, ": unsupported format version ", version);
  uint64_t meta_len = 0;
  std::memcpy(&meta_len, buf.data() + 8, 8);
  const uint64_t meta_end = 16 + meta_len;
  if (meta_end + 8 > uint64_t(size)) fail<IoError>(path, ": truncated metadata");

  json meta;
  try {
    meta = json::parse(buf.begin() + 16, buf.begin() + long(meta_end));
  } catch (const json::exception& e) {
    fail<IoError>(path, ": metadata is not valid JSON (", e.what(), ")");
  }

  const unsigned char* payload = buf.data() + meta_end;
  const uint64_t payload_len = uint64_t(size) - meta_end - 8;
  uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + size - 8, 8);
  if (fnv1a(kFnvOffset, payload, payload_len) != stored)
    fail<IoError>(path, ": payload checksum mismatch");

  Model<float> m;
  try {
    m = build_model<float>(config_from_json(meta.at("config")));
    std::vector<bool> seen(size_t(m.params.count()), false);
    for (const json& t : meta.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const int pid = m.params.find(name);
      if (pid < 0) fail<IoError>(path, ": unknown tensor '", name, "'");
      if (seen[size_t(pid)]) fail<IoError>(path, ": duplicate tensor '", name, "'");
      seen[size_t(pid)] = true;
      Tensor<float>& v = m.params.value(pid);
      const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
      if (shape != v.shape())
        fail<IoError>(path, ": tensor '", name, "' shape mismatch");
      const uint64_t off = t.at("offset").get<uint64_t>();
      const uint64_t bytes = uint64_t(v.numel()) * sizeof(float);
      if (off + bytes > payload_len)
        fail<IoError>(path, ": tensor '", name, "' exceeds payload");
      std::memcpy(v.data(), payload + off, bytes);
    }
    for (int pid = 0; pid < m.params.count(); ++pid)
      if (!seen[size_t(pid)])
        fail<IoError>(path, ": missing tensor '", m.params.name(pid), "'");
    const json& ns = meta.at("norm_stats");
    if (!ns.is_null()) {
      m.norm_stats.mean = ns.at("mean").get<std::vector<float>>();
      m.norm_stats.std = ns.at("std").get<std::vector<float>>();
      if (m.norm_stats.mean.size() != m.norm_stats.std.size())
        fail<IoError>(path, ": norm stats length mismatch");
    }
  } catch (const json::exception& e) {
    fail<IoError>(path, ": malformed metadata (", e.what(), ")");
  }
  return m;
}

}  // namespace pgtk::model
