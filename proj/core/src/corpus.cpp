// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "upret/errors.hpp"
#include "upret/rng.hpp"

namespace upret::data {

namespace {

constexpr char kMagic[4] = {'U', 'P', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;

void normalize(std::span<double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

std::size_t uniform_in(std::size_t lo, std::size_t hi, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(double v) { put(std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4); }
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& buffer() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  std::uint64_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(pos_, std::string("truncated file while reading ") + what);
    }
  }
  std::uint64_t get(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  Tensor matrix(std::size_t rows, std::size_t cols, const char* what) {
    need(rows * cols * 4, what);
    Tensor t(rows, cols);
    for (double& v : t.data()) v = std::bit_cast<float>(static_cast<std::uint32_t>(get(4, what)));
    return t;
  }
  std::string_view peek(std::size_t n) const { return std::string_view(data_).substr(pos_, n); }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void CorpusSpec::validate() const {
  auto bad = [](const char* key, const std::string& what) { throw ConfigError(key, what); };
  if (vocab == 0) bad("vocab", "must be >= 1");
  if (polysemy == 0) bad("polysemy", "must be >= 1");
  if (vocab < polysemy) bad("vocab", "vocabulary smaller than the polysemy factor");
  if (dim == 0) bad("dim", "must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) bad("noise", "must be finite and >= 0");
  if (video_len_min == 0 || video_len_min > video_len_max) bad("video_len_min", "invalid range");
  if (video_len_max > kMaxVideoTokens) bad("video_len_max", "exceeds 64");
  if (text_len_min == 0 || text_len_min > text_len_max) bad("text_len_min", "invalid range");
  if (text_len_max > kMaxTextTokens) bad("text_len_max", "exceeds 32");
  if (text_len_min > video_len_max) {
    bad("text_len_min", "every word needs a frame; exceeds video_len_max");
  }
}

const std::vector<PairedSample>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, {0x636f7270});
  const std::size_t D = spec.dim;

  Tensor concept_emb = standard_normal(spec.vocab, D, rng);
  for (std::size_t c = 0; c < spec.vocab; ++c) normalize(concept_emb.row(c));
  const std::size_t groups = (spec.vocab + spec.polysemy - 1) / spec.polysemy;
  Tensor surface(groups, D);
  for (std::size_t c = 0; c < spec.vocab; ++c) {
    auto dst = surface.row(c / spec.polysemy);
    auto src = concept_emb.row(c);
    for (std::size_t k = 0; k < D; ++k) dst[k] += src[k];
  }
  for (std::size_t g = 0; g < groups; ++g) normalize(surface.row(g));

  std::normal_distribution<double> noise(0.0, 1.0);
  const double noise_std = spec.noise / std::sqrt(static_cast<double>(D));
  auto emit = [&](Tensor& out, std::size_t r, std::span<const double> clean) {
    for (std::size_t k = 0; k < D; ++k) out(r, k) = to_f32(clean[k] + noise_std * noise(rng));
  };

  std::vector<PairedSample> all(spec.pairs);
  const std::size_t text_hi = std::min(spec.text_len_max, spec.video_len_max);
  for (std::size_t p = 0; p < spec.pairs; ++p) {
    PairedSample& s = all[p];
    s.pair_id = p;
    const std::size_t nt = uniform_in(spec.text_len_min, text_hi, rng);
    // Every word gets the same number of frames when the length range allows
    // it, so noise-free videos pool to exactly their caption's direction.
    const std::size_t lo = std::max(spec.video_len_min, nt);
    std::vector<std::size_t> lengths;
    for (std::size_t len = lo; len <= spec.video_len_max; ++len)
      if (len % nt == 0) lengths.push_back(len);
    const std::size_t nv = lengths.empty() ? uniform_in(lo, spec.video_len_max, rng)
                                           : lengths[uniform_in(0, lengths.size() - 1, rng)];
    s.concepts.resize(nt);
    for (auto& c : s.concepts) c = static_cast<std::uint32_t>(uniform_in(0, spec.vocab - 1, rng));

    std::vector<std::size_t> span(nt, nv / nt);
    std::vector<std::size_t> order(nt);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t e = 0; e < nv % nt; ++e) ++span[order[e]];

    s.text = Tensor(nt, D);
    for (std::size_t w = 0; w < nt; ++w) emit(s.text, w, concept_emb.row(s.concepts[w]));
    s.video = Tensor(nv, D);
    std::size_t frame = 0;
    for (std::size_t w = 0; w < nt; ++w)
      for (std::size_t f = 0; f < span[w]; ++f) emit(s.video, frame++, surface.row(s.concepts[w] / spec.polysemy));
  }

  Corpus corpus;
  corpus.dim = D;
  const std::size_t n_test = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(spec.pairs)));
  const std::size_t n_val = n_test;
  const std::size_t n_train = spec.pairs - n_val - n_test;
  auto first = std::make_move_iterator(all.begin());
  corpus.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  corpus.val.assign(first + static_cast<std::ptrdiff_t>(n_train),
                    first + static_cast<std::ptrdiff_t>(n_train + n_val));
  corpus.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val),
                     std::make_move_iterator(all.end()));
  return corpus;
}

void write_features(const std::filesystem::path& path, std::span<const PairedSample> samples,
                    std::size_t dim) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u64(samples.size());
  for (const auto& s : samples) {
    if (s.video.cols() != dim || s.text.cols() != dim) {
      throw ShapeError("write_features", "pair " + std::to_string(s.pair_id) + " has width " +
                                             std::to_string(s.video.cols()) + "/" +
                                             std::to_string(s.text.cols()) + ", file width " +
                                             std::to_string(dim));
    }
    w.u64(s.pair_id);
    w.u32(static_cast<std::uint32_t>(s.video.rows()));
    w.u32(static_cast<std::uint32_t>(s.text.rows()));
    for (double v : s.video.data()) w.f32(v);
    for (double v : s.text.data()) w.f32(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

FeatureFile load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read of '" + path.string() + "' failed");

  Reader r(std::move(bytes));
  r.need(4, "magic");
  if (r.peek(4) != std::string_view(kMagic, 4)) throw FormatError(0, "bad magic, expected UPRF");
  r.skip(4);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError(version_at, "unsupported version " + std::to_string(version));
  }
  FeatureFile file;
  file.dim = r.u32("feature width");
  const std::uint64_t count = r.u64("record count");
  std::vector<PairedSample> samples;
  for (std::uint64_t i = 0; i < count; ++i) {
    PairedSample s;
    s.pair_id = r.u64("pair id");
    const std::size_t nv = r.u32("video length");
    const std::size_t nt = r.u32("text length");
    s.video = r.matrix(nv, file.dim, "video features");
    s.text = r.matrix(nt, file.dim, "text features");
    samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw FormatError(r.offset(), "trailing bytes after last record");
  file.samples = std::move(samples);
  return file;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& [split, file] : manifest) out << split << '=' << file.generic_string() << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError("manifest '" + path.string() + "' line " + std::to_string(lineno) +
                    ": expected split=path");
    }
    std::filesystem::path file = line.substr(eq + 1);
    if (file.is_relative()) file = path.parent_path() / file;
    m[line.substr(0, eq)] = file;
  }
  return m;
}

}  // namespace upret::data
