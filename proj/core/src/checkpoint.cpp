// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "upret/config.hpp"
#include "upret/errors.hpp"
#include "upret/trainer.hpp"

namespace upret::train {

namespace {

constexpr char kMagic[4] = {'U', 'P', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void tensor(const Tensor& t) {
    pod<std::uint64_t>(t.rows());
    pod<std::uint64_t>(t.cols());
    buf_.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
  }
  void store(const ParamStore& s) {
    pod<std::uint64_t>(s.size());
    for (const auto& [name, t] : s) {
      str(name);
      tensor(t);
    }
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const auto r = pod<std::uint64_t>();
    const auto c = pod<std::uint64_t>();
    if (c != 0 && r > (buf_.size() - pos_) / sizeof(double) / c) {
      throw FormatError(pos_, "tensor payload exceeds file size");
    }
    Tensor t(r, c);
    need(t.size() * sizeof(double));
    std::memcpy(t.data().data(), buf_.data() + pos_, t.size() * sizeof(double));
    pos_ += t.size() * sizeof(double);
    return t;
  }
  ParamStore store() {
    ParamStore s;
    const auto n = pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = str();
      s[std::move(name)] = tensor();
    }
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError(pos_, "truncated checkpoint");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kVersion);
  w.pod<std::uint64_t>(ck.config_hash);
  w.str(config::to_text(ck.config));
  w.pod<std::uint64_t>(ck.step);
  w.pod<std::uint64_t>(ck.config.seed);
  w.pod<std::uint64_t>(ck.model.dim);
  w.store(ck.model.params);
  w.pod<std::uint64_t>(ck.adam.t);
  w.store(ck.adam.m);
  w.store(ck.adam.v);

  // Write to a sibling file and rename, so an interrupted save never leaves a
  // half-written checkpoint behind.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename checkpoint into '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());

  for (char c : kMagic) {
    if (r.pod<char>() != c) throw FormatError(0, "not a checkpoint (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError(4, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_hash = r.pod<std::uint64_t>();
  ck.config = config::train_config_from_text(r.str());
  ck.step = r.pod<std::uint64_t>();
  ck.config.seed = r.pod<std::uint64_t>();
  const auto dim = r.pod<std::uint64_t>();
  ck.model.dim = dim;
  ck.model.head.half_width = dim / 2;
  ck.model.head.heads = ck.config.heads;
  ck.model.head.sigma_floor = ck.config.sigma_floor;
  ck.model.params = r.store();
  ck.adam.t = r.pod<std::uint64_t>();
  ck.adam.m = r.store();
  ck.adam.v = r.store();
  if (!r.done()) throw FormatError(r.pos(), "trailing bytes after checkpoint");
  if (architecture_hash(ck.model) != ck.config_hash) {
    throw CompatError("checkpoint '" + path.string() + "' parameters do not match its config hash");
  }
  return ck;
}

}  // namespace upret::train
