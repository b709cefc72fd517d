// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "upret/tensor.hpp"

namespace upret::data {

inline constexpr std::size_t kMaxVideoTokens = 64;
inline constexpr std::size_t kMaxTextTokens = 32;

// Parameters of the synthetic paired-feature generator.
struct CorpusSpec {
  std::size_t pairs = 2000;
  std::size_t vocab = 50;
  std::size_t video_len_min = 6;
  std::size_t video_len_max = 16;
  std::size_t text_len_min = 3;
  std::size_t text_len_max = 8;
  std::size_t dim = 32;
  // Number of concepts that share one video-surface embedding.
  std::size_t polysemy = 3;
  // Noise relative to the unit-norm clean embeddings: each coordinate gets
  // i.i.d. Gaussian noise with std noise / sqrt(dim), so the expected squared
  // noise norm is noise^2.
  double noise = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PairedSample {
  std::uint64_t pair_id = 0;
  Tensor video;  // N_v x D
  Tensor text;   // N_t x D
  // Concept behind each text token; generator-only diagnostics, not stored
  // in feature files.
  std::vector<std::uint32_t> concepts;
};

struct Corpus {
  std::size_t dim = 0;
  std::vector<PairedSample> train, val, test;

  const std::vector<PairedSample>& split(const std::string& name) const;
};

// Every pair is built from a latent concept sequence. Text tokens embed each
// concept directly; video frames show the concept's group surface, the
// normalized sum of the embeddings of the `polysemy` concepts in its group,
// so distinct concepts look identical on the video side. Each concept spans
// consecutive frames, the same number per concept whenever the video length
// range has a multiple of the caption length. All values are representable in float32.
// Splits are 80/10/10 in generation order.
Corpus generate_corpus(const CorpusSpec& spec);

// Binary feature files, little-endian:
//   "UPRF" u32 version=1 u32 D u64 count
//   per record: u64 pair_id u32 N_v u32 N_t f32[N_v*D] video f32[N_t*D] text
void write_features(const std::filesystem::path& path, std::span<const PairedSample> samples,
                    std::size_t dim);

struct FeatureFile {
  std::size_t dim = 0;
  std::vector<PairedSample> samples;
};

// Throws FormatError (with the failing byte offset) on bad magic, version,
// truncation or trailing bytes, IoError if the file cannot be read.
FeatureFile load_features(const std::filesystem::path& path);

// Plain-text "split=path" lines; relative paths resolve against the manifest's
// directory.
using Manifest = std::map<std::string, std::filesystem::path>;
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace upret::data
