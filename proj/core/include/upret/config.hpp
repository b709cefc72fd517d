// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "upret/corpus.hpp"
#include "upret/trainer.hpp"

namespace upret::config {

// Flat key=value run configuration. `seed` seeds both corpus generation and
// training; `out`, `manifest` and `checkpoint` hold file paths.
struct RunConfig {
  data::CorpusSpec corpus;
  train::TrainConfig train;
  std::map<std::string, std::string> paths;
};

const std::vector<std::string>& known_keys();

// Throws ConfigError for unknown keys or unparsable values.
void apply(RunConfig& config, std::string_view key, std::string_view value);

// Lines "key = value"; '#' starts a comment. Throws ConfigError (bad key or
// value) or IoError (unreadable file).
RunConfig parse_text(std::string_view text);
RunConfig parse_file(const std::filesystem::path& path);
// Applies the lines of `text` on top of an existing configuration.
void apply_text(RunConfig& config, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

// Validates every section; ConfigError names the first bad key.
void validate(const RunConfig& config);

// Canonical key=value text of the training keys, one per line, sorted.
std::string to_text(const train::TrainConfig& config);
train::TrainConfig train_config_from_text(std::string_view text);

}  // namespace upret::config
