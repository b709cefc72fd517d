// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "upret/config.hpp"

namespace upret::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kIoError = 3,
  kNumericAbort = 4,
  kIncompatible = 5,
};

// Config-file path plus key=value overrides gathered from flags. Overrides win
// over the file; UPRET_THREADS supplies the default thread count.
struct Settings {
  std::optional<std::string> config_path;
  std::map<std::string, std::string> overrides;
};

config::RunConfig resolve(const Settings& settings);
config::RunConfig resolve(const Settings& settings, config::RunConfig base);

int cmd_generate(const Settings& settings, std::ostream& out, std::ostream& err);

struct TrainArgs {
  Settings settings;
  std::optional<std::string> resume;
};
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);

struct EvaluateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::string direction = "both";  // t2v, v2t or both
};
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

struct SelftestArgs {
  // Replaces the regularization strength used by the Sinkhorn checks; lets a
  // caller confirm that a broken setting is reported.
  std::optional<double> eta;
};
int cmd_selftest(const SelftestArgs& args, std::ostream& out);

}  // namespace upret::cli
