// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <vector>

#include "upret/corpus.hpp"
#include "upret/errors.hpp"
#include "upret/parallel.hpp"
#include "upret/retrieval.hpp"
#include "upret/trainer.hpp"

namespace fs = std::filesystem;

namespace upret::cli {

namespace {

constexpr const char* kSplits[] = {"train", "val", "test"};

std::string require_path(const config::RunConfig& c, const std::string& key) {
  const auto it = c.paths.find(key);
  if (it == c.paths.end() || it->second.empty()) throw ConfigError(key, "a path is required");
  return it->second;
}

data::FeatureFile load_split(const data::Manifest& manifest, const std::string& split, bool required) {
  const auto it = manifest.find(split);
  if (it == manifest.end()) {
    if (required) throw IoError("manifest has no '" + split + "' split");
    return {};
  }
  return data::load_features(it->second);
}

void print_report(std::ostream& out, const eval::RetrievalReport& r) {
  out << (r.direction == eval::Direction::T2V ? "T2V" : "V2T") << " (" << r.queries << " queries)\n"
      << std::fixed << std::setprecision(2) << "  R@1   " << r.r1 << "\n  R@5   " << r.r5
      << "\n  R@10  " << r.r10 << "\n  MedR  " << r.medr << "\n  MnR   " << r.mnr << "\n"
      << std::defaultfloat << std::setprecision(6);
}

std::map<std::string, std::string> text_map(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    const auto eq = line.find('=');
    kv[line.substr(0, eq)] = line.substr(eq + 1);
    pos = nl == std::string::npos ? text.size() : nl + 1;
  }
  return kv;
}

}  // namespace

config::RunConfig resolve(const Settings& settings) {
  config::RunConfig c;
  c.train.threads = default_threads();
  return resolve(settings, c);
}

config::RunConfig resolve(const Settings& settings, config::RunConfig c) {
  if (settings.config_path) config::apply_text(c, config::read_text_file(*settings.config_path));
  for (const auto& [key, value] : settings.overrides) config::apply(c, key, value);
  config::validate(c);
  return c;
}

int cmd_generate(const Settings& settings, std::ostream& out, std::ostream&) {
  const config::RunConfig c = resolve(settings);
  const fs::path dir = require_path(c, "out");

  const data::Corpus corpus = data::generate_corpus(c.corpus);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  data::Manifest manifest;
  for (const char* split : kSplits) {
    const std::string file = std::string(split) + ".uprf";
    data::write_features(dir / file, corpus.split(split), corpus.dim);
    manifest[split] = file;
  }
  data::write_manifest(dir / "manifest.txt", manifest);

  out << "corpus written to " << dir.string() << "\n"
      << "  pairs     " << c.corpus.pairs << " (train " << corpus.train.size() << ", val "
      << corpus.val.size() << ", test " << corpus.test.size() << ")\n"
      << "  dim       " << corpus.dim << "\n"
      << "  vocab     " << c.corpus.vocab << "\n"
      << "  polysemy  " << c.corpus.polysemy << "\n"
      << "  noise     " << c.corpus.noise << "\n"
      << "  seed      " << c.corpus.seed << "\n"
      << "  manifest  " << (dir / "manifest.txt").string() << "\n";
  return kOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  config::RunConfig c = resolve(args.settings);
  const fs::path dir = require_path(c, "out");
  const data::Manifest manifest = data::read_manifest(require_path(c, "manifest"));
  const data::FeatureFile train_split = load_split(manifest, "train", true);
  const data::FeatureFile val_split = load_split(manifest, "val", false);
  if (train_split.samples.empty()) throw IoError("training split is empty");
  if (!val_split.samples.empty() && val_split.dim != train_split.dim) {
    throw CompatError("val split width " + std::to_string(val_split.dim) + " differs from train width " +
                      std::to_string(train_split.dim));
  }

  std::optional<train::Trainer> trainer;
  if (args.resume) {
    train::Checkpoint ck = train::load_checkpoint(*args.resume);
    // Settings are applied on top of the saved run; only the budget and the
    // worker layout may change, anything else would break continuity.
    config::RunConfig base;
    base.train = ck.config;
    const config::RunConfig resumed = resolve(args.settings, base);
    const auto saved = text_map(config::to_text(ck.config));
    for (const auto& [key, value] : text_map(config::to_text(resumed.train))) {
      if (key == "epochs" || key == "threads" || key == "checkpoint_interval") continue;
      if (saved.at(key) != value) throw ConfigError(key, "differs from the checkpoint being resumed");
    }
    c.train = resumed.train;
    ck.config = resumed.train;
    if (ck.model.dim != train_split.dim) {
      throw CompatError("checkpoint width " + std::to_string(ck.model.dim) + " differs from corpus width " +
                        std::to_string(train_split.dim));
    }
    trainer.emplace(std::move(ck));
    out << "resuming at step " << trainer->steps_done() << "\n";
  } else {
    trainer.emplace(c.train, train_split.dim);
  }
  if (c.train.batch == 1) {
    err << "warning: batch=1 makes both contrastive losses identically zero\n";
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const fs::path log_path = dir / "metrics.tsv";
  const fs::path ck_path = dir / "checkpoint.uprc";
  std::ofstream log(log_path, args.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open '" + log_path.string() + "'");

  const std::size_t interval = c.train.checkpoint_interval;
  try {
    trainer->train(train_split.samples, val_split.samples,
                   [&](const train::EpochLog& e, const train::Trainer& t) {
                     const std::string line = train::format_epoch_log(e);
                     log << line << "\n" << std::flush;
                     out << line << "\n" << std::flush;
                     if (e.sinkhorn_failures > 0) {
                       err << "warning: epoch " << e.epoch << ": " << e.sinkhorn_failures
                           << " Sinkhorn solves stopped before reaching tolerance\n";
                     }
                     if (interval > 0 && e.epoch % interval == 0) train::save_checkpoint(ck_path, t.checkpoint());
                   });
  } catch (const NumericError& e) {
    train::save_checkpoint(ck_path, trainer->checkpoint());
    err << "error: " << e.what() << "; last good state saved to " << ck_path.string() << "\n";
    return kNumericAbort;
  }
  train::save_checkpoint(ck_path, trainer->checkpoint());
  out << "checkpoint written to " << ck_path.string() << "\n";
  return kOk;
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream&) {
  if (args.direction != "t2v" && args.direction != "v2t" && args.direction != "both") {
    throw ConfigError("direction", "expected t2v, v2t or both");
  }
  const train::Checkpoint ck = train::load_checkpoint(args.checkpoint);
  const data::Manifest manifest = data::read_manifest(args.manifest);
  const data::FeatureFile split = load_split(manifest, args.split, true);
  if (split.samples.empty()) throw IoError("split '" + args.split + "' is empty");
  if (split.dim != ck.model.dim) {
    throw CompatError("corpus width " + std::to_string(split.dim) + " does not match checkpoint width " +
                      std::to_string(ck.model.dim));
  }
  const auto [t2v, v2t] = train::evaluate(ck, split.samples);
  const bool want_t2v = args.direction != "v2t", want_v2t = args.direction != "t2v";
  out << "split " << args.split << ", step " << ck.step << "\n";
  if (want_t2v) print_report(out, t2v);
  if (want_v2t) print_report(out, v2t);
  if (want_t2v) out << eval::to_key_values(t2v);
  if (want_v2t) out << eval::to_key_values(v2t);
  return kOk;
}

}  // namespace upret::cli
