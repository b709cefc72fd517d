// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "upret/errors.hpp"

using namespace upret::cli;

namespace {

// Flags that map one-to-one onto configuration keys.
struct KeyFlag {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr KeyFlag kTrainFlags[] = {
    {"--seed", "seed", "seed for corpus generation and training"},
    {"--k", "k", "Monte Carlo draws per token (0 disables the distribution heads)"},
    {"--eta", "eta", "entropic regularization of the Sinkhorn solver"},
    {"--lambda-ot", "lambda_ot", "weight of the transport similarity in S"},
    {"--lambda-d", "lambda_d", "weight of the transport contrastive loss"},
    {"--tau", "tau", "contrastive temperature"},
    {"--lr", "lr", "Adam learning rate"},
    {"--batch", "batch", "pairs per batch"},
    {"--epochs", "epochs", "training epochs"},
    {"--threads", "threads", "worker threads (default: UPRET_THREADS or 1)"},
};

class Overrides {
 public:
  void add(CLI::App* app, const char* flag, const char* key, const char* help) {
    auto& slot = values_[key];
    options_.emplace_back(app->add_option(flag, slot, help), key);
  }
  void add_paths(CLI::App* app, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
      const std::string flag = std::string("--") + key;
      auto& slot = values_[key];
      options_.emplace_back(app->add_option(flag, slot, std::string(key) + " path"), key);
    }
  }
  void add_generic(CLI::App* app) {
    app->add_option("--set", generic_, "extra key=value setting, repeatable");
  }
  void collect(Settings& s) const {
    for (const auto& [opt, key] : options_)
      if (opt->count() > 0) s.overrides[key] = values_.at(key);
    for (const auto& kv : generic_) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw upret::ConfigError(kv, "expected key=value after --set");
      s.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<CLI::Option*, std::string>> options_;
  std::vector<std::string> generic_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"upret: uncertainty-aware cross-modal retrieval on token features"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  Settings gen_settings;
  Overrides gen_flags;
  auto* gen = app.add_subcommand("generate", "write a synthetic paired corpus and its manifest");
  gen->add_option("--config", gen_settings.config_path, "key=value config file");
  gen_flags.add(gen, "--seed", "seed", "corpus seed");
  gen_flags.add_paths(gen, {"out"});
  gen_flags.add_generic(gen);

  TrainArgs train_args;
  Overrides train_flags;
  auto* tr = app.add_subcommand("train", "train the heads on a corpus manifest");
  tr->add_option("--config", train_args.settings.config_path, "key=value config file");
  for (const auto& f : kTrainFlags) train_flags.add(tr, f.flag, f.key, f.help);
  train_flags.add_paths(tr, {"manifest", "out"});
  train_flags.add_generic(tr);
  tr->add_option("--resume", train_args.resume, "checkpoint to continue from");

  EvaluateArgs eval_args;
  auto* ev = app.add_subcommand("evaluate", "report retrieval metrics of a checkpoint");
  ev->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  ev->add_option("--manifest", eval_args.manifest, "corpus manifest")->required();
  ev->add_option("--split", eval_args.split, "split to evaluate")->capture_default_str();
  ev->add_option("--direction", eval_args.direction, "t2v, v2t or both")->capture_default_str();

  SelftestArgs self_args;
  auto* st = app.add_subcommand("selftest", "run the built-in oracle checks");
  st->add_option("--eta", self_args.eta, "override the Sinkhorn regularization used by the checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) {
      gen_flags.collect(gen_settings);
      return cmd_generate(gen_settings, std::cout, std::cerr);
    }
    if (tr->parsed()) {
      train_flags.collect(train_args.settings);
      return cmd_train(train_args, std::cout, std::cerr);
    }
    if (ev->parsed()) return cmd_evaluate(eval_args, std::cout, std::cerr);
    if (st->parsed()) return cmd_selftest(self_args, std::cout);
  } catch (const upret::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const upret::CompatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIncompatible;
  } catch (const upret::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const upret::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const upret::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kOk;
}
