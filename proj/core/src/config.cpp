// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "upret/errors.hpp"

namespace upret::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

using Setter = void (*)(RunConfig&, std::string_view key, std::string_view value);

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"pairs", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.pairs = parse_uint(k, v); }},
      {"vocab", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.vocab = parse_uint(k, v); }},
      {"video_len_min", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.video_len_min = parse_uint(k, v); }},
      {"video_len_max", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.video_len_max = parse_uint(k, v); }},
      {"text_len_min", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.text_len_min = parse_uint(k, v); }},
      {"text_len_max", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.text_len_max = parse_uint(k, v); }},
      {"dim", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.dim = parse_uint(k, v); }},
      {"polysemy", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.polysemy = parse_uint(k, v); }},
      {"noise", [](RunConfig& c, std::string_view k, std::string_view v) { c.corpus.noise = parse_double(k, v); }},
      {"seed",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         c.corpus.seed = parse_uint(k, v);
         c.train.seed = c.corpus.seed;
       }},
      {"lr", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.lr = parse_double(k, v); }},
      {"batch", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.batch = parse_uint(k, v); }},
      {"epochs", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.epochs = parse_uint(k, v); }},
      {"k", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.k = parse_uint(k, v); }},
      {"eta", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.eta = parse_double(k, v); }},
      {"sinkhorn_iters", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.sinkhorn_iters = parse_uint(k, v); }},
      {"sinkhorn_tol", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.sinkhorn_tol = parse_double(k, v); }},
      {"lambda_ot", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.lambda_ot = parse_double(k, v); }},
      {"lambda_d", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.lambda_d = parse_double(k, v); }},
      {"tau", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.tau = parse_double(k, v); }},
      {"threads", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.threads = parse_uint(k, v); }},
      {"checkpoint_interval",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.train.checkpoint_interval = parse_uint(k, v); }},
      {"heads", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.heads = parse_uint(k, v); }},
      {"sigma_floor", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.sigma_floor = parse_double(k, v); }},
      {"sigma_init", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.sigma_init = parse_double(k, v); }},
      {"eval_sampling",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "sample") {
           c.train.eval_sampling = train::EvalSampling::Sample;
         } else if (v == "mean") {
           c.train.eval_sampling = train::EvalSampling::Mean;
         } else {
           throw ConfigError(std::string(k), "expected 'sample' or 'mean'");
         }
       }},
      {"eval_seed", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.eval_seed = parse_uint(k, v); }},
      {"beta1", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.beta1 = parse_double(k, v); }},
      {"beta2", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.beta2 = parse_double(k, v); }},
      {"adam_eps", [](RunConfig& c, std::string_view k, std::string_view v) { c.train.adam_eps = parse_double(k, v); }},
      {"out", [](RunConfig& c, std::string_view, std::string_view v) { c.paths["out"] = std::string(v); }},
      {"manifest", [](RunConfig& c, std::string_view, std::string_view v) { c.paths["manifest"] = std::string(v); }},
      {"checkpoint", [](RunConfig& c, std::string_view, std::string_view v) { c.paths["checkpoint"] = std::string(v); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, fn] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply(RunConfig& config, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError(std::string(key), "unknown key");
  it->second(config, key, value);
}

RunConfig parse_text(std::string_view text) {
  RunConfig config;
  apply_text(config, text);
  return config;
}

void apply_text(RunConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(t, "expected key=value");
    apply(config, trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig parse_file(const std::filesystem::path& path) { return parse_text(read_text_file(path)); }

void validate(const RunConfig& config) {
  config.corpus.validate();
  config.train.validate();
}

std::string to_text(const train::TrainConfig& c) {
  std::map<std::string, std::string> kv = {
      {"lr", format_double(c.lr)},
      {"batch", std::to_string(c.batch)},
      {"epochs", std::to_string(c.epochs)},
      {"k", std::to_string(c.k)},
      {"eta", format_double(c.eta)},
      {"sinkhorn_iters", std::to_string(c.sinkhorn_iters)},
      {"sinkhorn_tol", format_double(c.sinkhorn_tol)},
      {"lambda_ot", format_double(c.lambda_ot)},
      {"lambda_d", format_double(c.lambda_d)},
      {"tau", format_double(c.tau)},
      {"seed", std::to_string(c.seed)},
      {"threads", std::to_string(c.threads)},
      {"checkpoint_interval", std::to_string(c.checkpoint_interval)},
      {"heads", std::to_string(c.heads)},
      {"sigma_floor", format_double(c.sigma_floor)},
      {"sigma_init", format_double(c.sigma_init)},
      {"eval_sampling", c.eval_sampling == train::EvalSampling::Sample ? "sample" : "mean"},
      {"eval_seed", std::to_string(c.eval_seed)},
      {"beta1", format_double(c.beta1)},
      {"beta2", format_double(c.beta2)},
      {"adam_eps", format_double(c.adam_eps)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

train::TrainConfig train_config_from_text(std::string_view text) {
  return parse_text(text).train;
}

}  // namespace upret::config
