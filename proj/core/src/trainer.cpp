// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#include "upret/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "upret/alignment.hpp"
#include "upret/errors.hpp"
#include "upret/ot.hpp"
#include "upret/parallel.hpp"
#include "upret/rng.hpp"

namespace upret::train {

namespace {

constexpr std::size_t kEvalChunk = 64;
constexpr const char* kModalities[2] = {"video", "text"};

struct Stacked {
  Tensor tokens;
  Segments segments;
};

Stacked stack(std::span<const data::PairedSample* const> batch, bool video, std::size_t dim) {
  std::vector<Tensor> parts;
  std::vector<std::size_t> lengths;
  parts.reserve(batch.size());
  for (const auto* s : batch) {
    const Tensor& t = video ? s->video : s->text;
    if (t.cols() != dim) {
      throw CompatError("pair " + std::to_string(s->pair_id) + " has feature width " +
                        std::to_string(t.cols()) + ", model expects " + std::to_string(dim));
    }
    if (t.rows() == 0) {
      throw std::invalid_argument("pair " + std::to_string(s->pair_id) + " has an empty " +
                                  (video ? "video" : "text") + " sequence");
    }
    parts.push_back(t);
    lengths.push_back(t.rows());
  }
  return {concat_rows(parts), Segments(lengths)};
}

// Per-sample noise sums so that a sample's draws do not depend on how the
// batch is chunked.
Tensor noise_for(const Segments& seg, std::size_t width, std::size_t k, std::uint64_t seed,
                 std::uint64_t modality, std::size_t index_offset) {
  std::vector<Tensor> parts;
  parts.reserve(seg.count());
  for (std::size_t s = 0; s < seg.count(); ++s) {
    Rng rng = make_rng(seed, {modality, index_offset + s});
    parts.push_back(head::draw_noise_sum(seg.length(s), width, k, rng));
  }
  return concat_rows(parts);
}

struct Encoded {
  ad::NodeId normalized;
  ad::NodeId weights;
};

Encoded encode(ParamBinder& params, ad::NodeId tokens, const Segments& seg, std::size_t which,
               const Model& model, const TrainConfig& config, Mode mode, std::uint64_t noise_seed,
               std::size_t index_offset) {
  auto& g = params.graph();
  const std::string prefix = kModalities[which];
  const std::size_t half = model.half();
  const auto x_mu = g.slice_cols(tokens, 0, half);
  ad::NodeId refined = x_mu;
  if (config.k > 0) {
    const auto mu = head::predict_mu(params, x_mu, seg, prefix + ".head", model.head);
    const double kk = static_cast<double>(config.k);
    if (mode == Mode::Inference && config.eval_sampling == EvalSampling::Mean) {
      refined = g.scale(g.add(x_mu, g.scale(mu, kk)), 1.0 / (kk + 1.0));
    } else {
      const auto x_sigma = g.slice_cols(tokens, half, model.dim);
      const auto sigma = head::predict_sigma(params, x_sigma, seg, prefix + ".head", model.head);
      refined = head::sample_refine(
          g, x_mu, mu, sigma, config.k,
          noise_for(seg, half, config.k, noise_seed, which + 1, index_offset));
    }
  }
  return {g.l2_normalize_rows(refined),
          align::token_weights(params, refined, seg, prefix + ".weight")};
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const char* key, const std::string& what) { throw ConfigError(key, what); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad("lr", "must be finite and >= 0");
  if (batch == 0) bad("batch", "must be >= 1");
  if (!(eta > 0.0)) bad("eta", "must be > 0");
  if (sinkhorn_iters == 0) bad("sinkhorn_iters", "must be >= 1");
  if (!(sinkhorn_tol > 0.0)) bad("sinkhorn_tol", "must be > 0");
  if (!std::isfinite(lambda_ot)) bad("lambda_ot", "must be finite");
  if (!std::isfinite(lambda_d)) bad("lambda_d", "must be finite");
  if (!(tau > 0.0)) bad("tau", "must be > 0");
  if (threads == 0) bad("threads", "must be >= 1");
  if (heads == 0) bad("heads", "must be >= 1");
  if (!(sigma_floor >= 0.0)) bad("sigma_floor", "must be >= 0");
  if (!std::isfinite(sigma_init)) bad("sigma_init", "must be finite");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) bad("adam_eps", "must be > 0");
}

Model Model::initialize(std::size_t dim, const TrainConfig& config) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("dim", "feature width must be even and positive");
  Model m;
  m.dim = dim;
  m.head.half_width = dim / 2;
  m.head.heads = config.heads;
  m.head.sigma_floor = config.sigma_floor;
  if (m.head.half_width % m.head.heads != 0) {
    throw ConfigError("heads", "half width " + std::to_string(dim / 2) + " not divisible by " +
                                   std::to_string(config.heads) + " heads");
  }
  Rng rng = make_rng(config.seed, {0x696e6974});
  for (const char* modality : kModalities) {
    const std::string p = modality;
    head::init_head_params(m.params, p + ".head", m.head, rng, config.sigma_init);
    align::init_token_weight_params(m.params, p + ".weight", m.half(), rng);
  }
  return m;
}

std::uint64_t architecture_hash(const Model& model) {
  std::ostringstream os;
  os << "dim=" << model.dim << ";heads=" << model.head.heads << ";hidden=" << model.head.hidden()
     << ";sigma_floor=" << model.head.sigma_floor << ";";
  for (const auto& [name, t] : model.params) os << name << shape_string(t.shape()) << ";";
  return fnv1a(os.str());
}

BatchGraph build_batch(const Model& model, const TrainConfig& config,
                       std::span<const data::PairedSample* const> batch, Mode mode,
                       std::uint64_t noise_seed) {
  if (batch.empty()) throw std::invalid_argument("build_batch: empty batch");
  BatchGraph bg;
  auto& g = bg.graph;
  Stacked video = stack(batch, true, model.dim);
  Stacked text = stack(batch, false, model.dim);
  bg.video_segments = video.segments;
  bg.text_segments = text.segments;

  ParamBinder params(g, model.params);
  const auto v_in = g.input("video.tokens", std::move(video.tokens));
  const auto t_in = g.input("text.tokens", std::move(text.tokens));
  const Encoded ev = encode(params, v_in, bg.video_segments, 0, model, config, mode, noise_seed, 0);
  const Encoded et = encode(params, t_in, bg.text_segments, 1, model, config, mode, noise_seed, 0);

  const auto alignment = g.matmul(ev.normalized, g.transpose(et.normalized));
  const auto token_max = align::token_max_similarity(g, alignment, bg.video_segments,
                                                     bg.text_segments, ev.weights, et.weights);
  bg.similarity = token_max;
  g.mark_output("similarity", token_max);
  if (mode == Mode::Inference) return bg;

  if (config.uses_ot()) {
    const Tensor& a = g.value(alignment);
    if (!a.all_finite()) throw NumericError("non-finite token alignment; parameters have diverged");
    Tensor plans(a.rows(), a.cols());
    const std::size_t B = batch.size();
    const auto& sv = bg.video_segments;
    const auto& st = bg.text_segments;
    std::vector<unsigned char> failed(B * B, 0);
    const ot::SinkhornOptions opts{config.eta, config.sinkhorn_iters, config.sinkhorn_tol};
    parallel_for(B * B, config.threads, [&](std::size_t pair) {
      const std::size_t i = pair / B, j = pair % B;
      Tensor block(sv.length(i), st.length(j));
      for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c)
          block(r, c) = a(sv.begin(i) + r, st.begin(j) + c);
      const auto plan = ot::sinkhorn(ot::cost_from_alignment(block),
                                     ot::Marginals::uniform(block.rows(), block.cols()), opts);
      failed[pair] = !plan.converged;
      for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c)
          plans(sv.begin(i) + r, st.begin(j) + c) = plan.values(r, c);
    });
    bg.sinkhorn_failures = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
    const auto ot_sim = align::plan_weighted_similarity(g, alignment, g.constant(std::move(plans)),
                                                        sv, st);
    bg.ot_similarity = ot_sim;
    bg.has_ot = true;
    g.mark_output("ot_similarity", ot_sim);
    bg.similarity = g.add(token_max, g.scale(ot_sim, config.lambda_ot));
    g.mark_output("similarity", bg.similarity);
  }

  bg.loss_s = align::contrastive_loss(g, bg.similarity, config.tau);
  bg.loss = bg.loss_s;
  if (bg.has_ot) {
    bg.loss_d = align::contrastive_loss(g, bg.ot_similarity, config.tau);
    if (config.lambda_d != 0.0) bg.loss = g.add(bg.loss_s, g.scale(bg.loss_d, config.lambda_d));
  }
  g.mark_output("loss", bg.loss);
  return bg;
}

std::string format_epoch_log(const EpochLog& log) {
  std::ostringstream os;
  os.precision(17);
  os << log.epoch << '\t' << log.loss_s << '\t' << log.loss_d << '\t' << log.val_r1_t2v << '\t'
     << log.val_r1_v2t;
  return os.str();
}

void adam_update(ParamStore& params, AdamState& state, const std::map<std::string, Tensor>& grads,
                 const TrainConfig& config) {
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    Tensor& m = state.m[name];
    Tensor& v = state.v[name];
    if (m.rank() == 0) m = Tensor(p.rows(), p.cols());
    if (v.rank() == 0) v = Tensor(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      p[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
    }
  }
}

Trainer::Trainer(TrainConfig config, std::size_t dim)
    : config_(std::move(config)), model_(Model::initialize(dim, config_)) {
  config_.validate();
}

Trainer::Trainer(Checkpoint checkpoint)
    : config_(std::move(checkpoint.config)),
      model_(std::move(checkpoint.model)),
      adam_(std::move(checkpoint.adam)),
      step_(checkpoint.step) {
  config_.validate();
  if (checkpoint.config_hash != architecture_hash(model_)) {
    throw CompatError("checkpoint config hash does not match its parameters");
  }
}

StepStats Trainer::step(std::span<const data::PairedSample* const> batch) {
  const std::uint64_t noise_seed = derive_seed(config_.seed, {0x73746570, step_});
  BatchGraph bg = build_batch(model_, config_, batch, Mode::Train, noise_seed);
  StepStats stats;
  stats.loss = bg.graph.value(bg.loss).item();
  stats.loss_s = bg.graph.value(bg.loss_s).item();
  stats.loss_d = bg.has_ot ? bg.graph.value(bg.loss_d).item() : 0.0;
  stats.sinkhorn_failures = bg.sinkhorn_failures;
  if (!std::isfinite(stats.loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(step_));
  }
  const auto grads = bg.graph.backward(bg.loss);
  adam_update(model_.params, adam_, grads, config_);
  ++step_;
  return stats;
}

std::vector<EpochLog> Trainer::train(
    const std::vector<data::PairedSample>& train_split,
    const std::vector<data::PairedSample>& val_split,
    const std::function<void(const EpochLog&, const Trainer&)>& on_epoch) {
  const std::size_t n = train_split.size();
  if (n == 0) throw std::invalid_argument("train: empty training split");
  const std::size_t per_epoch = (n + config_.batch - 1) / config_.batch;
  const std::uint64_t total = static_cast<std::uint64_t>(per_epoch) * config_.epochs;
  std::vector<EpochLog> logs;
  while (step_ < total) {
    const std::size_t epoch = static_cast<std::size_t>(step_ / per_epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(config_.seed, {0x73687566, epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch + 1;
    std::size_t steps = 0;
    for (std::size_t b = static_cast<std::size_t>(step_ % per_epoch); b < per_epoch; ++b) {
      std::vector<const data::PairedSample*> batch;
      for (std::size_t i = b * config_.batch; i < std::min(n, (b + 1) * config_.batch); ++i)
        batch.push_back(&train_split[order[i]]);
      const StepStats s = step(batch);
      log.loss_s += s.loss_s;
      log.loss_d += s.loss_d;
      log.sinkhorn_failures += s.sinkhorn_failures;
      ++steps;
    }
    log.loss_s /= static_cast<double>(steps);
    log.loss_d /= static_cast<double>(steps);
    if (!val_split.empty()) {
      const Tensor s = transpose(similarity_matrix(model_, config_, val_split));
      log.val_r1_t2v = eval::evaluate(s, eval::Direction::T2V).r1;
      log.val_r1_v2t = eval::evaluate(s, eval::Direction::V2T).r1;
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log, *this);
  }
  return logs;
}

Checkpoint Trainer::checkpoint() const {
  return {config_, model_, adam_, step_, architecture_hash(model_)};
}

Tensor similarity_matrix(const Model& model, const TrainConfig& config,
                         const std::vector<data::PairedSample>& samples) {
  const std::size_t n = samples.size();
  // Encode per chunk; per-sample noise streams make this chunking-invariant.
  struct Chunk {
    Tensor normalized, weights;
    Segments segments;
  };
  std::vector<Chunk> video_chunks, text_chunks;
  for (std::size_t lo = 0; lo < n; lo += kEvalChunk) {
    const std::size_t hi = std::min(n, lo + kEvalChunk);
    std::vector<const data::PairedSample*> ptrs;
    for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&samples[i]);
    for (std::size_t which = 0; which < 2; ++which) {
      Stacked st = stack(ptrs, which == 0, model.dim);
      ad::Graph g;
      ParamBinder params(g, model.params);
      const auto in = g.input("tokens", std::move(st.tokens));
      const Encoded e = encode(params, in, st.segments, which, model, config, Mode::Inference,
                               config.eval_seed, lo);
      (which == 0 ? video_chunks : text_chunks)
          .push_back({g.value(e.normalized), g.value(e.weights), st.segments});
    }
  }
  Tensor s(n, n);
  for (std::size_t vi = 0; vi < video_chunks.size(); ++vi)
    for (std::size_t ti = 0; ti < text_chunks.size(); ++ti) {
      const Chunk& v = video_chunks[vi];
      const Chunk& t = text_chunks[ti];
      ad::Graph g;
      const auto a = g.matmul(g.constant(v.normalized), g.transpose(g.constant(t.normalized)));
      const auto sim = align::token_max_similarity(g, a, v.segments, t.segments,
                                                   g.constant(v.weights), g.constant(t.weights));
      const Tensor& block = g.value(sim);
      for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c)
          s(vi * kEvalChunk + r, ti * kEvalChunk + c) = block(r, c);
    }
  return s;
}

std::pair<eval::RetrievalReport, eval::RetrievalReport> evaluate(
    const Checkpoint& checkpoint, const std::vector<data::PairedSample>& samples) {
  if (checkpoint.config_hash != architecture_hash(checkpoint.model)) {
    throw CompatError("checkpoint config hash does not match its parameters");
  }
  if (samples.empty()) throw std::invalid_argument("evaluate: empty split");
  const Tensor s = transpose(similarity_matrix(checkpoint.model, checkpoint.config, samples));
  return {eval::evaluate(s, eval::Direction::T2V), eval::evaluate(s, eval::Direction::V2T)};
}

}  // namespace upret::train
