// Copyright 2026 upret contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "upret/autodiff.hpp"
#include "upret/corpus.hpp"
#include "upret/dist_head.hpp"
#include "upret/layers.hpp"
#include "upret/retrieval.hpp"

namespace upret::train {

// How evaluation handles the stochastic refinement: draw K samples from a
// fixed eval seed, or use the expected refinement (x + K mu) / (K + 1).
enum class EvalSampling { Sample, Mean };

struct TrainConfig {
  double lr = 1e-5;
  std::size_t batch = 64;
  std::size_t epochs = 30;
  std::size_t k = 2;
  double eta = 0.1;
  std::size_t sinkhorn_iters = 100;
  double sinkhorn_tol = 1e-6;
  double lambda_ot = 1.0;
  double lambda_d = 1.0;
  double tau = 0.07;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Save a checkpoint every N epochs (0: only at the end).
  std::size_t checkpoint_interval = 0;

  std::size_t heads = 8;
  double sigma_floor = 1e-4;
  // Initial pre-softplus bias of the sigma MLP output.
  double sigma_init = -4.0;
  EvalSampling eval_sampling = EvalSampling::Sample;
  std::uint64_t eval_seed = 0;

  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;

  // Throws ConfigError naming the offending key.
  void validate() const;
  // True when either transport term takes part in training.
  bool uses_ot() const noexcept { return lambda_ot != 0.0 || lambda_d != 0.0; }
};

// Trainable state of both modalities: distribution heads under
// "<modality>.head" and token-weight MLPs under "<modality>.weight", with
// modality in {video, text}.
struct Model {
  std::size_t dim = 0;
  head::HeadConfig head;
  ParamStore params;

  static Model initialize(std::size_t dim, const TrainConfig& config);
  std::size_t half() const noexcept { return dim / 2; }
};

// Hash of everything that fixes parameter shapes (feature width, head
// geometry, sigma floor).
std::uint64_t architecture_hash(const Model& model);

struct AdamState {
  ParamStore m, v;
  std::uint64_t t = 0;
};

struct Checkpoint {
  TrainConfig config;
  Model model;
  AdamState adam;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
};

// Versioned binary: "UPRC" u32 version, u64 config hash, config text, u64
// step, u64 seed, model width, parameters (name + f64 blob), Adam moments.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

enum class Mode { Train, Inference };

// One batch of pairs laid out as stacked token matrices.
struct BatchGraph {
  ad::Graph graph;
  Segments video_segments, text_segments;
  ad::NodeId similarity = 0;  // B x B, rows video, cols text
  ad::NodeId ot_similarity = 0;  // valid when has_ot
  bool has_ot = false;
  ad::NodeId loss_s = 0, loss_d = 0, loss = 0;  // train mode only
  std::size_t sinkhorn_failures = 0;
};

// Builds and evaluates the full per-batch computation. `noise_seed` drives the
// reparameterized draws (sample index is not part of the stream, so the same
// batch and seed always see the same noise).
BatchGraph build_batch(const Model& model, const TrainConfig& config,
                       std::span<const data::PairedSample* const> batch, Mode mode,
                       std::uint64_t noise_seed);

struct StepStats {
  double loss = 0, loss_s = 0, loss_d = 0;
  std::size_t sinkhorn_failures = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_s = 0, loss_d = 0;
  double val_r1_t2v = 0, val_r1_v2t = 0;
  std::size_t sinkhorn_failures = 0;
};

std::string format_epoch_log(const EpochLog& log);  // tab-separated line

// Adam over a ParamStore. Params without a gradient are left untouched.
void adam_update(ParamStore& params, AdamState& state, const std::map<std::string, Tensor>& grads,
                 const TrainConfig& config);

class Trainer {
 public:
  Trainer(TrainConfig config, std::size_t dim);
  explicit Trainer(Checkpoint checkpoint);

  // One optimizer step. Throws NumericError (leaving the state untouched) if
  // the loss is not finite.
  StepStats step(std::span<const data::PairedSample* const> batch);

  // Runs the remaining epochs. `on_epoch` sees each finished epoch's log and
  // may save checkpoints.
  std::vector<EpochLog> train(const std::vector<data::PairedSample>& train_split,
                              const std::vector<data::PairedSample>& val_split,
                              const std::function<void(const EpochLog&, const Trainer&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  const Model& model() const noexcept { return model_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::uint64_t steps_done() const noexcept { return step_; }

 private:
  TrainConfig config_;
  Model model_;
  AdamState adam_;
  std::uint64_t step_ = 0;
};

// Inference-mode B x B similarity with rows indexed by video and columns by
// text. Uses the configured eval sampling; deterministic for a fixed eval seed.
Tensor similarity_matrix(const Model& model, const TrainConfig& config,
                         const std::vector<data::PairedSample>& samples);

// T2V and V2T reports over one split. Throws CompatError if the split's
// feature width differs from the model's.
std::pair<eval::RetrievalReport, eval::RetrievalReport> evaluate(
    const Checkpoint& checkpoint, const std::vector<data::PairedSample>& samples);

}  // namespace upret::train
