// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "affectfuse/metrics.hpp"
#include "affectfuse/model.hpp"

namespace affectfuse {

// Adam moment constants; the optimizer exposes no knobs for them.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct TrainConfig {
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  int warmup = 3;                      // epochs of linear ramp 0 -> lr
  std::vector<int> decay_epochs{20, 25};
  double decay_factor = 0.1;
  double dropout = 0.2;
  double lambda = 0.1;                 // weight of the temporal KL penalty
  int patience = 5;                    // epochs past the best val macro-F1
  uint64_t seed = 42;

  void validate() const;
  std::string canonical_text() const;
  static TrainConfig from_canonical(const std::string& text);
};

// Linear warmup to the base lr over `warmup` epochs, then a decay_factor
// cut at each decay epoch. epoch is 1-based.
double lr_schedule(int epoch, const TrainConfig& cfg);

// Flat per-parameter moment buffers in named_params order.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;
  static AdamState init(const std::vector<NamedParam>& params);
};

// Decoupled-weight-decay Adam with bias correction:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
void adamw_step(const std::vector<NamedParam>& params,
                const std::vector<std::vector<double>>& grads, AdamState& st, double lr,
                double weight_decay);

// Stop rule: stop once `patience` epochs pass without a strict improvement.
struct EarlyStopper {
  int patience = 5;
  double best = 0.0;
  int best_epoch = 0;

  // Feed each epoch's metric in order; true means halt after this epoch.
  bool observe(int epoch, double metric);
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_ce = 0.0, train_kl = 0.0, train_total = 0.0;
  double val_total = 0.0, val_acc = 0.0, val_macro_f1 = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// One row per epoch, leading "# config_hash=... seed=..." comment line.
std::string history_csv(const TrainHistory& h, uint64_t config_hash, uint64_t seed);

struct EvalOptions {
  double missing_rate = 0.0;  // extra injection applied to an eval copy
  MissingMode mode = MissingMode::at_most_one;
  double lambda = 0.1;        // for the reported total loss
  uint64_t seed = 0;          // derives the injection masks
};

// Predictions for one session, one simplex row per step.
using SessionPredictor = std::function<std::vector<ProbabilityVector>(const ModalitySession&)>;

// Aggregates accuracy, macro F1, and loss terms over every (session, step)
// of the split. Keys: accuracy, macro_f1, ce, kl, total, sessions, steps.
MetricsRecord evaluate_with(const SessionPredictor& predict,
                            const std::vector<ModalitySession>& split, const EvalOptions& opts);

MetricsRecord evaluate(ModelParams& params, const std::vector<ModalitySession>& split,
                       const EvalOptions& opts = {});

struct TrainResult {
  ModelParams best;         // parameters of the best-val-F1 epoch
  TrainHistory history;
  int best_epoch = 0;
  double best_val_macro_f1 = 0.0;
  int epochs_run = 0;
};

// Full optimization loop: AdamW over shuffled fixed-size batches with
// per-session parallel gradients reduced in deterministic order, epoch-end
// validation, early stopping, best-epoch parameter retention.
// ContractError on empty splits; TrainingError when the loss leaves the
// finite range, reporting epoch and batch.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const EmotionDataset& ds);

struct CheckpointMeta {
  uint64_t run_hash = 0;             // canonical run-config fingerprint
  uint64_t dataset_fingerprint = 0;  // generator recipe hash of the data
  uint64_t seed = 0;
  int best_epoch = 0;
  double best_val_macro_f1 = 0.0;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta, ModelParams& params);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  ModelParams params;
};

// Rejects wrong kinds, unknown tensor names, and shape mismatches with a
// FormatError; the embedded model config text rebuilds the skeleton.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace affectfuse
