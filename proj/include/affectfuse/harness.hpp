// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <string>
#include <vector>

#include "affectfuse/train.hpp"

namespace affectfuse {

struct HarnessConfig {
  std::vector<double> rates{0.0, 0.2, 0.4, 0.6};  // missing-rate sweep grid
  MissingMode sweep_mode = MissingMode::at_most_one;
  std::vector<int> seeds{42, 43, 44};             // ablation / sweep training seeds
  int lipschitz_samples = 1000;
  double lipschitz_eps = 1e-3;
  uint64_t sweep_seed = 7;                        // derives the injected masks
  int trace_session = 0;                          // session id for confidence traces

  void validate() const;
  std::string canonical_text() const;
  static HarnessConfig from_canonical(const std::string& text);
};

// "0.88 +/- 0.009": two decimals on the mean, three on the spread.
std::string format_mean_std(double mean, double std);

// Sample standard deviation (n-1 denominator; 0 for a single value).
double sample_std(std::span<const double> xs);

struct NamedModel {
  std::string name;
  ModelParams* params = nullptr;
  uint64_t dataset_fingerprint = 0;  // of the data the model was trained on
};

struct SweepCell {
  std::string model;
  double rate = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct SweepResult {
  std::vector<std::string> models;
  std::vector<double> rates;
  std::vector<SweepCell> cells;  // model-major, then rate, matching inputs
  MissingMode mode = MissingMode::at_most_one;
  uint64_t seed = 0;
  uint64_t config_hash = 0;

  const SweepCell& cell(const std::string& model, double rate) const;  // ContractError if absent
  std::string csv() const;
  std::string json() const;
};

// Paired evaluation under growing injected missingness: for every rate the
// masks derive from (seed, rate index, session id) only, so every model
// sees identical corruption. Rates must be strictly increasing in [0, 1];
// models trained on different dataset fingerprints are a FormatError.
SweepResult missing_rate_sweep(std::span<NamedModel> models,
                               const std::vector<ModalitySession>& split,
                               const std::vector<double>& rates, MissingMode mode, uint64_t seed,
                               double lambda);

struct TraceRow {
  int step = 0;
  std::array<double, 3> w{};
  std::array<uint8_t, 3> present{};
  std::array<double, 3> sigma{};
  int label = 0;
  int pred = 0;
};

struct ConfidenceTrace {
  uint32_t session_id = 0;
  std::vector<TraceRow> rows;
  uint64_t config_hash = 0;
  uint64_t seed = 0;

  std::string csv() const;
};

// Fusion weights over one session joined with the generator's noise
// schedule and the presence flags.
ConfidenceTrace confidence_trace(ModelParams& params, const ModalitySession& session,
                                 const GeneratorConfig& gen);

struct AblationCell {
  Variant variant = Variant::full;
  uint64_t seed = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  int best_epoch = 0;
};

struct AblationResult {
  struct Row {
    Variant variant = Variant::full;
    double acc_mean = 0.0, acc_std = 0.0;
    double f1_mean = 0.0, f1_std = 0.0;
  };
  std::vector<AblationCell> cells;  // variant-major, seeds in input order
  std::vector<Row> rows;            // one per variant, kVariants order
  uint64_t config_hash = 0;
  uint64_t seed = 0;

  const Row& row(Variant v) const;  // ContractError if absent
  std::string csv() const;
  std::string json() const;
  std::string table() const;  // aligned text table, mean +/- std per cell
};

// Trains every variant at every seed and reports test metrics. The no_tfl
// variant also drops the temporal KL term (lambda = 0); everything else
// reuses the base training recipe with the given seed.
AblationResult run_ablation(const ModelConfig& base, const TrainConfig& base_train,
                            const EmotionDataset& ds, const std::vector<int>& seeds);

// Data-scale inputs of the Lipschitz bound: the largest encoder-output row
// norm per modality, measured on the sessions the perturbations will hit.
// The bound consumes these inflated by `slack`; the empirical runner
// re-measures during perturbed passes so the assumption is checkable.
struct ScaleProfile {
  std::array<double, 3> r_h{0.0, 0.0, 0.0};
  double slack = 2.0;

  double r_used(int m) const { return r_h[static_cast<size_t>(m)] * slack; }
};

ScaleProfile measure_scale(ModelParams& params, std::span<const ModalitySession> sessions);

// Upper bound on ||dY||_F / ||dX^m||_F for the full sequence map, one
// modality perturbed with the others held fixed. Composed from operator
// norms along the path (projection, per-block residual factors, pairwise
// attention with the measured feature scales, confidence reweighting,
// feedback recursion, classifier, softmax 1/2), every factor documented at
// the definition. Valid while encoder outputs stay inside the profile.
double lipschitz_bound(ModelParams& params, Modality m, int t_len, const ScaleProfile& profile);

struct LipschitzReport {
  Modality modality = Modality::audio;
  int samples = 0;
  double eps_scale = 0.0;
  double bound = 0.0;
  double max_ratio = 0.0;
  std::array<double, 3> r_used{};      // caps the bound assumed
  std::array<double, 3> r_observed{};  // across the base and perturbed passes
  bool scale_ok = true;

  bool ok() const { return scale_ok && max_ratio <= bound; }
};

// Max over n random unit perturbations (norm eps_scale, present steps of
// modality m only) of the full-output change per unit input change.
LipschitzReport lipschitz_empirical(ModelParams& params, const ModalitySession& session,
                                    Modality m, int n_samples, double eps_scale, uint64_t seed,
                                    const ScaleProfile& profile);

// PASS/FAIL rows for the theory subcommands and the acceptance gate.
struct TheoryCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Finite-difference validation of every parameter block's gradient on a
// toy two-session problem (width 8, three steps); h = 1e-5, tol = 1e-4.
std::vector<TheoryCheck> check_grad(uint64_t seed);

// Contraction protocol: a feedback head with contraction_bound < 1 must
// reach, from 100 random starts, a unique fixed point within 500 steps at
// tol 1e-9, with residual and KL below 1e-8 and empirical per-step
// contraction ratios within bound + 1e-6.
std::vector<TheoryCheck> check_fixed_point(uint64_t seed);

// Toy-scale bound-vs-empirical comparison per modality, with and without a
// second modality fully zeroed.
std::vector<TheoryCheck> check_lipschitz(uint64_t seed);

// "<experiment>_<confighash16hex>_<seed>.<ext>" inside dir.
std::string artifact_path(const std::string& dir, const std::string& experiment,
                          uint64_t config_hash, uint64_t seed, const std::string& ext);

}  // namespace affectfuse
