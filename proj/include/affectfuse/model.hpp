// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <string>
#include <vector>

#include "affectfuse/data.hpp"
#include "affectfuse/fusion.hpp"
#include "affectfuse/tfl.hpp"

namespace affectfuse {

// Ablation switch. no_cmaa passes encoder features straight to fusion,
// no_mie fixes the fusion weights at 1/3, no_tfl drops the feedback input
// and classifies the fused feature directly.
enum class Variant { full, no_cmaa, no_mie, no_tfl };

constexpr std::array<Variant, 4> kVariants{Variant::full, Variant::no_cmaa, Variant::no_mie,
                                           Variant::no_tfl};

const char* variant_name(Variant v);
Variant variant_from(const std::string& s);  // ConfigError on unknown name

struct ModelConfig {
  int width = 32;       // shared representation width d
  int enc_layers = 2;   // transformer blocks per modality encoder
  int enc_heads = 4;
  int ffn_mult = 4;     // FFN hidden = ffn_mult * width
  int cmaa_dk = 32;     // query/key width of the pairwise attention
  int mie_hidden = 32;
  bool mie_shared = true;    // one confidence scorer for all modalities
  bool mie_softmax = false;  // softmax weight normalization instead of sum
  int cls_hidden = 0;        // 0 keeps the classifier a single linear map
  int t_max = 64;            // positional table capacity
  double ln_eps = 1e-5;
  std::array<int, 3> in_dims{40, 64, 32};  // audio, visual, text raw dims
  Variant variant = Variant::full;

  void validate() const;  // ConfigError naming the field
  std::string canonical_text() const;
  uint64_t fingerprint() const;
  static ModelConfig from_canonical(const std::string& text);

  bool uses_cmaa() const { return variant != Variant::no_cmaa; }
  bool uses_mie() const { return variant != Variant::no_mie; }
  bool uses_tfl() const { return variant != Variant::no_tfl; }
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Every learnable tensor of the network. Components an ablation variant
// never touches are left empty and skipped by named_params.
struct ModelParams {
  ModelConfig cfg;
  std::array<EncoderParams, 3> encoders;
  CmaaParams cmaa;
  MieParams mie;
  TflParams tfl;

  // Deterministic init from per-component derived streams, so two variants
  // sharing a seed share the init of every component they both use.
  static ModelParams init(const ModelConfig& cfg, uint64_t seed);

  // Fixed naming and order; checkpoints, the optimizer, and gradient
  // checks all key off this sequence.
  std::vector<NamedParam> named_params();
};

// Handles into one session's forward graph. All Vals live on the tape the
// forward was built on.
struct ModelForward {
  std::vector<Val> y;       // per-step prediction vectors [classes]
  std::array<Val, 3> h;     // encoder outputs [T x width]
  std::array<Val, 3> g;     // aligned features (aliases h under no_cmaa)
  Val z;                    // fused feature [T x width]
  MieWeightVals weights;    // fusion weight columns [T]
};

ModelForward model_forward(Tape& tape, Binder& bind, ModelParams& params,
                           const ModalitySession& session, const ForwardCtx& ctx);

// Value-level predictions of a forward pass, one simplex row per step.
std::vector<ProbabilityVector> extract_probs(const Tape& tape, const std::vector<Val>& y);

// Convenience eval pass: fresh tape, dropout off, returns predictions, the
// fusion weights, and the largest encoder-output row norm per modality
// (consumed by the Lipschitz-bound scale checks).
struct EvalOutput {
  std::vector<ProbabilityVector> probs;
  ConfidenceWeights weights;
  std::array<double, 3> h_row_max{0.0, 0.0, 0.0};
};

EvalOutput model_eval(ModelParams& params, const ModalitySession& session);

}  // namespace affectfuse
