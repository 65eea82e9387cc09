// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "affectfuse/encoder.hpp"
#include "affectfuse/rng.hpp"

namespace affectfuse {

inline constexpr int kNumClasses = 4;
constexpr std::array<const char*, 4> kClassNames{"confused", "bored", "curious", "frustrated"};

enum class MissingMode { at_most_one, independent };

const char* missing_mode_name(MissingMode m);
MissingMode missing_mode_from(const std::string& s);  // ConfigError on unknown name

// Synthetic benchmark recipe. Labels follow a first-order Markov chain with
// uniform start and a shared self-transition probability; observations are
// class-conditional unit-norm Gaussian bumps per modality. Audio optionally
// gets a noise burst (sigma scaled by burst_factor) on a 1-based inclusive
// step window, making it the unreliable channel there. Missingness is
// injected at generation time per the mode: at_most_one drops at most one
// modality per step (all three rates must agree), independent flips each
// modality on its own rate.
struct GeneratorConfig {
  // Default seed chosen so the generated splits meet the documented class
  // balance window (every class share in [0.225, 0.275] per split).
  uint64_t seed = 38;
  int sessions_train = 600;
  int sessions_val = 100;
  int sessions_test = 200;
  int steps = 20;
  double self_transition = 0.85;
  std::array<int, 3> dims{40, 64, 32};          // audio, visual, text feature dims
  std::array<double, 3> sigma{0.9, 0.7, 1.2};   // per-modality noise scale
  bool audio_burst = true;
  double burst_factor = 4.0;
  int burst_start = 3;
  int burst_end = 5;
  std::array<double, 3> missing_rate{0.1, 0.1, 0.1};
  MissingMode missing_mode = MissingMode::at_most_one;

  void validate() const;  // ConfigError naming the field
  // Byte-stable listing of every field; equal configs produce equal text.
  std::string canonical_text() const;
  // FNV-1a of the canonical text; identifies the dataset recipe + seed.
  uint64_t fingerprint() const;

  static GeneratorConfig from_canonical(const std::string& text);
  // Effective noise scale for a modality at a 0-based step.
  double sigma_at(Modality m, int t) const;
};

struct ModalitySession {
  uint32_t id = 0;
  std::array<ModalityStream, 3> streams;  // indexed by Modality
  std::vector<int> labels;

  int steps() const { return static_cast<int>(labels.size()); }
  const ModalityStream& stream(Modality m) const { return streams[static_cast<size_t>(modality_index(m))]; }
  ModalityStream& stream(Modality m) { return streams[static_cast<size_t>(modality_index(m))]; }
};

// Class-conditional emission centers, one unit-norm vector per
// (modality, class).
struct EmissionMeans {
  std::array<std::array<Tensor, kNumClasses>, 3> mu;
  static EmissionMeans draw(const std::array<int, 3>& dims, uint64_t seed);
};

struct EmotionDataset {
  GeneratorConfig cfg;
  uint64_t fingerprint = 0;
  EmissionMeans means;
  std::vector<ModalitySession> train, val, test;
};

// Row-stochastic matrix with `self` on the diagonal and the remainder
// spread evenly; ContractError when self is outside [0, 1].
Tensor markov_transition(double self, int k);

// Uniform initial state, then transitions by CDF walk. The transition
// matrix is validated (rows on the simplex within 1e-9).
std::vector<int> sample_markov_chain(const Tensor& transition, int steps, Rng& rng);

// mu[label_t] + sigma_m(t) * N(0, I) for every step and modality.
// Draw order is fixed: modality-major, then step, then coordinate.
std::array<ModalityStream, 3> emit_observations(const std::vector<int>& labels,
                                                const EmissionMeans& means,
                                                const GeneratorConfig& cfg, Rng& rng);

// Data-level missingness. Returns a copy with dropped rows zeroed and
// presence flags cleared. Rates and mode as in GeneratorConfig.
ModalitySession inject_missing(const ModalitySession& s, const std::array<double, 3>& rates,
                               MissingMode mode, Rng& rng);

ModalitySession generate_session(const GeneratorConfig& cfg, const EmissionMeans& means,
                                 uint32_t id);

// Whole benchmark: split sizes from the config, session ids globally unique
// (train, then val, then test). Deterministic for a given config; sessions
// are generated in parallel from independent derived streams.
EmotionDataset generate_dataset(const GeneratorConfig& cfg);

void save_dataset(const std::string& path, const EmotionDataset& ds);

struct LoadedDataset {
  EmotionDataset data;
  bool fingerprint_ok = true;  // stored hash matched the recomputed recipe hash
};

LoadedDataset load_dataset(const std::string& path);

}  // namespace affectfuse
