// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/data.hpp"

#include <cmath>
#include <map>

#include "affectfuse/error.hpp"
#include "affectfuse/io.hpp"
#include "affectfuse/kvparse.hpp"
#include "affectfuse/parallel.hpp"

namespace affectfuse {

const char* missing_mode_name(MissingMode m) {
  return m == MissingMode::at_most_one ? "at_most_one" : "independent";
}

MissingMode missing_mode_from(const std::string& s) {
  if (s == "at_most_one") return MissingMode::at_most_one;
  if (s == "independent") return MissingMode::independent;
  throw ConfigError("generator.missing_mode: unknown mode '" + s + "'");
}

void GeneratorConfig::validate() const {
  if (sessions_train < 1) throw ConfigError("generator.sessions_train must be >= 1");
  if (sessions_val < 0) throw ConfigError("generator.sessions_val must be >= 0");
  if (sessions_test < 0) throw ConfigError("generator.sessions_test must be >= 0");
  if (steps < 1) throw ConfigError("generator.steps must be >= 1");
  if (self_transition < 0.0 || self_transition > 1.0)
    throw ConfigError("generator.self_transition must be in [0, 1]");
  for (int i = 0; i < 3; ++i) {
    if (dims[static_cast<size_t>(i)] < 1)
      throw ConfigError(std::string("generator.dim_") + kModalityNames[static_cast<size_t>(i)] +
                        " must be >= 1");
    if (sigma[static_cast<size_t>(i)] < 0.0)
      throw ConfigError(std::string("generator.sigma_") + kModalityNames[static_cast<size_t>(i)] +
                        " must be >= 0");
    const double r = missing_rate[static_cast<size_t>(i)];
    if (r < 0.0 || r > 1.0)
      throw ConfigError(std::string("generator.missing_rate_") +
                        kModalityNames[static_cast<size_t>(i)] + " must be in [0, 1]");
  }
  if (burst_factor <= 0.0) throw ConfigError("generator.burst_factor must be > 0");
  if (burst_start < 1 || burst_end < burst_start)
    throw ConfigError("generator.burst_start/burst_end must satisfy 1 <= start <= end");
  if (missing_mode == MissingMode::at_most_one &&
      (missing_rate[0] != missing_rate[1] || missing_rate[1] != missing_rate[2]))
    throw ConfigError("generator.missing_rate_*: at_most_one mode needs equal rates");
}

std::string GeneratorConfig::canonical_text() const {
  using namespace kv;
  std::string s;
  s += "generator.audio_burst = " + fmt_bool(audio_burst) + "\n";
  s += "generator.burst_end = " + fmt_int(burst_end) + "\n";
  s += "generator.burst_factor = " + fmt_double(burst_factor) + "\n";
  s += "generator.burst_start = " + fmt_int(burst_start) + "\n";
  s += "generator.dim_audio = " + fmt_int(dims[0]) + "\n";
  s += "generator.dim_text = " + fmt_int(dims[2]) + "\n";
  s += "generator.dim_visual = " + fmt_int(dims[1]) + "\n";
  s += "generator.missing_mode = " + std::string(missing_mode_name(missing_mode)) + "\n";
  s += "generator.missing_rate_audio = " + fmt_double(missing_rate[0]) + "\n";
  s += "generator.missing_rate_text = " + fmt_double(missing_rate[2]) + "\n";
  s += "generator.missing_rate_visual = " + fmt_double(missing_rate[1]) + "\n";
  s += "generator.seed = " + fmt_int(static_cast<int64_t>(seed)) + "\n";
  s += "generator.self_transition = " + fmt_double(self_transition) + "\n";
  s += "generator.sessions_test = " + fmt_int(sessions_test) + "\n";
  s += "generator.sessions_train = " + fmt_int(sessions_train) + "\n";
  s += "generator.sessions_val = " + fmt_int(sessions_val) + "\n";
  s += "generator.sigma_audio = " + fmt_double(sigma[0]) + "\n";
  s += "generator.sigma_text = " + fmt_double(sigma[2]) + "\n";
  s += "generator.sigma_visual = " + fmt_double(sigma[1]) + "\n";
  s += "generator.steps = " + fmt_int(steps) + "\n";
  return s;
}

uint64_t GeneratorConfig::fingerprint() const { return fnv1a64(canonical_text()); }

GeneratorConfig GeneratorConfig::from_canonical(const std::string& text) {
  GeneratorConfig cfg;
  std::map<std::string, std::string> seen;
  for (auto& [k, v] : kv::parse_flat(text)) seen.emplace(k, v);
  auto take = [&](const std::string& key) {
    auto it = seen.find(key);
    if (it == seen.end()) throw ConfigError("generator config missing key " + key);
    std::string v = it->second;
    seen.erase(it);
    return v;
  };
  cfg.audio_burst = kv::parse_bool("generator.audio_burst", take("generator.audio_burst"));
  cfg.burst_end = static_cast<int>(kv::parse_int("generator.burst_end", take("generator.burst_end")));
  cfg.burst_factor = kv::parse_double("generator.burst_factor", take("generator.burst_factor"));
  cfg.burst_start =
      static_cast<int>(kv::parse_int("generator.burst_start", take("generator.burst_start")));
  cfg.dims[0] = static_cast<int>(kv::parse_int("generator.dim_audio", take("generator.dim_audio")));
  cfg.dims[2] = static_cast<int>(kv::parse_int("generator.dim_text", take("generator.dim_text")));
  cfg.dims[1] =
      static_cast<int>(kv::parse_int("generator.dim_visual", take("generator.dim_visual")));
  cfg.missing_mode = missing_mode_from(take("generator.missing_mode"));
  cfg.missing_rate[0] =
      kv::parse_double("generator.missing_rate_audio", take("generator.missing_rate_audio"));
  cfg.missing_rate[2] =
      kv::parse_double("generator.missing_rate_text", take("generator.missing_rate_text"));
  cfg.missing_rate[1] =
      kv::parse_double("generator.missing_rate_visual", take("generator.missing_rate_visual"));
  cfg.seed = static_cast<uint64_t>(kv::parse_int("generator.seed", take("generator.seed")));
  cfg.self_transition =
      kv::parse_double("generator.self_transition", take("generator.self_transition"));
  cfg.sessions_test =
      static_cast<int>(kv::parse_int("generator.sessions_test", take("generator.sessions_test")));
  cfg.sessions_train =
      static_cast<int>(kv::parse_int("generator.sessions_train", take("generator.sessions_train")));
  cfg.sessions_val =
      static_cast<int>(kv::parse_int("generator.sessions_val", take("generator.sessions_val")));
  cfg.sigma[0] = kv::parse_double("generator.sigma_audio", take("generator.sigma_audio"));
  cfg.sigma[2] = kv::parse_double("generator.sigma_text", take("generator.sigma_text"));
  cfg.sigma[1] = kv::parse_double("generator.sigma_visual", take("generator.sigma_visual"));
  cfg.steps = static_cast<int>(kv::parse_int("generator.steps", take("generator.steps")));
  if (!seen.empty()) throw ConfigError("generator config has unknown key " + seen.begin()->first);
  cfg.validate();
  return cfg;
}

double GeneratorConfig::sigma_at(Modality m, int t) const {
  double s = sigma[static_cast<size_t>(modality_index(m))];
  if (m == Modality::audio && audio_burst) {
    const int step1 = t + 1;  // window is 1-based inclusive
    if (step1 >= burst_start && step1 <= burst_end) s *= burst_factor;
  }
  return s;
}

EmissionMeans EmissionMeans::draw(const std::array<int, 3>& dims, uint64_t seed) {
  EmissionMeans out;
  Rng rng(seed);
  for (int m = 0; m < 3; ++m)
    for (int c = 0; c < kNumClasses; ++c) {
      Tensor v = Tensor::zeros({dims[static_cast<size_t>(m)]});
      double norm = 0.0;
      for (auto& x : v.data) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : v.data) x /= norm;
      out.mu[static_cast<size_t>(m)][static_cast<size_t>(c)] = std::move(v);
    }
  return out;
}

Tensor markov_transition(double self, int k) {
  if (self < 0.0 || self > 1.0) throw ContractError("self transition must be in [0, 1]");
  if (k < 2) throw ContractError("markov chain needs at least 2 states");
  Tensor p = Tensor::zeros({k, k});
  const double off = (1.0 - self) / (k - 1);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) p.at(i, j) = i == j ? self : off;
  return p;
}

std::vector<int> sample_markov_chain(const Tensor& transition, int steps, Rng& rng) {
  if (transition.ndim() != 2 || transition.shape[0] != transition.shape[1])
    throw ContractError("markov transition must be square, got " + shape_str(transition.shape));
  const int k = transition.shape[0];
  for (int i = 0; i < k; ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      if (transition.at(i, j) < 0.0) throw ContractError("markov transition has a negative entry");
      sum += transition.at(i, j);
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ContractError("markov transition row " + std::to_string(i) + " sums to " +
                          std::to_string(sum));
  }
  if (steps < 1) throw ContractError("markov chain needs steps >= 1");
  std::vector<int> out(static_cast<size_t>(steps));
  int s = rng.uniform_int(k);
  out[0] = s;
  for (int t = 1; t < steps; ++t) {
    const double u = rng.uniform();
    double acc = 0.0;
    int next = k - 1;
    for (int j = 0; j < k; ++j) {
      acc += transition.at(s, j);
      if (u < acc) {
        next = j;
        break;
      }
    }
    s = next;
    out[static_cast<size_t>(t)] = s;
  }
  return out;
}

std::array<ModalityStream, 3> emit_observations(const std::vector<int>& labels,
                                                const EmissionMeans& means,
                                                const GeneratorConfig& cfg, Rng& rng) {
  const int t_len = static_cast<int>(labels.size());
  std::array<ModalityStream, 3> out;
  for (int m = 0; m < 3; ++m) {
    const int d = cfg.dims[static_cast<size_t>(m)];
    ModalityStream& s = out[static_cast<size_t>(m)];
    s.modality = static_cast<Modality>(m);
    s.raw = Tensor::zeros({t_len, d});
    s.present.assign(static_cast<size_t>(t_len), 1);
    for (int t = 0; t < t_len; ++t) {
      const int c = labels[static_cast<size_t>(t)];
      if (c < 0 || c >= kNumClasses) throw ContractError("emission label out of range");
      const Tensor& mu = means.mu[static_cast<size_t>(m)][static_cast<size_t>(c)];
      const double sg = cfg.sigma_at(static_cast<Modality>(m), t);
      for (int j = 0; j < d; ++j) s.raw.at(t, j) = mu.at(j) + sg * rng.normal();
    }
  }
  return out;
}

ModalitySession inject_missing(const ModalitySession& s, const std::array<double, 3>& rates,
                               MissingMode mode, Rng& rng) {
  for (double r : rates)
    if (r < 0.0 || r > 1.0) throw ContractError("missing rate must be in [0, 1]");
  const int t_len = s.steps();
  std::array<std::vector<uint8_t>, 3> keep;
  for (auto& k : keep) k.assign(static_cast<size_t>(t_len), 1);
  if (mode == MissingMode::at_most_one) {
    if (rates[0] != rates[1] || rates[1] != rates[2])
      throw ContractError("at_most_one injection needs equal rates");
    for (int t = 0; t < t_len; ++t)
      if (rng.uniform() < rates[0]) keep[static_cast<size_t>(rng.uniform_int(3))][static_cast<size_t>(t)] = 0;
  } else {
    for (int t = 0; t < t_len; ++t)
      for (int m = 0; m < 3; ++m)
        if (rng.uniform() < rates[static_cast<size_t>(m)]) keep[static_cast<size_t>(m)][static_cast<size_t>(t)] = 0;
  }
  ModalitySession out = s;
  for (int m = 0; m < 3; ++m)
    out.streams[static_cast<size_t>(m)] =
        apply_missing_mask(s.streams[static_cast<size_t>(m)], keep[static_cast<size_t>(m)]);
  return out;
}

ModalitySession generate_session(const GeneratorConfig& cfg, const EmissionMeans& means,
                                 uint32_t id) {
  Rng rng(derive_seed(cfg.seed, "session", id));
  ModalitySession s;
  s.id = id;
  const Tensor transition = markov_transition(cfg.self_transition, kNumClasses);
  s.labels = sample_markov_chain(transition, cfg.steps, rng);
  s.streams = emit_observations(s.labels, means, cfg, rng);
  const bool any_missing =
      cfg.missing_rate[0] > 0.0 || cfg.missing_rate[1] > 0.0 || cfg.missing_rate[2] > 0.0;
  if (any_missing) {
    Rng miss_rng(derive_seed(cfg.seed, "missing", id));
    s = inject_missing(s, cfg.missing_rate, cfg.missing_mode, miss_rng);
  }
  return s;
}

EmotionDataset generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  EmotionDataset ds;
  ds.cfg = cfg;
  ds.fingerprint = cfg.fingerprint();
  ds.means = EmissionMeans::draw(cfg.dims, derive_seed(cfg.seed, "means"));
  const int total = cfg.sessions_train + cfg.sessions_val + cfg.sessions_test;
  std::vector<ModalitySession> all(static_cast<size_t>(total));
  parallel::parallel_for(total, [&](int i) {
    all[static_cast<size_t>(i)] = generate_session(cfg, ds.means, static_cast<uint32_t>(i));
  });
  auto begin = all.begin();
  ds.train.assign(begin, begin + cfg.sessions_train);
  ds.val.assign(begin + cfg.sessions_train, begin + cfg.sessions_train + cfg.sessions_val);
  ds.test.assign(begin + cfg.sessions_train + cfg.sessions_val, all.end());
  return ds;
}

namespace {

void write_session(io::ByteWriter& w, const ModalitySession& s) {
  w.u32(s.id);
  w.u32(static_cast<uint32_t>(s.labels.size()));
  for (int l : s.labels) w.u8(static_cast<uint8_t>(l));
  for (const ModalityStream& st : s.streams) {
    for (uint8_t p : st.present) w.u8(p);
    w.tensor(st.raw);
  }
}

ModalitySession read_session(io::ByteReader& r, const GeneratorConfig& cfg) {
  ModalitySession s;
  s.id = r.u32();
  const uint32_t t_len = r.u32();
  if (t_len != static_cast<uint32_t>(cfg.steps))
    throw FormatError("session " + std::to_string(s.id) + " has " + std::to_string(t_len) +
                      " steps, config says " + std::to_string(cfg.steps));
  s.labels.resize(t_len);
  for (auto& l : s.labels) {
    l = r.u8();
    if (l >= kNumClasses) throw FormatError("session label out of range at byte " +
                                            std::to_string(r.offset() - 1));
  }
  for (int m = 0; m < 3; ++m) {
    ModalityStream& st = s.streams[static_cast<size_t>(m)];
    st.modality = static_cast<Modality>(m);
    st.present.resize(t_len);
    for (auto& p : st.present) p = r.u8();
    const size_t at = r.offset();
    st.raw = r.tensor();
    if (st.raw.ndim() != 2 || st.raw.shape[0] != static_cast<int>(t_len) ||
        st.raw.shape[1] != cfg.dims[static_cast<size_t>(m)])
      throw FormatError("session stream shape mismatch at byte " + std::to_string(at));
    st.check();
  }
  return s;
}

}  // namespace

void save_dataset(const std::string& path, const EmotionDataset& ds) {
  io::ByteWriter w;
  w.magic();
  w.u16(io::kVersion);
  w.u16(io::kKindDataset);
  w.u64(ds.fingerprint);
  w.u64(ds.cfg.seed);
  w.str32(ds.cfg.canonical_text());
  w.u32(kNumClasses);
  w.u32(static_cast<uint32_t>(ds.cfg.steps));
  for (int d : ds.cfg.dims) w.u32(static_cast<uint32_t>(d));
  for (int m = 0; m < 3; ++m)
    for (int c = 0; c < kNumClasses; ++c) w.tensor(ds.means.mu[static_cast<size_t>(m)][static_cast<size_t>(c)]);
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    w.u32(static_cast<uint32_t>(split->size()));
    for (const ModalitySession& s : *split) write_session(w, s);
  }
  w.to_file(path);
}

LoadedDataset load_dataset(const std::string& path) {
  io::ByteReader r = io::ByteReader::from_file(path);
  r.expect_magic();
  const uint16_t version = r.u16();
  if (version != io::kVersion)
    throw FormatError("unsupported container version " + std::to_string(version));
  const uint16_t kind = r.u16();
  if (kind != io::kKindDataset)
    throw FormatError("file is not a dataset (kind " + std::to_string(kind) + ")");
  LoadedDataset out;
  const uint64_t stored_fp = r.u64();
  const uint64_t stored_seed = r.u64();
  const std::string recipe = r.str32();
  try {
    out.data.cfg = GeneratorConfig::from_canonical(recipe);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedded generator recipe is invalid: ") + e.what());
  }
  if (out.data.cfg.seed != stored_seed)
    throw FormatError("stored seed disagrees with the embedded recipe");
  out.data.fingerprint = stored_fp;
  out.fingerprint_ok = stored_fp == out.data.cfg.fingerprint();
  const uint32_t k = r.u32();
  if (k != kNumClasses) throw FormatError("dataset has " + std::to_string(k) + " classes");
  const uint32_t steps = r.u32();
  if (steps != static_cast<uint32_t>(out.data.cfg.steps))
    throw FormatError("dataset steps disagree with the embedded recipe");
  for (int m = 0; m < 3; ++m) {
    const uint32_t d = r.u32();
    if (d != static_cast<uint32_t>(out.data.cfg.dims[static_cast<size_t>(m)]))
      throw FormatError("dataset dims disagree with the embedded recipe");
  }
  for (int m = 0; m < 3; ++m)
    for (int c = 0; c < kNumClasses; ++c) {
      const size_t at = r.offset();
      Tensor mu = r.tensor();
      if (mu.ndim() != 1 || mu.shape[0] != out.data.cfg.dims[static_cast<size_t>(m)])
        throw FormatError("emission mean shape mismatch at byte " + std::to_string(at));
      out.data.means.mu[static_cast<size_t>(m)][static_cast<size_t>(c)] = std::move(mu);
    }
  for (auto* split : {&out.data.train, &out.data.val, &out.data.test}) {
    const uint32_t n = r.u32();
    split->reserve(n);
    for (uint32_t i = 0; i < n; ++i) split->push_back(read_session(r, out.data.cfg));
  }
  if (static_cast<int>(out.data.train.size()) != out.data.cfg.sessions_train ||
      static_cast<int>(out.data.val.size()) != out.data.cfg.sessions_val ||
      static_cast<int>(out.data.test.size()) != out.data.cfg.sessions_test)
    throw FormatError("split sizes disagree with the embedded recipe");
  r.expect_end();
  return out;
}

}  // namespace affectfuse
