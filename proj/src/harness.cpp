// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "affectfuse/error.hpp"
#include "affectfuse/gradcheck.hpp"
#include "affectfuse/kvparse.hpp"
#include "affectfuse/linalg.hpp"

namespace affectfuse {

void HarnessConfig::validate() const {
  if (rates.empty()) throw ConfigError("harness.rates must not be empty");
  for (size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] < 0.0 || rates[i] > 1.0) throw ConfigError("harness.rates must lie in [0, 1]");
    if (i > 0 && rates[i] <= rates[i - 1])
      throw ConfigError("harness.rates must be strictly increasing");
  }
  if (seeds.empty()) throw ConfigError("harness.seeds must not be empty");
  if (lipschitz_samples < 1) throw ConfigError("harness.lipschitz_samples must be >= 1");
  if (lipschitz_eps <= 0.0) throw ConfigError("harness.lipschitz_eps must be > 0");
  if (trace_session < 0) throw ConfigError("harness.trace_session must be >= 0");
}

std::string HarnessConfig::canonical_text() const {
  using namespace kv;
  std::string s;
  s += "harness.lipschitz_eps = " + fmt_double(lipschitz_eps) + "\n";
  s += "harness.lipschitz_samples = " + fmt_int(lipschitz_samples) + "\n";
  s += "harness.rates = " + fmt_double_list(rates) + "\n";
  s += "harness.seeds = " + fmt_int_list(seeds) + "\n";
  s += "harness.sweep_mode = " + std::string(missing_mode_name(sweep_mode)) + "\n";
  s += "harness.sweep_seed = " + fmt_int(static_cast<int64_t>(sweep_seed)) + "\n";
  s += "harness.trace_session = " + fmt_int(trace_session) + "\n";
  return s;
}

HarnessConfig HarnessConfig::from_canonical(const std::string& text) {
  HarnessConfig cfg;
  std::map<std::string, std::string> seen;
  for (auto& [k, v] : kv::parse_flat(text)) seen.emplace(k, v);
  auto take = [&](const std::string& key) {
    auto it = seen.find(key);
    if (it == seen.end()) throw ConfigError("harness config missing key " + key);
    std::string v = it->second;
    seen.erase(it);
    return v;
  };
  cfg.lipschitz_eps = kv::parse_double("harness.lipschitz_eps", take("harness.lipschitz_eps"));
  cfg.lipschitz_samples = static_cast<int>(
      kv::parse_int("harness.lipschitz_samples", take("harness.lipschitz_samples")));
  cfg.rates = kv::parse_double_list("harness.rates", take("harness.rates"));
  cfg.seeds = kv::parse_int_list("harness.seeds", take("harness.seeds"));
  cfg.sweep_mode = missing_mode_from(take("harness.sweep_mode"));
  cfg.sweep_seed =
      static_cast<uint64_t>(kv::parse_int("harness.sweep_seed", take("harness.sweep_seed")));
  cfg.trace_session =
      static_cast<int>(kv::parse_int("harness.trace_session", take("harness.trace_session")));
  if (!seen.empty()) throw ConfigError("harness config has unknown key " + seen.begin()->first);
  cfg.validate();
  return cfg;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.3f", mean, std);
  return buf;
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

const SweepCell& SweepResult::cell(const std::string& model, double rate) const {
  for (const SweepCell& c : cells)
    if (c.model == model && c.rate == rate) return c;
  throw ContractError("no sweep cell for model " + model + " at rate " + std::to_string(rate));
}

std::string SweepResult::csv() const {
  std::string s = "# config_hash=" + kv::fmt_hex64(config_hash) +
                  " seed=" + kv::fmt_int(static_cast<int64_t>(seed)) + "\n";
  s += "model,rate,accuracy,macro_f1\n";
  for (const SweepCell& c : cells)
    s += c.model + "," + kv::fmt_double(c.rate) + "," + kv::fmt_double(c.accuracy) + "," +
         kv::fmt_double(c.macro_f1) + "\n";
  return s;
}

std::string SweepResult::json() const {
  nlohmann::json j;
  j["experiment"] = "sweep_missing";
  j["config_hash"] = kv::fmt_hex64(config_hash);
  j["seed"] = seed;
  j["mode"] = missing_mode_name(mode);
  j["rates"] = rates;
  for (const std::string& name : models) {
    nlohmann::json acc = nlohmann::json::array();
    nlohmann::json f1 = nlohmann::json::array();
    for (double r : rates) {
      acc.push_back(cell(name, r).accuracy);
      f1.push_back(cell(name, r).macro_f1);
    }
    j["models"][name]["accuracy"] = acc;
    j["models"][name]["macro_f1"] = f1;
  }
  return j.dump(2) + "\n";
}

SweepResult missing_rate_sweep(std::span<NamedModel> models,
                               const std::vector<ModalitySession>& split,
                               const std::vector<double>& rates, MissingMode mode, uint64_t seed,
                               double lambda) {
  if (models.empty()) throw ContractError("missing_rate_sweep needs at least one model");
  for (size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] < 0.0 || rates[i] > 1.0)
      throw ContractError("sweep rates must lie in [0, 1]");
    if (i > 0 && rates[i] <= rates[i - 1])
      throw ContractError("sweep rates must be strictly increasing");
  }
  for (const NamedModel& m : models)
    if (m.dataset_fingerprint != models[0].dataset_fingerprint)
      throw FormatError("model '" + m.name + "' was trained on a different dataset (fingerprint " +
                        kv::fmt_hex64(m.dataset_fingerprint) + " vs " +
                        kv::fmt_hex64(models[0].dataset_fingerprint) + ")");

  SweepResult out;
  out.rates = rates;
  out.mode = mode;
  out.seed = seed;
  for (const NamedModel& m : models) {
    out.models.push_back(m.name);
    for (size_t ri = 0; ri < rates.size(); ++ri) {
      EvalOptions opts;
      opts.missing_rate = rates[ri];
      opts.mode = mode;
      opts.lambda = lambda;
      opts.seed = derive_seed(seed, "sweep", static_cast<uint64_t>(ri));
      MetricsRecord rec = evaluate(*m.params, split, opts);
      out.cells.push_back({m.name, rates[ri], rec.get("accuracy"), rec.get("macro_f1")});
    }
  }
  return out;
}

std::string ConfidenceTrace::csv() const {
  std::string s = "# config_hash=" + kv::fmt_hex64(config_hash) +
                  " seed=" + kv::fmt_int(static_cast<int64_t>(seed)) + "\n";
  s += "step,w_audio,w_visual,w_text,present_audio,present_visual,present_text,"
       "sigma_audio,sigma_visual,sigma_text,label,pred\n";
  for (const TraceRow& r : rows) {
    s += kv::fmt_int(r.step);
    for (double w : r.w) s += "," + kv::fmt_double(w);
    for (uint8_t p : r.present) s += "," + kv::fmt_int(p);
    for (double g : r.sigma) s += "," + kv::fmt_double(g);
    s += "," + kv::fmt_int(r.label) + "," + kv::fmt_int(r.pred) + "\n";
  }
  return s;
}

ConfidenceTrace confidence_trace(ModelParams& params, const ModalitySession& session,
                                 const GeneratorConfig& gen) {
  EvalOutput ev = model_eval(params, session);
  ConfidenceTrace out;
  out.session_id = session.id;
  out.rows.reserve(static_cast<size_t>(session.steps()));
  for (int t = 0; t < session.steps(); ++t) {
    TraceRow r;
    r.step = t + 1;  // 1-based, matching the burst window convention
    for (int m = 0; m < 3; ++m) {
      r.w[static_cast<size_t>(m)] = ev.weights.w.at(t, m);
      r.present[static_cast<size_t>(m)] =
          session.streams[static_cast<size_t>(m)].present[static_cast<size_t>(t)];
      r.sigma[static_cast<size_t>(m)] = gen.sigma_at(static_cast<Modality>(m), t);
    }
    r.label = session.labels[static_cast<size_t>(t)];
    r.pred = ev.probs[static_cast<size_t>(t)].arg_max();
    out.rows.push_back(r);
  }
  return out;
}

const AblationResult::Row& AblationResult::row(Variant v) const {
  for (const Row& r : rows)
    if (r.variant == v) return r;
  throw ContractError(std::string("no ablation row for variant ") + variant_name(v));
}

std::string AblationResult::csv() const {
  std::string s = "# config_hash=" + kv::fmt_hex64(config_hash) +
                  " seed=" + kv::fmt_int(static_cast<int64_t>(seed)) + "\n";
  s += "variant,seed,accuracy,macro_f1,best_epoch\n";
  for (const AblationCell& c : cells)
    s += std::string(variant_name(c.variant)) + "," + kv::fmt_int(static_cast<int64_t>(c.seed)) +
         "," + kv::fmt_double(c.accuracy) + "," + kv::fmt_double(c.macro_f1) + "," +
         kv::fmt_int(c.best_epoch) + "\n";
  return s;
}

std::string AblationResult::json() const {
  nlohmann::json j;
  j["experiment"] = "ablation";
  j["config_hash"] = kv::fmt_hex64(config_hash);
  j["seed"] = seed;
  for (const Row& r : rows) {
    nlohmann::json e;
    e["accuracy_mean"] = r.acc_mean;
    e["accuracy_std"] = r.acc_std;
    e["macro_f1_mean"] = r.f1_mean;
    e["macro_f1_std"] = r.f1_std;
    j["variants"][variant_name(r.variant)] = e;
  }
  nlohmann::json runs = nlohmann::json::array();
  for (const AblationCell& c : cells)
    runs.push_back({{"variant", variant_name(c.variant)},
                    {"seed", c.seed},
                    {"accuracy", c.accuracy},
                    {"macro_f1", c.macro_f1},
                    {"best_epoch", c.best_epoch}});
  j["runs"] = runs;
  return j.dump(2) + "\n";
}

std::string AblationResult::table() const {
  // Ablations first, full model last, the way the reference table reads.
  const std::array<Variant, 4> order{Variant::no_cmaa, Variant::no_mie, Variant::no_tfl,
                                     Variant::full};
  std::string s = "setting    accuracy        macro_f1\n";
  for (Variant v : order) {
    const Row& r = row(v);
    char line[96];
    std::snprintf(line, sizeof line, "%-10s %-15s %-15s\n", variant_name(v),
                  format_mean_std(r.acc_mean, r.acc_std).c_str(),
                  format_mean_std(r.f1_mean, r.f1_std).c_str());
    s += line;
  }
  return s;
}

AblationResult run_ablation(const ModelConfig& base, const TrainConfig& base_train,
                            const EmotionDataset& ds, const std::vector<int>& seeds) {
  if (seeds.empty()) throw ContractError("run_ablation needs at least one seed");
  AblationResult out;
  for (Variant v : kVariants) {
    std::vector<double> accs, f1s;
    for (int s : seeds) {
      ModelConfig mc = base;
      mc.variant = v;
      TrainConfig tc = base_train;
      tc.seed = static_cast<uint64_t>(s);
      if (v == Variant::no_tfl) tc.lambda = 0.0;  // the smoothness term rides the feedback
      TrainResult tr = train(mc, tc, ds);
      EvalOptions opts;
      opts.lambda = tc.lambda;
      MetricsRecord rec = evaluate(tr.best, ds.test, opts);
      out.cells.push_back({v, tc.seed, rec.get("accuracy"), rec.get("macro_f1"), tr.best_epoch});
      accs.push_back(rec.get("accuracy"));
      f1s.push_back(rec.get("macro_f1"));
    }
    AblationResult::Row row;
    row.variant = v;
    row.acc_mean = 0.0;
    for (double a : accs) row.acc_mean += a;
    row.acc_mean /= static_cast<double>(accs.size());
    row.f1_mean = 0.0;
    for (double f : f1s) row.f1_mean += f;
    row.f1_mean /= static_cast<double>(f1s.size());
    row.acc_std = sample_std(accs);
    row.f1_std = sample_std(f1s);
    out.rows.push_back(row);
  }
  return out;
}

ScaleProfile measure_scale(ModelParams& params, std::span<const ModalitySession> sessions) {
  if (sessions.empty()) throw ContractError("measure_scale needs at least one session");
  ScaleProfile p;
  for (const ModalitySession& s : sessions) {
    EvalOutput ev = model_eval(params, s);
    for (int m = 0; m < 3; ++m)
      p.r_h[static_cast<size_t>(m)] =
          std::max(p.r_h[static_cast<size_t>(m)], ev.h_row_max[static_cast<size_t>(m)]);
  }
  return p;
}

namespace {

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double x : t.data) m = std::max(m, std::abs(x));
  return m;
}

double l2_norm(const Tensor& t) {
  double sq = 0.0;
  for (double x : t.data) sq += x * x;
  return std::sqrt(sq);
}

// Rows of layer_norm output obey ||gamma * xhat + beta|| <= max|gamma| sqrt(d) + ||beta||
// because the standardized row has norm at most sqrt(d).
double ln_row_cap(const LayerNormParams& ln) {
  const double d = static_cast<double>(ln.gamma.shape[0]);
  return max_abs(ln.gamma) * std::sqrt(d) + l2_norm(ln.beta);
}

// Layer norm Jacobian factor: the centering and rescaling projections have
// norm at most 1, the 1/std factor is at most 1/sqrt(eps).
double ln_lipschitz(const LayerNormParams& ln, double eps) {
  return max_abs(ln.gamma) / std::sqrt(eps);
}

// Frobenius-to-Frobenius constant of one causal self-attention branch with
// the LN1 factor folded in. Per head, with row caps R on the normed input:
//   softmax rows are 1/2-Lipschitz, ||A||_2 <= sqrt(T) for row-stochastic A,
//   so  L_head = sqrt(T) sv + T Rv (sq Rk + sk Rq) / (2 sqrt(dk)).
double attention_branch(TransformerBlockParams& b, int t_len) {
  const double t = static_cast<double>(t_len);
  const double r_in = ln_row_cap(b.ln1);
  double sq_sum = 0.0;
  for (AttentionHeadParams& h : b.heads) {
    const double dk = static_cast<double>(h.q.out_dim());
    const double sq = spectral_norm(h.q.weight);
    const double sk = spectral_norm(h.k.weight);
    const double sv = spectral_norm(h.v.weight);
    const double rq = sq * r_in + l2_norm(h.q.bias);
    const double rk = sk * r_in + l2_norm(h.k.bias);
    const double rv = sv * r_in + l2_norm(h.v.bias);
    const double lh = std::sqrt(t) * sv + t * rv * (sq * rk + sk * rq) / (2.0 * std::sqrt(dk));
    sq_sum += lh * lh;
  }
  return spectral_norm(b.out_proj.weight) * std::sqrt(sq_sum) * ln_lipschitz(b.ln1, b.ln_eps);
}

double ffn_branch(TransformerBlockParams& b) {
  return spectral_norm(b.ffn2.weight) * spectral_norm(b.ffn1.weight) *
         ln_lipschitz(b.ln2, b.ln_eps);
}

// Residual blocks compose as (1 + branch constant) per branch.
double encoder_lipschitz(EncoderParams& e, int t_len) {
  double l = spectral_norm(e.projection.weight);
  for (TransformerBlockParams& b : e.blocks)
    l *= (1.0 + attention_branch(b, t_len)) * (1.0 + ffn_branch(b));
  return l;
}

struct PairNorms {
  double sq, sk, sv, bq, bk, bv, dk;
};

PairNorms pair_norms(CmaaPairParams& p) {
  return {spectral_norm(p.query.weight), spectral_norm(p.key.weight),
          spectral_norm(p.value.weight), l2_norm(p.query.bias), l2_norm(p.key.bias),
          l2_norm(p.value.bias), static_cast<double>(p.query.out_dim())};
}

}  // namespace

double lipschitz_bound(ModelParams& params, Modality m, int t_len, const ScaleProfile& profile) {
  const ModelConfig& cfg = params.cfg;
  const int mi = modality_index(m);
  const double t = static_cast<double>(t_len);

  // Raw input to encoder features; positional offsets are additive and drop out.
  const double l_enc = encoder_lipschitz(params.encoders[static_cast<size_t>(mi)], t_len);

  std::array<double, 3> r{profile.r_used(0), profile.r_used(1), profile.r_used(2)};

  // Sensitivity of each aligned feature to the perturbed modality's encoder
  // output, plus a per-row cap on the aligned features themselves.
  std::array<double, 3> d_g{0.0, 0.0, 0.0};
  std::array<double, 3> r_g{0.0, 0.0, 0.0};
  if (cfg.uses_cmaa()) {
    for (int i = 0; i < 3; ++i) {
      const int j = i == 0 ? 1 : 0;
      const int k = i == 2 ? 1 : 2;
      PairNorms pj = pair_norms(params.cmaa.pair(static_cast<Modality>(i), static_cast<Modality>(j)));
      PairNorms pk = pair_norms(params.cmaa.pair(static_cast<Modality>(i), static_cast<Modality>(k)));
      r_g[static_cast<size_t>(i)] = 0.5 * ((pj.sv * r[static_cast<size_t>(j)] + pj.bv) +
                                           (pk.sv * r[static_cast<size_t>(k)] + pk.bv));
      auto query_side = [&](const PairNorms& p, int src) {
        // Only the queries move: |dA| <= (1/2) sq |dH| Rk sqrt(T) / sqrt(dk),
        // then times ||V||_2 <= sqrt(T) Rv of the fixed source.
        const double rk = p.sk * r[static_cast<size_t>(src)] + p.bk;
        const double rv = p.sv * r[static_cast<size_t>(src)] + p.bv;
        return 0.5 * t * p.sq * rk * rv / std::sqrt(p.dk);
      };
      auto kv_side = [&](const PairNorms& p, int qi) {
        // Keys and values move: A dV plus dA V with queries capped by Rq.
        const double rq = p.sq * r[static_cast<size_t>(qi)] + p.bq;
        const double rv = p.sv * r[static_cast<size_t>(mi)] + p.bv;
        return std::sqrt(t) * p.sv + 0.5 * t * p.sk * rq * rv / std::sqrt(p.dk);
      };
      if (i == mi) {
        d_g[static_cast<size_t>(i)] = 0.5 * (query_side(pj, j) + query_side(pk, k));
      } else if (j == mi || k == mi) {
        const PairNorms& pm = j == mi ? pj : pk;
        d_g[static_cast<size_t>(i)] = 0.5 * kv_side(pm, i);
      }
    }
  } else {
    d_g[static_cast<size_t>(mi)] = 1.0;
    r_g = r;
  }

  // Fused feature sensitivity: z_t = sum_i w_i g_i with w_i <= 1, so
  // |dZ| <= sum_i (w_i |dG_i| + R_g_i |dw_i|).
  double l_z = 0.0;
  if (cfg.uses_mie()) {
    std::array<double, 3> e{};
    double e_sum = 0.0;
    std::array<double, 3> u_max{};
    for (int i = 0; i < 3; ++i) {
      std::vector<LinearParams>& mlp = params.mie.mlp_for(static_cast<Modality>(i));
      double s1 = spectral_norm(mlp[0].weight);
      double s2 = spectral_norm(mlp[1].weight);
      const double r_hg = std::sqrt(r[static_cast<size_t>(i)] * r[static_cast<size_t>(i)] +
                                    r_g[static_cast<size_t>(i)] * r_g[static_cast<size_t>(i)]);
      u_max[static_cast<size_t>(i)] = s2 * (s1 * r_hg + l2_norm(mlp[0].bias)) + l2_norm(mlp[1].bias);
      const double d_h = i == mi ? 1.0 : 0.0;
      e[static_cast<size_t>(i)] = 0.25 * s2 * s1 * (d_h + d_g[static_cast<size_t>(i)]);
      e_sum += e[static_cast<size_t>(i)];
    }
    for (int i = 0; i < 3; ++i) {
      double dw;
      if (cfg.mie_softmax) {
        dw = 0.5 * e_sum;
      } else {
        // Scores are sigmoids, so each is at least sigmoid(-U_max); the
        // normalizer is floored by that, keeping 1/S finite.
        double s_floor = 0.0;
        for (int j = 0; j < 3; ++j)
          s_floor += 1.0 / (1.0 + std::exp(std::min(u_max[static_cast<size_t>(j)], 700.0))) + kMieEps;
        dw = (e[static_cast<size_t>(i)] + e_sum) / s_floor;
      }
      l_z += d_g[static_cast<size_t>(i)] + r_g[static_cast<size_t>(i)] * dw;
    }
  } else {
    for (int i = 0; i < 3; ++i) l_z += d_g[static_cast<size_t>(i)] / 3.0;
  }

  // Head: softmax(classifier(feedback([z, y_prev]))). The y feedback chain
  // amplifies one step's change across later steps by at most
  // sum_k L_y^k over the remaining horizon.
  double l_out = 0.5;
  for (LinearParams& c : params.tfl.classifier) l_out *= spectral_norm(c.weight);
  double gain = 1.0;
  if (cfg.uses_tfl()) {
    l_out *= spectral_norm_cols(params.tfl.feedback.weight, 0, cfg.width);
    const double l_y = contraction_bound(params.tfl);
    gain = 0.0;
    double pw = 1.0;
    for (int s = 0; s < t_len; ++s) {
      gain += pw;
      pw *= l_y;
    }
  }
  return l_enc * l_z * l_out * gain;
}

LipschitzReport lipschitz_empirical(ModelParams& params, const ModalitySession& session,
                                    Modality m, int n_samples, double eps_scale, uint64_t seed,
                                    const ScaleProfile& profile) {
  if (n_samples < 1) throw ContractError("lipschitz_empirical needs n_samples >= 1");
  if (eps_scale <= 0.0) throw ContractError("lipschitz_empirical needs eps_scale > 0");
  const int mi = modality_index(m);
  const ModalityStream& stream = session.streams[static_cast<size_t>(mi)];
  std::vector<int> present_steps;
  for (int t = 0; t < session.steps(); ++t)
    if (stream.present[static_cast<size_t>(t)]) present_steps.push_back(t);
  if (present_steps.empty())
    throw ContractError(std::string("no present ") + kModalityNames[static_cast<size_t>(mi)] +
                        " steps to perturb");

  LipschitzReport rep;
  rep.modality = m;
  rep.samples = n_samples;
  rep.eps_scale = eps_scale;
  for (int i = 0; i < 3; ++i) rep.r_used[static_cast<size_t>(i)] = profile.r_used(i);

  EvalOutput base = model_eval(params, session);
  rep.r_observed = base.h_row_max;
  const int dim = stream.dim();

  Rng rng(derive_seed(seed, "lipschitz", static_cast<uint64_t>(mi)));
  ModalitySession probe = session;
  for (int n = 0; n < n_samples; ++n) {
    const int t = present_steps[static_cast<size_t>(rng.uniform_int(static_cast<int>(present_steps.size())))];
    std::vector<double> dir(static_cast<size_t>(dim));
    double norm = 0.0;
    for (double& x : dir) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    Tensor& raw = probe.streams[static_cast<size_t>(mi)].raw;
    for (int j = 0; j < dim; ++j) raw.at(t, j) += eps_scale * dir[static_cast<size_t>(j)] / norm;

    EvalOutput ev = model_eval(params, probe);
    double sq = 0.0;
    for (int s = 0; s < session.steps(); ++s)
      for (int c = 0; c < kNumClasses; ++c) {
        const double d = ev.probs[static_cast<size_t>(s)].p.at(c) -
                         base.probs[static_cast<size_t>(s)].p.at(c);
        sq += d * d;
      }
    rep.max_ratio = std::max(rep.max_ratio, std::sqrt(sq) / eps_scale);
    for (int i = 0; i < 3; ++i)
      rep.r_observed[static_cast<size_t>(i)] =
          std::max(rep.r_observed[static_cast<size_t>(i)], ev.h_row_max[static_cast<size_t>(i)]);

    // Restore the probed row exactly.
    for (int j = 0; j < dim; ++j)
      raw.at(t, j) = stream.raw.at(t, j);
  }

  rep.scale_ok = true;
  for (int i = 0; i < 3; ++i)
    if (rep.r_observed[static_cast<size_t>(i)] > rep.r_used[static_cast<size_t>(i)])
      rep.scale_ok = false;
  rep.bound = lipschitz_bound(params, m, session.steps(), profile);
  return rep;
}

namespace {

char fmt_buf[256];

std::string fmt(const char* pattern, double a, double b = 0.0) {
  std::snprintf(fmt_buf, sizeof fmt_buf, pattern, a, b);
  return fmt_buf;
}

}  // namespace

std::vector<TheoryCheck> check_grad(uint64_t seed) {
  GeneratorConfig gen;
  gen.seed = derive_seed(seed, "data");
  gen.sessions_train = 2;
  gen.sessions_val = 0;
  gen.sessions_test = 0;
  gen.steps = 3;
  gen.dims = {5, 6, 4};
  EmotionDataset ds = generate_dataset(gen);

  ModelConfig mc;
  mc.width = 8;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.ffn_mult = 2;
  mc.cmaa_dk = 8;
  mc.mie_hidden = 8;
  mc.cls_hidden = 0;
  mc.t_max = 4;
  mc.in_dims = gen.dims;
  ModelParams params = ModelParams::init(mc, derive_seed(seed, "params"));

  const double lambda = 0.1;

  // The tape treats each step's feedback input as a constant, so the probe
  // differentiates the loss with those inputs frozen at their base values:
  // that is exactly the function whose gradient the optimizer consumes.
  std::vector<Tensor> frozen;
  for (const ModalitySession& s : ds.train) {
    EvalOutput base = model_eval(params, s);
    Tensor fb = Tensor::zeros({s.steps(), kNumClasses});
    for (int t = 0; t < s.steps(); ++t)
      for (int c = 0; c < kNumClasses; ++c)
        fb.at(t, c) = t == 0 ? 1.0 / kNumClasses : base.probs[static_cast<size_t>(t - 1)].p.at(c);
    frozen.push_back(std::move(fb));
  }

  auto loss_value = [&]() {
    Tape tape;
    Binder bind(tape);
    double total = 0.0;
    for (size_t i = 0; i < ds.train.size(); ++i) {
      ForwardCtx ctx;
      ctx.frozen_feedback = &frozen[i];
      ModelForward fwd = model_forward(tape, bind, params, ds.train[i], ctx);
      SequenceLossVals l = sequence_loss_vals(tape, fwd.y, ds.train[i].labels, lambda, false);
      total += tape.value(l.total)[0];
    }
    return total / static_cast<double>(ds.train.size());
  };

  // One analytic pass over the same objective.
  Tape tape;
  Binder bind(tape);
  Val sum;
  bool first = true;
  for (size_t i = 0; i < ds.train.size(); ++i) {
    ForwardCtx ctx;
    ctx.frozen_feedback = &frozen[i];
    ModelForward fwd = model_forward(tape, bind, params, ds.train[i], ctx);
    SequenceLossVals l = sequence_loss_vals(tape, fwd.y, ds.train[i].labels, lambda, false);
    sum = first ? l.total : tape.add(sum, l.total);
    first = false;
  }
  Val objective = tape.scale(sum, 1.0 / static_cast<double>(ds.train.size()));
  tape.backward(objective);

  std::vector<NamedParam> named = params.named_params();
  std::vector<GradCheckBlock> blocks;
  blocks.reserve(named.size());
  for (const NamedParam& np : named)
    blocks.push_back({np.name, np.tensor, tape.grad(bind.val_of(*np.tensor))});

  GradCheckReport report = finite_diff_check(loss_value, blocks, 1e-5, 1e-4);

  std::vector<TheoryCheck> out;
  for (const GradCheckReport::Row& row : report.rows)
    out.push_back({"grad " + row.name, row.max_rel_err <= report.tol,
                   fmt("max rel err %.3g", row.max_rel_err) +
                       (row.worst_index >= 0 ? " at index " + std::to_string(row.worst_index) : "")});
  out.push_back({"grad all parameter blocks", report.pass,
                 fmt("worst rel err %.3g over ", report.max_rel_err) +
                     std::to_string(report.rows.size()) + " blocks, tol 1e-4"});
  return out;
}

std::vector<TheoryCheck> check_fixed_point(uint64_t seed) {
  Rng init_rng(derive_seed(seed, "tfl"));
  TflParams p = TflParams::init(init_rng, 16, kNumClasses, 0, 0.05);
  const double bound = contraction_bound(p);

  std::vector<TheoryCheck> out;
  out.push_back({"contraction bound below 1", bound < 1.0, fmt("bound = %.6f", bound)});

  const int trials = 100;
  int converged = 0;
  int max_iters = 0;
  double worst_residual = 0.0, worst_kl = 0.0, worst_unique = 0.0, worst_ratio = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, "trial", static_cast<uint64_t>(trial)));
    std::vector<double> z(16);
    for (double& x : z) x = rng.normal();
    auto random_simplex = [&]() {
      std::vector<double> u(kNumClasses);
      double mx = -1e300;
      for (double& x : u) {
        x = rng.normal();
        mx = std::max(mx, x);
      }
      double s = 0.0;
      for (double& x : u) {
        x = std::exp(x - mx);
        s += x;
      }
      for (double& x : u) x /= s;
      return ProbabilityVector::from(u);
    };
    FixedPointResult fp = iterate_fixed_point(z, random_simplex(), p, 500, 1e-9);
    if (fp.converged) ++converged;
    max_iters = std::max(max_iters, fp.iterations);

    ProbabilityVector once = tfl_step_eval(z, fp.y_star, p);
    double residual = 0.0;
    for (int c = 0; c < kNumClasses; ++c)
      residual = std::max(residual, std::abs(once.p.at(c) - fp.y_star.p.at(c)));
    worst_residual = std::max(worst_residual, residual);
    worst_kl = std::max(worst_kl, kl_divergence(fp.y_star, once));

    FixedPointResult fp2 = iterate_fixed_point(z, random_simplex(), p, 500, 1e-9);
    double gap = 0.0;
    for (int c = 0; c < kNumClasses; ++c)
      gap = std::max(gap, std::abs(fp2.y_star.p.at(c) - fp.y_star.p.at(c)));
    worst_unique = std::max(worst_unique, gap);

    for (size_t i = 2; i < fp.trajectory.size(); ++i) {
      double prev = 0.0, cur = 0.0;
      for (int c = 0; c < kNumClasses; ++c) {
        const double a = fp.trajectory[i - 1].p.at(c) - fp.trajectory[i - 2].p.at(c);
        const double b = fp.trajectory[i].p.at(c) - fp.trajectory[i - 1].p.at(c);
        prev += a * a;
        cur += b * b;
      }
      prev = std::sqrt(prev);
      cur = std::sqrt(cur);
      if (prev > 1e-13) worst_ratio = std::max(worst_ratio, cur / prev);
    }
  }
  out.push_back({"fixed-point convergence (tol 1e-9 within 500 iters)", converged == trials,
                 std::to_string(converged) + "/100 converged, max " + std::to_string(max_iters) +
                     " iters"});
  out.push_back({"fixed-point residual below 1e-8", worst_residual < 1e-8,
                 fmt("max extra-step move %.3g", worst_residual)});
  out.push_back(
      {"fixed-point KL residual below 1e-8", worst_kl < 1e-8, fmt("max KL %.3g", worst_kl)});
  out.push_back({"fixed-point uniqueness across starts (1e-8)", worst_unique < 1e-8,
                 fmt("max cross-start gap %.3g", worst_unique)});
  out.push_back({"contraction ratios within bound + 1e-6", worst_ratio <= bound + 1e-6,
                 fmt("max ratio %.6f vs bound %.6f", worst_ratio, bound)});
  return out;
}

std::vector<TheoryCheck> check_lipschitz(uint64_t seed) {
  GeneratorConfig gen;
  gen.seed = derive_seed(seed, "data");
  gen.sessions_train = 1;
  gen.sessions_val = 0;
  gen.sessions_test = 0;
  gen.steps = 8;
  gen.dims = {6, 7, 5};
  EmotionDataset ds = generate_dataset(gen);
  const ModalitySession& session = ds.train[0];

  ModelConfig mc;
  mc.width = 8;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.ffn_mult = 2;
  mc.cmaa_dk = 8;
  mc.mie_hidden = 8;
  mc.cls_hidden = 0;
  mc.t_max = 8;
  mc.in_dims = gen.dims;
  ModelParams params = ModelParams::init(mc, derive_seed(seed, "params"));

  std::vector<TheoryCheck> out;
  auto run = [&](const ModalitySession& s, const std::string& tag, Modality m) {
    ScaleProfile profile = measure_scale(params, std::span<const ModalitySession>(&s, 1));
    LipschitzReport rep =
        lipschitz_empirical(params, s, m, 1000, 1e-3, derive_seed(seed, "probe"), profile);
    out.push_back({std::string("lipschitz ") + kModalityNames[static_cast<size_t>(modality_index(m))] + tag,
                   rep.ok(),
                   fmt("empirical %.4g <= bound %.4g", rep.max_ratio, rep.bound) +
                       (rep.scale_ok ? "" : " (scale assumption violated)")});
  };
  for (int m = 0; m < 3; ++m) run(session, "", static_cast<Modality>(m));
  for (int m = 0; m < 3; ++m) {
    const int j = (m + 1) % 3;
    ModalitySession zeroed = session;
    std::vector<uint8_t> keep(static_cast<size_t>(session.steps()), 0);
    zeroed.streams[static_cast<size_t>(j)] =
        apply_missing_mask(session.streams[static_cast<size_t>(j)], keep);
    run(zeroed, std::string(" with ") + kModalityNames[static_cast<size_t>(j)] + " zeroed",
        static_cast<Modality>(m));
  }
  return out;
}

std::string artifact_path(const std::string& dir, const std::string& experiment,
                          uint64_t config_hash, uint64_t seed, const std::string& ext) {
  std::string p = dir;
  if (!p.empty() && p.back() != '/') p += '/';
  return p + experiment + "_" + kv::fmt_hex64(config_hash) + "_" +
         kv::fmt_int(static_cast<int64_t>(seed)) + "." + ext;
}

}  // namespace affectfuse
