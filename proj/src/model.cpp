// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "affectfuse/error.hpp"
#include "affectfuse/kvparse.hpp"

namespace affectfuse {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_cmaa: return "no_cmaa";
    case Variant::no_mie: return "no_mie";
    case Variant::no_tfl: return "no_tfl";
  }
  throw ContractError("bad variant value");
}

Variant variant_from(const std::string& s) {
  for (Variant v : kVariants)
    if (s == variant_name(v)) return v;
  throw ConfigError("model.variant: unknown variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (width < 1) throw ConfigError("model.width must be >= 1");
  if (enc_layers < 1) throw ConfigError("model.enc_layers must be >= 1");
  if (enc_heads < 1) throw ConfigError("model.enc_heads must be >= 1");
  if (width % enc_heads != 0) throw ConfigError("model.width must be divisible by model.enc_heads");
  if (ffn_mult < 1) throw ConfigError("model.ffn_mult must be >= 1");
  if (cmaa_dk < 1) throw ConfigError("model.cmaa_dk must be >= 1");
  if (mie_hidden < 1) throw ConfigError("model.mie_hidden must be >= 1");
  if (cls_hidden < 0) throw ConfigError("model.cls_hidden must be >= 0");
  if (t_max < 1) throw ConfigError("model.t_max must be >= 1");
  if (ln_eps <= 0.0) throw ConfigError("model.ln_eps must be > 0");
  for (int m = 0; m < 3; ++m)
    if (in_dims[static_cast<size_t>(m)] < 1)
      throw ConfigError(std::string("model.in_dim_") + kModalityNames[static_cast<size_t>(m)] +
                        " must be >= 1");
}

std::string ModelConfig::canonical_text() const {
  using namespace kv;
  std::string s;
  s += "model.cls_hidden = " + fmt_int(cls_hidden) + "\n";
  s += "model.cmaa_dk = " + fmt_int(cmaa_dk) + "\n";
  s += "model.enc_heads = " + fmt_int(enc_heads) + "\n";
  s += "model.enc_layers = " + fmt_int(enc_layers) + "\n";
  s += "model.ffn_mult = " + fmt_int(ffn_mult) + "\n";
  s += "model.in_dim_audio = " + fmt_int(in_dims[0]) + "\n";
  s += "model.in_dim_text = " + fmt_int(in_dims[2]) + "\n";
  s += "model.in_dim_visual = " + fmt_int(in_dims[1]) + "\n";
  s += "model.ln_eps = " + fmt_double(ln_eps) + "\n";
  s += "model.mie_hidden = " + fmt_int(mie_hidden) + "\n";
  s += "model.mie_shared = " + fmt_bool(mie_shared) + "\n";
  s += "model.mie_softmax = " + fmt_bool(mie_softmax) + "\n";
  s += "model.t_max = " + fmt_int(t_max) + "\n";
  s += "model.variant = " + std::string(variant_name(variant)) + "\n";
  s += "model.width = " + fmt_int(width) + "\n";
  return s;
}

uint64_t ModelConfig::fingerprint() const { return fnv1a64(canonical_text()); }

ModelConfig ModelConfig::from_canonical(const std::string& text) {
  ModelConfig cfg;
  std::map<std::string, std::string> seen;
  for (auto& [k, v] : kv::parse_flat(text)) seen.emplace(k, v);
  auto take = [&](const std::string& key) {
    auto it = seen.find(key);
    if (it == seen.end()) throw ConfigError("model config missing key " + key);
    std::string v = it->second;
    seen.erase(it);
    return v;
  };
  auto take_i = [&](const std::string& key) { return static_cast<int>(kv::parse_int(key, take(key))); };
  cfg.cls_hidden = take_i("model.cls_hidden");
  cfg.cmaa_dk = take_i("model.cmaa_dk");
  cfg.enc_heads = take_i("model.enc_heads");
  cfg.enc_layers = take_i("model.enc_layers");
  cfg.ffn_mult = take_i("model.ffn_mult");
  cfg.in_dims[0] = take_i("model.in_dim_audio");
  cfg.in_dims[2] = take_i("model.in_dim_text");
  cfg.in_dims[1] = take_i("model.in_dim_visual");
  cfg.ln_eps = kv::parse_double("model.ln_eps", take("model.ln_eps"));
  cfg.mie_hidden = take_i("model.mie_hidden");
  cfg.mie_shared = kv::parse_bool("model.mie_shared", take("model.mie_shared"));
  cfg.mie_softmax = kv::parse_bool("model.mie_softmax", take("model.mie_softmax"));
  cfg.t_max = take_i("model.t_max");
  cfg.variant = variant_from(take("model.variant"));
  cfg.width = take_i("model.width");
  if (!seen.empty()) throw ConfigError("model config has unknown key " + seen.begin()->first);
  cfg.validate();
  return cfg;
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  for (int m = 0; m < 3; ++m) {
    Rng rng(derive_seed(seed, "init.enc", static_cast<uint64_t>(m)));
    p.encoders[static_cast<size_t>(m)] =
        EncoderParams::init(rng, cfg.in_dims[static_cast<size_t>(m)], cfg.width, cfg.enc_layers,
                            cfg.enc_heads, cfg.ffn_mult * cfg.width, cfg.t_max, cfg.ln_eps);
  }
  if (cfg.uses_cmaa()) {
    Rng rng(derive_seed(seed, "init.cmaa"));
    p.cmaa = CmaaParams::init(rng, cfg.width, cfg.cmaa_dk);
  }
  if (cfg.uses_mie()) {
    Rng rng(derive_seed(seed, "init.mie"));
    p.mie = MieParams::init(rng, cfg.width, cfg.mie_hidden, cfg.mie_shared);
  }
  {
    Rng rng(derive_seed(seed, "init.tfl"));
    p.tfl = TflParams::init_glorot(rng, cfg.width, kNumClasses, cfg.cls_hidden);
    if (!cfg.uses_tfl()) p.tfl.feedback = LinearParams{};  // classifier reads z directly
  }
  return p;
}

namespace {

void push_linear(std::vector<NamedParam>& out, const std::string& name, LinearParams& p) {
  out.push_back({name + ".weight", &p.weight});
  out.push_back({name + ".bias", &p.bias});
}

void push_block(std::vector<NamedParam>& out, const std::string& name,
                TransformerBlockParams& b) {
  out.push_back({name + ".ln1.gamma", &b.ln1.gamma});
  out.push_back({name + ".ln1.beta", &b.ln1.beta});
  for (size_t h = 0; h < b.heads.size(); ++h) {
    const std::string hn = name + ".h" + std::to_string(h);
    push_linear(out, hn + ".q", b.heads[h].q);
    push_linear(out, hn + ".k", b.heads[h].k);
    push_linear(out, hn + ".v", b.heads[h].v);
  }
  push_linear(out, name + ".out", b.out_proj);
  out.push_back({name + ".ln2.gamma", &b.ln2.gamma});
  out.push_back({name + ".ln2.beta", &b.ln2.beta});
  push_linear(out, name + ".ffn1", b.ffn1);
  push_linear(out, name + ".ffn2", b.ffn2);
}

}  // namespace

std::vector<NamedParam> ModelParams::named_params() {
  std::vector<NamedParam> out;
  for (int m = 0; m < 3; ++m) {
    const std::string en = std::string("enc.") + kModalityNames[static_cast<size_t>(m)];
    EncoderParams& e = encoders[static_cast<size_t>(m)];
    push_linear(out, en + ".proj", e.projection);
    out.push_back({en + ".pos", &e.positional});
    for (size_t l = 0; l < e.blocks.size(); ++l)
      push_block(out, en + ".b" + std::to_string(l), e.blocks[l]);
  }
  if (cfg.uses_cmaa())
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (i == j) continue;
        const std::string pn = std::string("cmaa.") + kModalityNames[static_cast<size_t>(i)] +
                               "_" + kModalityNames[static_cast<size_t>(j)];
        CmaaPairParams& pp = cmaa.pair(static_cast<Modality>(i), static_cast<Modality>(j));
        push_linear(out, pn + ".query", pp.query);
        push_linear(out, pn + ".key", pp.key);
        push_linear(out, pn + ".value", pp.value);
      }
  if (cfg.uses_mie())
    for (size_t i = 0; i < mie.mlps.size(); ++i) {
      const std::string mn =
          std::string("mie.") + (cfg.mie_shared ? "shared" : kModalityNames[i]);
      for (size_t l = 0; l < mie.mlps[i].size(); ++l)
        push_linear(out, mn + ".l" + std::to_string(l), mie.mlps[i][l]);
    }
  if (cfg.uses_tfl()) push_linear(out, "tfl.feedback", tfl.feedback);
  for (size_t l = 0; l < tfl.classifier.size(); ++l)
    push_linear(out, "tfl.cls" + std::to_string(l), tfl.classifier[l]);
  return out;
}

ModelForward model_forward(Tape& tape, Binder& bind, ModelParams& params,
                           const ModalitySession& session, const ForwardCtx& ctx) {
  const ModelConfig& cfg = params.cfg;
  const int t_len = session.steps();
  if (t_len < 1) throw ContractError("model_forward needs a nonempty session");
  for (int m = 0; m < 3; ++m)
    if (session.streams[static_cast<size_t>(m)].dim() != cfg.in_dims[static_cast<size_t>(m)])
      throw DimensionError(std::string(kModalityNames[static_cast<size_t>(m)]) +
                           " stream dim " + std::to_string(session.streams[static_cast<size_t>(m)].dim()) +
                           " does not match the model's " +
                           std::to_string(cfg.in_dims[static_cast<size_t>(m)]));

  ModelForward out;
  for (int m = 0; m < 3; ++m)
    out.h[static_cast<size_t>(m)] = encode_modality(
        tape, bind, session.streams[static_cast<size_t>(m)], params.encoders[static_cast<size_t>(m)], ctx);

  if (cfg.uses_cmaa()) {
    for (int i = 0; i < 3; ++i) {
      const int j = i == 0 ? 1 : 0;
      const int k = i == 2 ? 1 : 2;
      Val g_ij = cmaa_pairwise(tape, bind, out.h[static_cast<size_t>(i)], out.h[static_cast<size_t>(j)],
                               params.cmaa.pair(static_cast<Modality>(i), static_cast<Modality>(j)), ctx);
      Val g_ik = cmaa_pairwise(tape, bind, out.h[static_cast<size_t>(i)], out.h[static_cast<size_t>(k)],
                               params.cmaa.pair(static_cast<Modality>(i), static_cast<Modality>(k)), ctx);
      out.g[static_cast<size_t>(i)] = cmaa_aggregate(tape, g_ij, g_ik);
    }
  } else {
    out.g = out.h;
  }

  if (cfg.uses_mie()) {
    out.weights = mie_weights(tape, bind, out.h, out.g, params.mie, cfg.mie_softmax, ctx);
  } else {
    Val third = tape.constant(Tensor::full({t_len}, 1.0 / 3.0));
    out.weights = MieWeightVals{{third, third, third}};
  }

  out.z = fuse(tape, out.g, out.weights);

  if (cfg.uses_tfl()) {
    out.y = run_sequence(tape, bind, out.z, params.tfl, ProbabilityVector::uniform(kNumClasses),
                         ctx.frozen_feedback);
  } else {
    Val logits = mlp_forward(tape, bind, out.z, params.tfl.classifier);
    Val probs = tape.softmax_rows(logits);
    out.y.reserve(static_cast<size_t>(t_len));
    for (int t = 0; t < t_len; ++t) out.y.push_back(tape.take_row(probs, t));
  }
  return out;
}

std::vector<ProbabilityVector> extract_probs(const Tape& tape, const std::vector<Val>& y) {
  std::vector<ProbabilityVector> out;
  out.reserve(y.size());
  for (Val v : y) out.push_back(ProbabilityVector::from(tape.value(v)));
  return out;
}

EvalOutput model_eval(ModelParams& params, const ModalitySession& session) {
  Tape tape;
  Binder bind(tape);
  ForwardCtx ctx;
  Diagnostics diag;
  ctx.diag = &diag;
  ModelForward fwd = model_forward(tape, bind, params, session, ctx);
  EvalOutput out;
  out.probs = extract_probs(tape, fwd.y);
  out.weights = gather_confidence(tape, fwd.weights);
  for (int m = 0; m < 3; ++m) {
    const Tensor h = tape.value_tensor(fwd.h[static_cast<size_t>(m)]);
    for (int t = 0; t < h.shape[0]; ++t) {
      double sq = 0.0;
      for (int j = 0; j < h.shape[1]; ++j) sq += h.at(t, j) * h.at(t, j);
      out.h_row_max[static_cast<size_t>(m)] =
          std::max(out.h_row_max[static_cast<size_t>(m)], std::sqrt(sq));
    }
  }
  return out;
}

}  // namespace affectfuse
