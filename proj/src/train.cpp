// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "affectfuse/error.hpp"
#include "affectfuse/io.hpp"
#include "affectfuse/kvparse.hpp"
#include "affectfuse/parallel.hpp"

namespace affectfuse {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (lr <= 0.0) throw ConfigError("train.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (warmup < 0) throw ConfigError("train.warmup must be >= 0");
  for (size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] < 1) throw ConfigError("train.decay_epochs entries must be >= 1");
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])
      throw ConfigError("train.decay_epochs must be strictly increasing");
  }
  if (decay_factor <= 0.0 || decay_factor > 1.0)
    throw ConfigError("train.decay_factor must be in (0, 1]");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train.dropout must be in [0, 1)");
  if (lambda < 0.0) throw ConfigError("train.lambda must be >= 0");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
}

std::string TrainConfig::canonical_text() const {
  using namespace kv;
  std::string s;
  s += "train.batch = " + fmt_int(batch) + "\n";
  s += "train.decay_epochs = " + fmt_int_list(decay_epochs) + "\n";
  s += "train.decay_factor = " + fmt_double(decay_factor) + "\n";
  s += "train.dropout = " + fmt_double(dropout) + "\n";
  s += "train.epochs = " + fmt_int(epochs) + "\n";
  s += "train.lambda = " + fmt_double(lambda) + "\n";
  s += "train.lr = " + fmt_double(lr) + "\n";
  s += "train.patience = " + fmt_int(patience) + "\n";
  s += "train.seed = " + fmt_int(static_cast<int64_t>(seed)) + "\n";
  s += "train.warmup = " + fmt_int(warmup) + "\n";
  s += "train.weight_decay = " + fmt_double(weight_decay) + "\n";
  return s;
}

TrainConfig TrainConfig::from_canonical(const std::string& text) {
  TrainConfig cfg;
  std::map<std::string, std::string> seen;
  for (auto& [k, v] : kv::parse_flat(text)) seen.emplace(k, v);
  auto take = [&](const std::string& key) {
    auto it = seen.find(key);
    if (it == seen.end()) throw ConfigError("train config missing key " + key);
    std::string v = it->second;
    seen.erase(it);
    return v;
  };
  cfg.batch = static_cast<int>(kv::parse_int("train.batch", take("train.batch")));
  cfg.decay_epochs = kv::parse_int_list("train.decay_epochs", take("train.decay_epochs"));
  cfg.decay_factor = kv::parse_double("train.decay_factor", take("train.decay_factor"));
  cfg.dropout = kv::parse_double("train.dropout", take("train.dropout"));
  cfg.epochs = static_cast<int>(kv::parse_int("train.epochs", take("train.epochs")));
  cfg.lambda = kv::parse_double("train.lambda", take("train.lambda"));
  cfg.lr = kv::parse_double("train.lr", take("train.lr"));
  cfg.patience = static_cast<int>(kv::parse_int("train.patience", take("train.patience")));
  cfg.seed = static_cast<uint64_t>(kv::parse_int("train.seed", take("train.seed")));
  cfg.warmup = static_cast<int>(kv::parse_int("train.warmup", take("train.warmup")));
  cfg.weight_decay = kv::parse_double("train.weight_decay", take("train.weight_decay"));
  if (!seen.empty()) throw ConfigError("train config has unknown key " + seen.begin()->first);
  cfg.validate();
  return cfg;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 1) throw ContractError("lr_schedule epochs are 1-based");
  double lr = cfg.lr;
  if (cfg.warmup > 0 && epoch <= cfg.warmup) lr = cfg.lr * epoch / cfg.warmup;
  for (int d : cfg.decay_epochs)
    if (epoch >= d) lr *= cfg.decay_factor;
  return lr;
}

AdamState AdamState::init(const std::vector<NamedParam>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const NamedParam& p : params) {
    st.m.emplace_back(p.tensor->data.size(), 0.0);
    st.v.emplace_back(p.tensor->data.size(), 0.0);
  }
  return st;
}

void adamw_step(const std::vector<NamedParam>& params,
                const std::vector<std::vector<double>>& grads, AdamState& st, double lr,
                double weight_decay) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw ContractError("adamw_step: parameter, gradient, and state counts disagree");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& p = params[i].tensor->data;
    const std::vector<double>& g = grads[i];
    if (g.size() != p.size())
      throw DimensionError("adamw_step: gradient size mismatch for " + params[i].name);
    std::vector<double>& m = st.m[i];
    std::vector<double>& v = st.v[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g[j];
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= lr * (m_hat / (std::sqrt(v_hat) + kAdamEps) + weight_decay * p[j]);
    }
  }
}

bool EarlyStopper::observe(int epoch, double metric) {
  if (best_epoch == 0 || metric > best) {
    best = metric;
    best_epoch = epoch;
    return false;
  }
  return epoch - best_epoch >= patience;
}

std::string history_csv(const TrainHistory& h, uint64_t config_hash, uint64_t seed) {
  std::string s = "# config_hash=" + kv::fmt_hex64(config_hash) +
                  " seed=" + kv::fmt_int(static_cast<int64_t>(seed)) + "\n";
  s += "epoch,lr,train_ce,train_kl,train_total,val_total,val_acc,val_macro_f1\n";
  for (const EpochRecord& r : h.epochs) {
    s += kv::fmt_int(r.epoch) + "," + kv::fmt_double(r.lr) + "," + kv::fmt_double(r.train_ce) +
         "," + kv::fmt_double(r.train_kl) + "," + kv::fmt_double(r.train_total) + "," +
         kv::fmt_double(r.val_total) + "," + kv::fmt_double(r.val_acc) + "," +
         kv::fmt_double(r.val_macro_f1) + "\n";
  }
  return s;
}

namespace {

std::vector<ModalitySession> injected_copy(const std::vector<ModalitySession>& split,
                                           const EvalOptions& opts) {
  if (opts.missing_rate <= 0.0) return split;
  std::vector<ModalitySession> out;
  out.reserve(split.size());
  const std::array<double, 3> rates{opts.missing_rate, opts.missing_rate, opts.missing_rate};
  for (const ModalitySession& s : split) {
    Rng rng(derive_seed(opts.seed, "eval.missing", s.id));
    out.push_back(inject_missing(s, rates, opts.mode, rng));
  }
  return out;
}

MetricsRecord aggregate_metrics(const std::vector<ModalitySession>& sessions,
                                const std::vector<std::vector<ProbabilityVector>>& preds,
                                const EvalOptions& opts) {
  std::vector<int> flat_pred, flat_label;
  double ce = 0.0, kl = 0.0, total = 0.0;
  int64_t steps = 0;
  for (size_t i = 0; i < sessions.size(); ++i) {
    const ModalitySession& s = sessions[i];
    const std::vector<ProbabilityVector>& p = preds[i];
    if (static_cast<int>(p.size()) != s.steps())
      throw ContractError("predictor returned " + std::to_string(p.size()) + " rows for a " +
                          std::to_string(s.steps()) + " step session");
    LossBreakdown lb = sequence_loss(p, s.labels, opts.lambda);
    ce += lb.ce;
    kl += lb.kl;
    total += lb.total;
    for (int t = 0; t < s.steps(); ++t) {
      flat_pred.push_back(p[static_cast<size_t>(t)].arg_max());
      flat_label.push_back(s.labels[static_cast<size_t>(t)]);
    }
    steps += s.steps();
  }
  const double n = static_cast<double>(sessions.size());
  MetricsRecord rec;
  rec.seed = opts.seed;
  rec.set("accuracy", accuracy(flat_pred, flat_label));
  rec.set("macro_f1", macro_f1(flat_pred, flat_label, kNumClasses));
  rec.set("ce", ce / n);
  rec.set("kl", kl / n);
  rec.set("total", total / n);
  rec.set("sessions", n);
  rec.set("steps", static_cast<double>(steps));
  return rec;
}

}  // namespace

MetricsRecord evaluate_with(const SessionPredictor& predict,
                            const std::vector<ModalitySession>& split, const EvalOptions& opts) {
  if (split.empty()) throw ContractError("evaluate needs a nonempty split");
  const std::vector<ModalitySession> sessions = injected_copy(split, opts);
  std::vector<std::vector<ProbabilityVector>> preds(sessions.size());
  for (size_t i = 0; i < sessions.size(); ++i) preds[i] = predict(sessions[i]);
  return aggregate_metrics(sessions, preds, opts);
}

MetricsRecord evaluate(ModelParams& params, const std::vector<ModalitySession>& split,
                       const EvalOptions& opts) {
  if (split.empty()) throw ContractError("evaluate needs a nonempty split");
  const std::vector<ModalitySession> sessions = injected_copy(split, opts);
  std::vector<std::vector<ProbabilityVector>> preds(sessions.size());
  parallel::parallel_for(static_cast<int>(sessions.size()), [&](int i) {
    preds[static_cast<size_t>(i)] = model_eval(params, sessions[static_cast<size_t>(i)]).probs;
  });
  return aggregate_metrics(sessions, preds, opts);
}

namespace {

struct BatchSlot {
  double ce = 0.0, kl = 0.0, total = 0.0;
  std::vector<std::vector<double>> grads;
};

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const EmotionDataset& ds) {
  model_cfg.validate();
  cfg.validate();
  if (ds.train.empty() || ds.val.empty())
    throw ContractError("train needs nonempty train and val splits");
  for (int m = 0; m < 3; ++m)
    if (model_cfg.in_dims[static_cast<size_t>(m)] != ds.cfg.dims[static_cast<size_t>(m)])
      throw DimensionError(std::string("model.in_dim_") + kModalityNames[static_cast<size_t>(m)] +
                           " " + std::to_string(model_cfg.in_dims[static_cast<size_t>(m)]) +
                           " does not match the dataset's " +
                           std::to_string(ds.cfg.dims[static_cast<size_t>(m)]));
  if (ds.cfg.steps > model_cfg.t_max)
    throw CapacityError("sessions run " + std::to_string(ds.cfg.steps) +
                        " steps but model.t_max is " + std::to_string(model_cfg.t_max));

  ModelParams params = ModelParams::init(model_cfg, derive_seed(cfg.seed, "init"));
  std::vector<NamedParam> named = params.named_params();
  AdamState adam = AdamState::init(named);
  EarlyStopper stopper{cfg.patience};

  TrainResult result;
  const int n_train = static_cast<int>(ds.train.size());
  std::vector<int> order(static_cast<size_t>(n_train));
  for (int i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle_rng.uniform_int(i + 1))]);

    double ce_sum = 0.0, kl_sum = 0.0, total_sum = 0.0;
    for (int b0 = 0; b0 < n_train; b0 += cfg.batch) {
      const int bn = std::min(cfg.batch, n_train - b0);
      std::vector<BatchSlot> slots(static_cast<size_t>(bn));
      parallel::parallel_for(bn, [&](int i) {
        const ModalitySession& s = ds.train[static_cast<size_t>(order[static_cast<size_t>(b0 + i)])];
        Rng drop_rng(derive_seed(cfg.seed, "dropout", static_cast<uint64_t>(epoch), s.id));
        Tape tape;
        Binder bind(tape);
        ForwardCtx ctx;
        ctx.train = true;
        ctx.dropout = cfg.dropout;
        ctx.rng = &drop_rng;
        ModelForward fwd = model_forward(tape, bind, params, s, ctx);
        SequenceLossVals loss = sequence_loss_vals(tape, fwd.y, s.labels, cfg.lambda, false);
        tape.backward(loss.total);
        BatchSlot& slot = slots[static_cast<size_t>(i)];
        slot.ce = tape.value(loss.ce)[0];
        slot.kl = tape.value(loss.kl)[0];
        slot.total = tape.value(loss.total)[0];
        slot.grads.reserve(named.size());
        for (const NamedParam& np : named) slot.grads.push_back(tape.grad(bind.val_of(*np.tensor)));
      });

      const int batch_index = b0 / cfg.batch + 1;
      for (const BatchSlot& slot : slots)
        if (!std::isfinite(slot.total))
          throw TrainingError("training diverged (non-finite loss) at epoch " +
                              std::to_string(epoch) + " batch " + std::to_string(batch_index));

      std::vector<std::vector<double>> avg(named.size());
      for (size_t p = 0; p < named.size(); ++p) {
        avg[p].assign(named[p].tensor->data.size(), 0.0);
        for (const BatchSlot& slot : slots)
          for (size_t j = 0; j < avg[p].size(); ++j) avg[p][j] += slot.grads[p][j];
        for (double& x : avg[p]) x /= bn;
      }
      adamw_step(named, avg, adam, lr, cfg.weight_decay);

      for (const BatchSlot& slot : slots) {
        ce_sum += slot.ce;
        kl_sum += slot.kl;
        total_sum += slot.total;
      }
    }

    EvalOptions vopts;
    vopts.lambda = cfg.lambda;
    MetricsRecord val = evaluate(params, ds.val, vopts);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_ce = ce_sum / n_train;
    rec.train_kl = kl_sum / n_train;
    rec.train_total = total_sum / n_train;
    rec.val_total = val.get("total");
    rec.val_acc = val.get("accuracy");
    rec.val_macro_f1 = val.get("macro_f1");
    result.history.epochs.push_back(rec);
    result.epochs_run = epoch;

    const double f1 = rec.val_macro_f1;
    const bool was_best = stopper.best_epoch == 0 || f1 > stopper.best;
    const bool stop = stopper.observe(epoch, f1);
    if (was_best) {
      result.best = params;
      result.best_epoch = epoch;
      result.best_val_macro_f1 = f1;
    }
    if (stop) break;
  }
  return result;
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta, ModelParams& params) {
  io::ByteWriter w;
  w.magic();
  w.u16(io::kVersion);
  w.u16(io::kKindCheckpoint);
  w.u64(meta.run_hash);
  w.u64(meta.dataset_fingerprint);
  w.u64(meta.seed);
  w.u32(static_cast<uint32_t>(meta.best_epoch));
  w.f64(meta.best_val_macro_f1);
  w.str32(params.cfg.canonical_text());
  std::vector<NamedParam> named = params.named_params();
  w.u32(static_cast<uint32_t>(named.size()));
  for (const NamedParam& np : named) {
    w.str32(np.name);
    w.tensor(*np.tensor);
  }
  w.to_file(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  io::ByteReader r = io::ByteReader::from_file(path);
  r.expect_magic();
  const uint16_t version = r.u16();
  if (version != io::kVersion)
    throw FormatError("unsupported container version " + std::to_string(version));
  const uint16_t kind = r.u16();
  if (kind != io::kKindCheckpoint)
    throw FormatError("file is not a checkpoint (kind " + std::to_string(kind) + ")");
  LoadedCheckpoint out;
  out.meta.run_hash = r.u64();
  out.meta.dataset_fingerprint = r.u64();
  out.meta.seed = r.u64();
  out.meta.best_epoch = static_cast<int>(r.u32());
  out.meta.best_val_macro_f1 = r.f64();
  const std::string cfg_text = r.str32();
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_canonical(cfg_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedded model config is invalid: ") + e.what());
  }
  out.params = ModelParams::init(cfg, 0);
  std::vector<NamedParam> named = out.params.named_params();
  const uint32_t count = r.u32();
  if (count != named.size())
    throw FormatError("checkpoint stores " + std::to_string(count) + " tensors, model needs " +
                      std::to_string(named.size()));
  for (NamedParam& np : named) {
    const std::string name = r.str32();
    if (name != np.name)
      throw FormatError("checkpoint tensor '" + name + "' where '" + np.name + "' was expected");
    const size_t at = r.offset();
    Tensor t = r.tensor();
    if (t.shape != np.tensor->shape)
      throw FormatError("checkpoint tensor '" + name + "' shape mismatch at byte " +
                        std::to_string(at));
    np.tensor->data = std::move(t.data);
  }
  r.expect_end();
  return out;
}

}  // namespace affectfuse
