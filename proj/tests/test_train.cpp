// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "affectfuse/error.hpp"
#include "affectfuse/train.hpp"

using namespace affectfuse;

namespace {

GeneratorConfig tiny_data_cfg() {
  GeneratorConfig cfg;
  cfg.seed = 11;
  cfg.sessions_train = 8;
  cfg.sessions_val = 4;
  cfg.sessions_test = 4;
  cfg.steps = 6;
  cfg.dims = {5, 6, 4};
  cfg.sigma = {0.4, 0.4, 0.4};
  cfg.audio_burst = false;
  cfg.missing_rate = {0.0, 0.0, 0.0};
  return cfg;
}

ModelConfig tiny_model_cfg() {
  ModelConfig mc;
  mc.width = 8;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.ffn_mult = 2;
  mc.cmaa_dk = 8;
  mc.mie_hidden = 8;
  mc.cls_hidden = 0;
  mc.t_max = 8;
  mc.in_dims = {5, 6, 4};
  return mc;
}

TrainConfig tiny_train_cfg() {
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch = 4;
  tc.lr = 3e-3;
  tc.warmup = 1;
  tc.decay_epochs = {};
  tc.patience = 5;
  tc.seed = 5;
  return tc;
}

}  // namespace

TEST_CASE("adamw leaves params alone without gradients or decay") {
  Tensor t({3}, {1.0, -2.0, 0.5});
  t.requires_grad = true;
  std::vector<NamedParam> params{{"t", &t}};
  AdamState st = AdamState::init(params);
  adamw_step(params, {{0.0, 0.0, 0.0}}, st, 0.01, 0.0);
  CHECK(t.data == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(st.step == 1);
}

TEST_CASE("decay-only updates shrink by the decoupled factor") {
  Tensor t({2}, {4.0, -8.0});
  t.requires_grad = true;
  std::vector<NamedParam> params{{"t", &t}};
  AdamState st = AdamState::init(params);
  const double lr = 0.1, wd = 0.05;
  adamw_step(params, {{0.0, 0.0}}, st, lr, wd);
  adamw_step(params, {{0.0, 0.0}}, st, lr, wd);
  const double f = 1.0 - lr * wd;
  CHECK(t.data[0] == doctest::Approx(4.0 * f * f).epsilon(1e-12));
  CHECK(t.data[1] == doctest::Approx(-8.0 * f * f).epsilon(1e-12));
}

TEST_CASE("two adam steps match the hand recursion") {
  Tensor t({1}, {1.0});
  t.requires_grad = true;
  std::vector<NamedParam> params{{"t", &t}};
  AdamState st = AdamState::init(params);
  const double lr = 0.01;
  const double g1 = 0.3, g2 = -0.2;
  adamw_step(params, {{g1}}, st, lr, 0.0);
  adamw_step(params, {{g2}}, st, lr, 0.0);

  // The same recursion, written out step by step.
  double x = 1.0, m = 0.0, v = 0.0;
  int k = 0;
  for (double g : {g1, g2}) {
    ++k;
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
    const double mh = m / (1.0 - std::pow(kAdamBeta1, k));
    const double vh = v / (1.0 - std::pow(kAdamBeta2, k));
    x -= lr * mh / (std::sqrt(vh) + kAdamEps);
  }
  CHECK(t.data[0] == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("adamw rejects mismatched gradient shapes") {
  Tensor t({2}, {1.0, 2.0});
  t.requires_grad = true;
  std::vector<NamedParam> params{{"t", &t}};
  AdamState st = AdamState::init(params);
  CHECK_THROWS_AS(adamw_step(params, {{1.0}}, st, 0.01, 0.0), DimensionError);
}

TEST_CASE("lr schedule ramps then steps down") {
  TrainConfig paper;
  paper.lr = 1e-4;
  paper.warmup = 5;
  paper.decay_epochs = {30, 40};
  paper.decay_factor = 0.1;
  CHECK(lr_schedule(1, paper) == doctest::Approx(2e-5).epsilon(1e-12));
  CHECK(lr_schedule(5, paper) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(29, paper) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(30, paper) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_schedule(45, paper) == doctest::Approx(1e-6).epsilon(1e-12));
}

TEST_CASE("early stopping halts after a plateau") {
  EarlyStopper s;
  s.patience = 1;
  CHECK(!s.observe(1, 0.5));
  CHECK(s.observe(2, 0.5));  // no strict improvement, one epoch past best
  CHECK(s.best_epoch == 1);

  EarlyStopper s2;
  s2.patience = 2;
  CHECK(!s2.observe(1, 0.3));
  CHECK(!s2.observe(2, 0.4));   // improvement resets the clock
  CHECK(!s2.observe(3, 0.35));
  CHECK(s2.observe(4, 0.35));
  CHECK(s2.best_epoch == 2);
}

TEST_CASE("evaluate_with scores a perfect stub at one and a flat stub at chance") {
  GeneratorConfig gc = tiny_data_cfg();
  gc.sessions_test = 100;
  gc.steps = 20;
  EmotionDataset ds = generate_dataset(gc);

  SessionPredictor oracle = [](const ModalitySession& s) {
    std::vector<ProbabilityVector> out;
    for (int l : s.labels) {
      std::vector<double> v(4, 0.0);
      v[static_cast<size_t>(l)] = 1.0;
      out.push_back(ProbabilityVector::from(std::move(v)));
    }
    return out;
  };
  MetricsRecord perfect = evaluate_with(oracle, ds.test, {});
  CHECK(perfect.get("accuracy") == 1.0);
  CHECK(perfect.get("macro_f1") == 1.0);
  CHECK(perfect.get("ce") < 1e-10);

  SessionPredictor flat = [](const ModalitySession& s) {
    return std::vector<ProbabilityVector>(static_cast<size_t>(s.steps()),
                                          ProbabilityVector::uniform(4));
  };
  MetricsRecord chance = evaluate_with(flat, ds.test, {});
  // A uniform output argmaxes to class 0, so accuracy equals the class-0
  // share exactly, which sits near 1/4 on this near-balanced benchmark.
  int64_t zeros = 0, total = 0;
  for (const auto& s : ds.test)
    for (int l : s.labels) {
      zeros += l == 0 ? 1 : 0;
      total++;
    }
  const double share = static_cast<double>(zeros) / static_cast<double>(total);
  CHECK(chance.get("accuracy") == share);
  CHECK(std::abs(chance.get("accuracy") - 0.25) < 0.05);
  CHECK(chance.get("ce") == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  CHECK(chance.get("kl") == 0.0);
  CHECK(chance.get("steps") == 100.0 * 20.0);
}

TEST_CASE("evaluating twice gives identical records") {
  EmotionDataset ds = generate_dataset(tiny_data_cfg());
  ModelParams params = ModelParams::init(tiny_model_cfg(), 3);
  EvalOptions opts;
  opts.missing_rate = 0.3;
  opts.seed = 9;
  MetricsRecord a = evaluate(params, ds.val, opts);
  MetricsRecord b = evaluate(params, ds.val, opts);
  CHECK(a.values == b.values);
}

TEST_CASE("training is deterministic, stops in budget, and checkpoints round-trip") {
  EmotionDataset ds = generate_dataset(tiny_data_cfg());
  const ModelConfig mc = tiny_model_cfg();
  const TrainConfig tc = tiny_train_cfg();

  TrainResult a = train(mc, tc, ds);
  TrainResult b = train(mc, tc, ds);
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  CHECK(a.epochs_run == 2);
  for (size_t e = 0; e < a.history.epochs.size(); ++e) {
    CHECK(a.history.epochs[e].train_total == b.history.epochs[e].train_total);
    CHECK(a.history.epochs[e].val_macro_f1 == b.history.epochs[e].val_macro_f1);
    CHECK(a.history.epochs[e].lr == b.history.epochs[e].lr);
  }
  auto pa = a.best.named_params();
  auto pb = b.best.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor->data == pb[i].tensor->data);

  // Early stopping bookkeeping: the best epoch is one of the epochs run.
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_epoch <= a.epochs_run);

  // Reloaded checkpoints reproduce the recorded validation score exactly.
  const std::string path =
      (std::filesystem::temp_directory_path() / "affectfuse_test.ckpt").string();
  CheckpointMeta meta;
  meta.run_hash = 0x1234abcd5678ef00ull;
  meta.dataset_fingerprint = ds.fingerprint;
  meta.seed = tc.seed;
  meta.best_epoch = a.best_epoch;
  meta.best_val_macro_f1 = a.best_val_macro_f1;
  save_checkpoint(path, meta, a.best);
  LoadedCheckpoint back = load_checkpoint(path);
  CHECK(back.meta.run_hash == meta.run_hash);
  CHECK(back.meta.dataset_fingerprint == ds.fingerprint);
  CHECK(back.meta.best_epoch == a.best_epoch);
  auto pc = back.params.named_params();
  REQUIRE(pc.size() == pa.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pc[i].name == pa[i].name);
    CHECK(pc[i].tensor->data == pa[i].tensor->data);
  }
  EvalOptions opts;
  opts.lambda = tc.lambda;
  MetricsRecord val = evaluate(back.params, ds.val, opts);
  CHECK(val.get("macro_f1") == a.best_val_macro_f1);
  std::filesystem::remove(path);
}

TEST_CASE("training rejects empty splits") {
  EmotionDataset ds = generate_dataset(tiny_data_cfg());
  ds.train.clear();
  CHECK_THROWS_AS(train(tiny_model_cfg(), tiny_train_cfg(), ds), ContractError);
}

TEST_CASE("loading the wrong container kind fails") {
  EmotionDataset ds = generate_dataset(tiny_data_cfg());
  const std::string path =
      (std::filesystem::temp_directory_path() / "affectfuse_kindmix.bin").string();
  save_dataset(path, ds);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("history csv carries provenance and one row per epoch") {
  TrainHistory h;
  EpochRecord r;
  r.epoch = 1;
  r.lr = 0.25;
  h.epochs.push_back(r);
  r.epoch = 2;
  h.epochs.push_back(r);
  const std::string csv = history_csv(h, 0xdeadbeef12345678ull, 42);
  CHECK(csv.rfind("# config_hash=deadbeef12345678 seed=42\n", 0) == 0);
  CHECK(csv.find("epoch,lr,train_ce,train_kl,train_total,val_total,val_acc,val_macro_f1\n") !=
        std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("train config validation and round trip") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  TrainConfig bad = tc;
  bad.decay_epochs = {25, 20};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  TrainConfig rt = TrainConfig::from_canonical(tc.canonical_text());
  CHECK(rt.canonical_text() == tc.canonical_text());
}
