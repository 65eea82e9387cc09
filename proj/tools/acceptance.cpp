// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance gate: ten PASS/FAIL checks covering gradient correctness,
// probabilistic invariants, loss identities, the fixed-point protocol,
// perturbation bounds on trained models, benchmark accuracy, robustness
// and ablation orderings, determinism, and container integrity. Exits 0
// only if every criterion passes. Criteria 5-8 share one set of trained
// desk models (4 variants x 3 seeds) built from configs/desk.cfg.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "affectfuse/config.hpp"
#include "affectfuse/gradcheck.hpp"
#include "affectfuse/harness.hpp"
#include "affectfuse/io.hpp"
#include "affectfuse/model.hpp"

using namespace affectfuse;
using Clock = std::chrono::steady_clock;

namespace {

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  va_list ap;
  va_start(ap, f);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Criterion {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Criterion> results;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  results.push_back({id, name, pass, detail});
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------- 1: gradients

void criterion_grad() {
  auto t0 = Clock::now();
  std::vector<TheoryCheck> checks = check_grad(42);
  bool all = true;
  double worst = 0.0;
  for (const TheoryCheck& c : checks) all = all && c.pass;
  // The summary row carries the worst relative error in its detail.
  const double elapsed = secs_since(t0);
  report(1, "analytic gradients match finite differences",
         all && elapsed < 60.0,
         fmt("%zu blocks, h=1e-5, tol 1e-4, %.1fs; %s", checks.size() - 1, elapsed,
             checks.back().detail.c_str()));
}

// ------------------------------------------------- 2: probabilistic invariants

void criterion_simplex() {
  auto t0 = Clock::now();
  GeneratorConfig gen;
  gen.seed = 5150;
  gen.sessions_train = 40;
  gen.sessions_val = 0;
  gen.sessions_test = 0;
  gen.steps = 8;
  gen.dims = {5, 6, 4};
  gen.missing_rate = {0.2, 0.2, 0.2};

  ModelConfig mc;
  mc.width = 8;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.ffn_mult = 2;
  mc.cmaa_dk = 8;
  mc.mie_hidden = 8;
  mc.t_max = 8;
  mc.in_dims = gen.dims;

  long att_rows = 0, mie_rows = 0, pred_rows = 0;
  double worst_att = 0.0, worst_mie = 0.0, worst_pred = 0.0;
  bool weights_in_range = true;
  const double tol = 1e-9;

  // Randomized parameters every pass, randomized sessions throughout:
  // 10,000 prediction rows and at least as many attention and weight rows.
  int draws = 0;
  for (int round = 0; draws < 10000; ++round) {
    gen.seed = derive_seed(5150, "round", static_cast<uint64_t>(round));
    EmotionDataset ds = generate_dataset(gen);
    ModelParams params = ModelParams::init(mc, derive_seed(91, "params",
                                                            static_cast<uint64_t>(round)));
    for (const ModalitySession& s : ds.train) {
      Tape tape;
      Binder bind(tape);
      Diagnostics diag;
      ForwardCtx ctx;
      ctx.diag = &diag;
      ModelForward fwd = model_forward(tape, bind, params, s, ctx);
      for (Val a : diag.attention) {
        Tensor m = tape.value_tensor(a);
        const int rows = m.shape[0], cols = m.shape[1];
        for (int r = 0; r < rows; ++r) {
          double sum = 0.0;
          for (int c = 0; c < cols; ++c) sum += m.at(r, c);
          worst_att = std::max(worst_att, std::abs(sum - 1.0));
          ++att_rows;
        }
      }
      for (const auto& cols : diag.mie) {
        const std::vector<double>& w0 = tape.value(cols[0]);
        const std::vector<double>& w1 = tape.value(cols[1]);
        const std::vector<double>& w2 = tape.value(cols[2]);
        for (size_t t = 0; t < w0.size(); ++t) {
          const double a = w0[t], b = w1[t], c = w2[t];
          if (a < 0 || a > 1 || b < 0 || b > 1 || c < 0 || c > 1) weights_in_range = false;
          worst_mie = std::max(worst_mie, std::abs(a + b + c - 1.0));
          ++mie_rows;
        }
      }
      for (const Val& y : fwd.y) {
        const std::vector<double>& p = tape.value(y);
        double sum = 0.0;
        for (double v : p) {
          sum += v;
          if (v < 0 || v > 1) weights_in_range = false;
        }
        worst_pred = std::max(worst_pred, std::abs(sum - 1.0));
        ++pred_rows;
        ++draws;
      }
    }
  }
  const bool pass = worst_att <= tol && worst_mie <= tol && worst_pred <= tol &&
                    weights_in_range && att_rows >= 10000 && mie_rows >= 10000 &&
                    pred_rows >= 10000;
  report(2, "attention, fusion weights, and predictions stay stochastic", pass,
         fmt("%ld att / %ld mie / %ld pred rows; worst row-sum errors %.2e / %.2e / %.2e, "
             "tol 1e-9; %.1fs",
             att_rows, mie_rows, pred_rows, worst_att, worst_mie, worst_pred,
             secs_since(t0)));
}

// ------------------------------------------------------------ 3: loss identities

void criterion_loss_identities() {
  Rng rng(303);
  double worst_self_kl = 0.0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> p(4);
    double sum = 0.0;
    for (double& x : p) {
      x = -std::log(rng.uniform());
      sum += x;
    }
    for (double& x : p) x /= sum;
    ProbabilityVector pv = ProbabilityVector::from(p);
    worst_self_kl = std::max(worst_self_kl, std::abs(kl_divergence(pv, pv)));
  }

  ProbabilityVector uniform = ProbabilityVector::from({0.25, 0.25, 0.25, 0.25});
  const double ce_err = std::abs(cross_entropy(uniform, 2) - std::log(4.0));

  std::vector<ProbabilityVector> single{uniform};
  SequenceLoss one = sequence_loss(single, {1}, 0.7);
  std::vector<ProbabilityVector> constant(5, ProbabilityVector::from({0.4, 0.3, 0.2, 0.1}));
  SequenceLoss flat = sequence_loss(constant, {0, 0, 1, 1, 2}, 0.7);

  const bool pass = worst_self_kl < 1e-12 && ce_err <= 1e-9 && one.kl == 0.0 &&
                    std::abs(flat.kl) < 1e-12;
  report(3, "loss identities hold", pass,
         fmt("max KL(p||p) %.2e; |CE(uniform)-ln4| %.2e; T=1 KL %.1e; constant-pred KL %.2e",
             worst_self_kl, ce_err, one.kl, flat.kl));
}

// ---------------------------------------------------------------- 4: fixed point

void criterion_fixed_point() {
  auto t0 = Clock::now();
  std::vector<TheoryCheck> checks = check_fixed_point(43);
  bool all = true;
  std::string tail;
  for (const TheoryCheck& c : checks) {
    all = all && c.pass;
    tail = c.detail;
  }
  const double elapsed = secs_since(t0);
  report(4, "contractive feedback reaches a unique fixed point", all && elapsed < 60.0,
         fmt("%zu protocol checks over 100 random starts, %.1fs; %s", checks.size(), elapsed,
             tail.c_str()));
}

// --------------------------------------------- desk models shared by 5 through 8

struct DeskModels {
  RunConfig rc;
  EmotionDataset ds;
  // cells[variant index][seed index]
  std::array<std::array<TrainResult, 3>, 4> runs;
  std::array<std::array<double, 3>, 4> f1;
  std::array<std::array<double, 3>, 4> acc;
  std::vector<int> seeds{42, 43, 44};
  double train_secs = 0.0;
};

DeskModels train_desk(const std::string& config_path) {
  DeskModels d;
  d.rc = RunConfig::from_file(config_path);
  d.ds = generate_dataset(d.rc.generator);
  auto t0 = Clock::now();
  for (size_t vi = 0; vi < kVariants.size(); ++vi) {
    for (size_t si = 0; si < d.seeds.size(); ++si) {
      ModelConfig mc = d.rc.model;
      mc.variant = kVariants[vi];
      TrainConfig tc = d.rc.train;
      tc.seed = static_cast<uint64_t>(d.seeds[si]);
      if (kVariants[vi] == Variant::no_tfl) tc.lambda = 0.0;
      d.runs[vi][si] = train(mc, tc, d.ds);
      EvalOptions opts;
      opts.lambda = tc.lambda;
      MetricsRecord rec = evaluate(d.runs[vi][si].best, d.ds.test, opts);
      d.f1[vi][si] = rec.get("macro_f1");
      d.acc[vi][si] = rec.get("accuracy");
      std::printf("  trained %-8s seed %d: test macro_f1 %.4f (best epoch %d)\n",
                  variant_name(kVariants[vi]), d.seeds[si], d.f1[vi][si],
                  d.runs[vi][si].best_epoch);
      std::fflush(stdout);
    }
  }
  d.train_secs = secs_since(t0);
  return d;
}

// ---------------------------------------------------------- 5: perturbation bound

void criterion_lipschitz(DeskModels& d) {
  auto t0 = Clock::now();
  ModelParams& model = d.runs[0][0].best;  // full, seed 42
  const ModalitySession& sess = d.ds.test[0];
  bool all_ok = true;
  double worst_margin = 0.0;  // max ratio/bound seen
  for (int m = 0; m < 3; ++m) {
    ScaleProfile prof = measure_scale(model, std::span<const ModalitySession>(&sess, 1));
    LipschitzReport rep = lipschitz_empirical(model, sess, static_cast<Modality>(m), 1000,
                                              d.rc.harness.lipschitz_eps, 97, prof);
    all_ok = all_ok && rep.ok();
    worst_margin = std::max(worst_margin, rep.max_ratio / rep.bound);

    ModalitySession zeroed = sess;
    const int j = (m + 1) % 3;
    zeroed.streams[static_cast<size_t>(j)].present.assign(
        static_cast<size_t>(sess.steps()), 0);
    for (double& x : zeroed.streams[static_cast<size_t>(j)].raw.data) x = 0.0;
    ScaleProfile pz = measure_scale(model, std::span<const ModalitySession>(&zeroed, 1));
    LipschitzReport rz = lipschitz_empirical(model, zeroed, static_cast<Modality>(m), 1000,
                                             d.rc.harness.lipschitz_eps, 98, pz);
    all_ok = all_ok && rz.ok();
    worst_margin = std::max(worst_margin, rz.max_ratio / rz.bound);
  }
  const double elapsed = secs_since(t0);
  report(5, "empirical sensitivity stays under the composed bound",
         all_ok && elapsed < 300.0,
         fmt("1000 perturbations per modality, plus one companion modality zeroed; "
             "worst ratio/bound %.2e; %.1fs",
             worst_margin, elapsed));
}

// -------------------------------------------------------------- 6: benchmark F1

void criterion_benchmark(DeskModels& d) {
  const double f1 = d.f1[0][0];  // full, seed 42
  report(6, "trained benchmark model reaches macro-F1 0.60", f1 >= 0.60,
         fmt("full variant, seed 42: test macro_f1 %.4f (threshold 0.60); 12 runs trained "
             "in %.0fs",
             f1, d.train_secs));
}

// ----------------------------------------------------------- 7: robustness order

void criterion_robustness(DeskModels& d) {
  auto t0 = Clock::now();
  const std::vector<double> rates = d.rc.harness.rates;
  int wins = 0;
  std::string per_seed;
  for (size_t si = 0; si < d.seeds.size(); ++si) {
    std::vector<NamedModel> pair{
        {"full", &d.runs[0][si].best, d.ds.fingerprint},
        {"no_mie", &d.runs[2][si].best, d.ds.fingerprint}};
    SweepResult sw = missing_rate_sweep(pair, d.ds.test, rates, d.rc.harness.sweep_mode,
                                        d.rc.harness.sweep_seed, d.rc.train.lambda);
    const double hi = rates.front(), lo = rates.back();
    const double drop_full = sw.cell("full", hi).macro_f1 - sw.cell("full", lo).macro_f1;
    const double drop_nomie = sw.cell("no_mie", hi).macro_f1 - sw.cell("no_mie", lo).macro_f1;
    if (drop_full < drop_nomie) ++wins;
    per_seed += fmt("%sseed %d: %.4f vs %.4f", si ? "; " : "", d.seeds[si], drop_full,
                    drop_nomie);
  }
  report(7, "confidence weighting softens missing-modality degradation", wins >= 2,
         fmt("macro-F1 drop 0.0->%.1f, full vs no_mie, paired masks: %s (%d/3 seeds, need "
             "majority); %.1fs",
             rates.back(), per_seed.c_str(), wins, secs_since(t0)));
}

// ------------------------------------------------------------- 8: ablation order

void criterion_ablation(DeskModels& d) {
  std::array<double, 4> mean{};
  std::array<double, 4> stdev{};
  for (size_t vi = 0; vi < 4; ++vi) {
    std::vector<double> xs(d.f1[vi].begin(), d.f1[vi].end());
    mean[vi] = (xs[0] + xs[1] + xs[2]) / 3.0;
    stdev[vi] = sample_std(xs);
  }
  bool pass = true;
  std::string table;
  for (size_t vi = 0; vi < 4; ++vi) {
    if (vi > 0 && mean[0] < mean[vi]) pass = false;
    table += fmt("%s%s %s", vi ? "; " : "", variant_name(kVariants[vi]),
                 format_mean_std(mean[vi], stdev[vi]).c_str());
  }
  report(8, "full model dominates every ablation on mean macro-F1", pass, table);
}

// -------------------------------------------------------------- 9: determinism

void criterion_determinism(DeskModels& d) {
  auto t0 = Clock::now();
  // Re-train the full/seed-42 recipe from scratch: history rows and the
  // selected parameters must come back byte-identical.
  ModelConfig mc = d.rc.model;
  TrainConfig tc = d.rc.train;
  tc.seed = 42;
  TrainResult again = train(mc, tc, d.ds);
  const uint64_t hash = d.rc.config_hash();
  const bool history_same =
      history_csv(again.history, hash, tc.seed) == history_csv(d.runs[0][0].history, hash,
                                                               tc.seed);
  bool params_same = true;
  std::vector<NamedParam> a = d.runs[0][0].best.named_params();
  std::vector<NamedParam> b = again.best.named_params();
  params_same = a.size() == b.size();
  for (size_t i = 0; params_same && i < a.size(); ++i)
    params_same = a[i].name == b[i].name && a[i].tensor->data == b[i].tensor->data;

  // Thread-count independence of evaluation metrics.
  parallel::set_threads(1);
  EvalOptions opts;
  opts.lambda = d.rc.train.lambda;
  opts.missing_rate = 0.4;
  opts.seed = 7;
  MetricsRecord m1 = evaluate(d.runs[0][0].best, d.ds.test, opts);
  parallel::set_threads(8);
  MetricsRecord m8 = evaluate(d.runs[0][0].best, d.ds.test, opts);
  parallel::set_threads(0);
  bool eval_same = true;
  for (const char* key : {"accuracy", "macro_f1", "ce", "kl", "total"})
    eval_same = eval_same && m1.get(key) == m8.get(key);

  report(9, "training and evaluation are reproducible", history_same && params_same && eval_same,
         fmt("retrained history %s, parameters %s; eval metrics at 1 vs 8 threads %s; %.1fs",
             history_same ? "byte-identical" : "DIFFER", params_same ? "bit-identical" : "DIFFER",
             eval_same ? "identical" : "DIFFER", secs_since(t0)));
}

// ---------------------------------------------------------- 10: container safety

void criterion_containers(DeskModels& d) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "affectfuse_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const std::string ds_path = (dir / "bench.af").string();
  save_dataset(ds_path, d.ds);
  LoadedDataset back = load_dataset(ds_path);
  const std::string ds_path2 = (dir / "bench2.af").string();
  save_dataset(ds_path2, back.data);
  const bool ds_roundtrip = back.fingerprint_ok &&
                            io::read_text_file(ds_path) == io::read_text_file(ds_path2);

  const std::string ck_path = (dir / "model.ckpt").string();
  CheckpointMeta meta;
  meta.run_hash = d.rc.config_hash();
  meta.dataset_fingerprint = d.ds.fingerprint;
  meta.seed = 42;
  meta.best_epoch = d.runs[0][0].best_epoch;
  meta.best_val_macro_f1 = d.runs[0][0].best_val_macro_f1;
  save_checkpoint(ck_path, meta, d.runs[0][0].best);
  LoadedCheckpoint ck = load_checkpoint(ck_path);
  const std::string ck_path2 = (dir / "model2.ckpt").string();
  save_checkpoint(ck_path2, ck.meta, ck.params);
  const bool ck_roundtrip = io::read_text_file(ck_path) == io::read_text_file(ck_path2);

  // Corruptions must be rejected up front, never half-parsed.
  int rejected = 0, attempts = 0;
  auto expect_reject = [&](std::string bytes, const std::string& name) {
    ++attempts;
    const std::string bad = (dir / name).string();
    io::write_text_file(bad, bytes);
    try {
      if (name.find("ckpt") != std::string::npos)
        load_checkpoint(bad);
      else
        load_dataset(bad);
    } catch (const FormatError&) {
      ++rejected;
    }
  };
  std::string ds_bytes = io::read_text_file(ds_path);
  std::string ck_bytes = io::read_text_file(ck_path);
  {
    std::string t = ds_bytes;
    t[0] = 'X';
    expect_reject(t, "bad_magic.af");
  }
  {
    std::string t = ds_bytes;
    t[6] = 9;
    expect_reject(t, "bad_kind.af");
  }
  expect_reject(ds_bytes.substr(0, ds_bytes.size() / 2), "truncated.af");
  expect_reject(ds_bytes + std::string(1, '\0'), "trailing.af");
  expect_reject(ck_bytes.substr(0, ck_bytes.size() - 3), "truncated.ckpt");
  {
    std::string t = ck_bytes;
    t[4] = 42;
    expect_reject(t, "bad_version.ckpt");
  }

  fs::remove_all(dir);
  report(10, "containers round-trip bit-exactly and reject corruption",
         ds_roundtrip && ck_roundtrip && rejected == attempts,
         fmt("dataset and checkpoint re-saves byte-identical; %d/%d corrupted files rejected",
             rejected, attempts));
}

}  // namespace

int main(int argc, char** argv) {
  std::string config_path = "configs/desk.cfg";
  if (argc > 1) config_path = argv[1];
  if (!std::filesystem::exists(config_path)) {
    std::fprintf(stderr, "cannot find %s; run from the repository root or pass the path\n",
                 config_path.c_str());
    return 1;
  }

  auto t0 = Clock::now();
  criterion_grad();
  criterion_simplex();
  criterion_loss_identities();
  criterion_fixed_point();

  std::printf("training desk models (4 variants x 3 seeds) from %s...\n", config_path.c_str());
  DeskModels desk = train_desk(config_path);

  criterion_lipschitz(desk);
  criterion_benchmark(desk);
  criterion_robustness(desk);
  criterion_ablation(desk);
  criterion_determinism(desk);
  criterion_containers(desk);

  int passed = 0;
  for (const Criterion& c : results) passed += c.pass ? 1 : 0;
  std::printf("%d/%zu criteria passed in %.0fs\n", passed, results.size(), secs_since(t0));
  return passed == static_cast<int>(results.size()) ? 0 : 1;
}
