// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "affectfuse/error.hpp"
#include "affectfuse/harness.hpp"
#include "affectfuse/model.hpp"

using namespace affectfuse;

namespace {

GeneratorConfig micro_data_cfg() {
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

ModelConfig micro_model_cfg(Variant v = Variant::full) {
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
  mc.variant = v;
  return mc;
}

TrainConfig micro_train_cfg() {
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

void scale_all(ModelParams& p, double c) {
  for (NamedParam np : p.named_params())
    for (double& x : np.tensor->data) x *= c;
}

void zero_all(ModelParams& p) { scale_all(p, 0.0); }

const EmotionDataset& micro_ds() {
  static EmotionDataset ds = generate_dataset(micro_data_cfg());
  return ds;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char ch : s)
    if (ch == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("mean/std formatting uses two and three decimals") {
  CHECK(format_mean_std(0.88, 0.009) == "0.88 ± 0.009");
  CHECK(format_mean_std(0.618, 0.0123) == "0.62 ± 0.012");
  CHECK(format_mean_std(1.0, 0.0) == "1.00 ± 0.000");
}

TEST_CASE("sample std uses the n-1 denominator and degrades to zero") {
  CHECK(sample_std({}) == 0.0);
  std::vector<double> one{5.0};
  CHECK(sample_std(one) == 0.0);
  std::vector<double> same{2.0, 2.0, 2.0};
  CHECK(sample_std(same) == doctest::Approx(0.0));
  std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  CHECK(sample_std(xs) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("artifact paths embed experiment, config hash, and seed") {
  CHECK(artifact_path("out", "sweep_missing", 0xdeadbeef12345678ull, 42, "csv") ==
        "out/sweep_missing_deadbeef12345678_42.csv");
  CHECK(artifact_path("out/", "trace", 0x1ull, 7, "json") ==
        "out/trace_0000000000000001_7.json");
  CHECK(artifact_path("", "ablation", 0xffull, 0, "csv") ==
        "ablation_00000000000000ff_0.csv");
}

TEST_CASE("harness config validates and round-trips") {
  HarnessConfig hc;
  hc.validate();
  HarnessConfig back = HarnessConfig::from_canonical(hc.canonical_text());
  CHECK(back.canonical_text() == hc.canonical_text());
  CHECK(back.rates == hc.rates);
  CHECK(back.seeds == hc.seeds);
  CHECK(back.sweep_mode == hc.sweep_mode);

  HarnessConfig bad = hc;
  bad.rates = {0.2, 0.2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.rates = {0.0, 1.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = hc;
  bad.lipschitz_eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(HarnessConfig::from_canonical("harness.bogus = 1\n"), ConfigError);
}

TEST_CASE("missing-rate sweep pairs masks across models and matches plain eval at rate zero") {
  const EmotionDataset& ds = micro_ds();
  ModelParams full = ModelParams::init(micro_model_cfg(Variant::full), 3);
  ModelParams nomie = ModelParams::init(micro_model_cfg(Variant::no_mie), 3);
  const uint64_t fp = ds.fingerprint;

  std::vector<NamedModel> both{{"full", &full, fp}, {"no_mie", &nomie, fp}};
  const std::vector<double> rates{0.0, 0.3, 0.6};
  const double lambda = 0.1;
  SweepResult sw = missing_rate_sweep(both, ds.test, rates, MissingMode::at_most_one, 7, lambda);

  CHECK(sw.models == std::vector<std::string>{"full", "no_mie"});
  CHECK(sw.rates == rates);
  REQUIRE(sw.cells.size() == 6);

  SUBCASE("rate zero reproduces the plain evaluation bit for bit") {
    EvalOptions opts;
    opts.lambda = lambda;
    MetricsRecord plain = evaluate(full, ds.test, opts);
    const SweepCell& c0 = sw.cell("full", 0.0);
    CHECK(c0.accuracy == plain.get("accuracy"));
    CHECK(c0.macro_f1 == plain.get("macro_f1"));
  }

  SUBCASE("cells are model-major and the lookup finds them") {
    CHECK(sw.cells[0].model == "full");
    CHECK(sw.cells[2].rate == 0.6);
    CHECK(sw.cells[3].model == "no_mie");
    CHECK(sw.cell("no_mie", 0.3).rate == 0.3);
    CHECK_THROWS_AS(sw.cell("absent", 0.3), ContractError);
    CHECK_THROWS_AS(sw.cell("full", 0.5), ContractError);
  }

  SUBCASE("a model's cells do not depend on which other models ride along") {
    std::vector<NamedModel> alone{{"full", &full, fp}};
    SweepResult solo = missing_rate_sweep(alone, ds.test, rates, MissingMode::at_most_one, 7, lambda);
    for (double r : rates) {
      CHECK(solo.cell("full", r).accuracy == sw.cell("full", r).accuracy);
      CHECK(solo.cell("full", r).macro_f1 == sw.cell("full", r).macro_f1);
    }
  }

  SUBCASE("repeating the sweep is deterministic") {
    SweepResult again = missing_rate_sweep(both, ds.test, rates, MissingMode::at_most_one, 7, lambda);
    CHECK(again.csv() == sw.csv());
  }

  SUBCASE("csv carries provenance, a header, and one row per cell") {
    std::string csv = sw.csv();
    CHECK(csv.rfind("# config_hash=", 0) == 0);
    CHECK(csv.find("model,rate,accuracy,macro_f1\n") != std::string::npos);
    CHECK(count_lines(csv) == 2 + 6);
  }

  SUBCASE("json names the experiment and lists every cell") {
    nlohmann::json j = nlohmann::json::parse(sw.json());
    CHECK(j["experiment"] == "sweep_missing");
    CHECK(j["rates"].size() == 3);
    CHECK(j["models"]["full"]["accuracy"].size() == 3);
    CHECK(j["models"]["no_mie"]["macro_f1"].size() == 3);
    CHECK(j["models"]["full"]["accuracy"][0].get<double>() == sw.cell("full", 0.0).accuracy);
  }
}

TEST_CASE("missing-rate sweep rejects bad rates and mismatched datasets") {
  const EmotionDataset& ds = micro_ds();
  ModelParams a = ModelParams::init(micro_model_cfg(), 3);
  ModelParams b = ModelParams::init(micro_model_cfg(), 4);

  std::vector<NamedModel> one{{"a", &a, ds.fingerprint}};
  CHECK_THROWS_AS(
      missing_rate_sweep(one, ds.test, {0.4, 0.2}, MissingMode::at_most_one, 7, 0.1),
      ContractError);
  CHECK_THROWS_AS(
      missing_rate_sweep(one, ds.test, {0.2, 0.2}, MissingMode::at_most_one, 7, 0.1),
      ContractError);
  CHECK_THROWS_AS(
      missing_rate_sweep(one, ds.test, {0.0, 1.5}, MissingMode::at_most_one, 7, 0.1),
      ContractError);
  std::vector<NamedModel> none;
  CHECK_THROWS_AS(missing_rate_sweep(none, ds.test, {0.0}, MissingMode::at_most_one, 7, 0.1),
                  ContractError);

  std::vector<NamedModel> mixed{{"a", &a, ds.fingerprint}, {"b", &b, ds.fingerprint + 1}};
  CHECK_THROWS_AS(missing_rate_sweep(mixed, ds.test, {0.0}, MissingMode::at_most_one, 7, 0.1),
                  FormatError);
}

TEST_CASE("confidence trace reports one annotated row per step") {
  GeneratorConfig gen = micro_data_cfg();
  gen.audio_burst = true;
  gen.burst_factor = 4.0;
  gen.burst_start = 2;
  gen.burst_end = 4;
  EmotionDataset ds = generate_dataset(gen);
  const ModalitySession& s = ds.test[0];

  ModelParams params = ModelParams::init(micro_model_cfg(), 5);
  ConfidenceTrace tr = confidence_trace(params, s, gen);

  REQUIRE(tr.rows.size() == static_cast<size_t>(s.steps()));
  CHECK(tr.session_id == s.id);
  for (int t = 0; t < s.steps(); ++t) {
    const TraceRow& r = tr.rows[static_cast<size_t>(t)];
    CHECK(r.step == t + 1);
    double wsum = 0.0;
    for (double w : r.w) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      wsum += w;
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));
    for (int m = 0; m < 3; ++m) {
      CHECK(r.present[static_cast<size_t>(m)] ==
            s.streams[static_cast<size_t>(m)].present[static_cast<size_t>(t)]);
      CHECK(r.sigma[static_cast<size_t>(m)] == gen.sigma_at(static_cast<Modality>(m), t));
    }
    CHECK(r.label == s.labels[static_cast<size_t>(t)]);
    CHECK(r.pred >= 0);
    CHECK(r.pred < 4);
  }

  SUBCASE("the audio noise annotation jumps inside the burst window") {
    bool saw_burst = false, saw_base = false;
    for (const TraceRow& r : tr.rows) {
      if (r.sigma[0] == doctest::Approx(gen.sigma[0] * gen.burst_factor)) saw_burst = true;
      if (r.sigma[0] == doctest::Approx(gen.sigma[0])) saw_base = true;
      CHECK(r.sigma[1] == doctest::Approx(gen.sigma[1]));
    }
    CHECK(saw_burst);
    CHECK(saw_base);
  }

  SUBCASE("csv has the documented header and one line per step") {
    std::string csv = tr.csv();
    CHECK(csv.rfind("# config_hash=", 0) == 0);
    CHECK(csv.find("step,w_audio,w_visual,w_text,present_audio,present_visual,present_text,"
                   "sigma_audio,sigma_visual,sigma_text,label,pred\n") != std::string::npos);
    CHECK(count_lines(csv) == 2 + s.steps());
    size_t line_start = csv.find('\n', csv.find('\n') + 1) + 1;
    std::string first_row = csv.substr(line_start, csv.find('\n', line_start) - line_start);
    CHECK(std::count(first_row.begin(), first_row.end(), ',') == 11);
    CHECK(first_row.rfind("1,", 0) == 0);
  }
}

TEST_CASE("a fixed-weight model traces exactly one third per modality") {
  GeneratorConfig gen = micro_data_cfg();
  const ModalitySession& s = micro_ds().test[1];
  ModelParams params = ModelParams::init(micro_model_cfg(Variant::no_mie), 5);
  ConfidenceTrace tr = confidence_trace(params, s, gen);
  for (const TraceRow& r : tr.rows)
    for (double w : r.w) CHECK(w == 1.0 / 3.0);
}

TEST_CASE("a symmetric model with identical modality inputs weighs them equally") {
  // Same encoder and pair parameters everywhere, one shared confidence
  // scorer, and the same raw features on all three streams: nothing breaks
  // the tie, so the normalized weights must sit at exactly one third.
  ModelConfig mc = micro_model_cfg();
  mc.in_dims = {4, 4, 4};
  REQUIRE(mc.mie_shared);
  ModelParams params = ModelParams::init(mc, 9);
  params.encoders[1] = params.encoders[0];
  params.encoders[2] = params.encoders[0];
  for (size_t p = 1; p < params.cmaa.pairs.size(); ++p) params.cmaa.pairs[p] = params.cmaa.pairs[0];

  const int t_len = 5;
  Rng rng(123);
  Tensor raw = Tensor::zeros({t_len, 4});
  for (double& x : raw.data) x = rng.normal();
  ModalitySession s;
  s.id = 77;
  s.labels.assign(static_cast<size_t>(t_len), 2);
  for (int m = 0; m < 3; ++m) {
    s.streams[static_cast<size_t>(m)].raw = raw;
    s.streams[static_cast<size_t>(m)].present.assign(static_cast<size_t>(t_len), 1);
  }

  GeneratorConfig gen = micro_data_cfg();
  gen.dims = {4, 4, 4};
  ConfidenceTrace tr = confidence_trace(params, s, gen);
  for (const TraceRow& r : tr.rows)
    for (double w : r.w) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("an all-zero model has bound zero and moves nothing") {
  const ModalitySession& s = micro_ds().test[2];
  ModelParams params = ModelParams::init(micro_model_cfg(), 6);
  zero_all(params);

  ScaleProfile profile = measure_scale(params, std::span<const ModalitySession>(&s, 1));
  for (Modality m : {Modality::audio, Modality::visual, Modality::text}) {
    CHECK(lipschitz_bound(params, m, s.steps(), profile) == 0.0);
    LipschitzReport rep = lipschitz_empirical(params, s, m, 20, 1e-3, 17, profile);
    CHECK(rep.max_ratio == 0.0);
    CHECK(rep.ok());
  }
}

TEST_CASE("the bound is exactly homogeneous on a pure-linear path") {
  // Strip everything nonlinear out of the path: no encoder blocks, zeroed
  // pairwise keys (the softmax then never moves), fixed one-third fusion
  // weights, and a zeroed feedback-on-prediction block so the recursion
  // gain is exactly one. What remains is projection -> value map ->
  // average -> feedback -> classifier -> softmax, and the bound collapses
  // to a product of four operator norms. Scaling every parameter by c must
  // then scale it by exactly c^4.
  ModelConfig mc = micro_model_cfg(Variant::no_mie);
  ModelParams params = ModelParams::init(mc, 8);
  for (auto& enc : params.encoders) enc.blocks.clear();
  for (CmaaPairParams& pair : params.cmaa.pairs) {
    for (double& x : pair.key.weight.data) x = 0.0;
    for (double& x : pair.key.bias.data) x = 0.0;
  }
  for (int o = 0; o < params.tfl.feedback.out_dim(); ++o)
    for (int c = 0; c < 4; ++c) params.tfl.feedback.weight.at(o, mc.width + c) = 0.0;

  ScaleProfile profile;
  profile.r_h = {1.3, 0.9, 1.1};

  const double c = 2.0;
  for (Modality m : {Modality::audio, Modality::visual, Modality::text}) {
    const double base = lipschitz_bound(params, m, 6, profile);
    REQUIRE(base > 0.0);
    ModelParams scaled = params;
    scale_all(scaled, c);
    const double got = lipschitz_bound(scaled, m, 6, profile);
    CHECK(got == doctest::Approx(std::pow(c, 4) * base).epsilon(1e-9));
  }
}

TEST_CASE("the bound grows when weights along the path grow") {
  ModelParams params = ModelParams::init(micro_model_cfg(), 10);
  ScaleProfile profile;
  profile.r_h = {1.0, 1.0, 1.0};
  const double base = lipschitz_bound(params, Modality::audio, 6, profile);
  REQUIRE(base > 0.0);

  auto scaled_bound = [&](auto&& touch) {
    ModelParams p = ModelParams::init(micro_model_cfg(), 10);
    touch(p);
    return lipschitz_bound(p, Modality::audio, 6, profile);
  };

  CHECK(scaled_bound([](ModelParams& p) {
          for (double& x : p.encoders[0].projection.weight.data) x *= 2.0;
        }) > base);
  CHECK(scaled_bound([](ModelParams& p) {
          for (double& x : p.tfl.classifier[0].weight.data) x *= 2.0;
        }) > base);
  CHECK(scaled_bound([](ModelParams& p) {
          for (CmaaPairParams& pair : p.cmaa.pairs)
            for (double& x : pair.value.weight.data) x *= 2.0;
        }) >= base);
  CHECK(scaled_bound([](ModelParams& p) {
          for (double& x : p.tfl.feedback.weight.data) x *= 1.5;
        }) > base);
}

TEST_CASE("empirical ratios stay under the bound at init scale") {
  const ModalitySession& s = micro_ds().test[3];
  ModelParams params = ModelParams::init(micro_model_cfg(), 12);
  ScaleProfile profile = measure_scale(params, std::span<const ModalitySession>(&s, 1));

  for (Modality m : {Modality::audio, Modality::visual, Modality::text}) {
    LipschitzReport rep = lipschitz_empirical(params, s, m, 100, 1e-3, 99, profile);
    CHECK(rep.samples == 100);
    CHECK(rep.bound == lipschitz_bound(params, m, s.steps(), profile));
    CHECK(rep.max_ratio > 0.0);
    CHECK(rep.scale_ok);
    CHECK(rep.ok());
    for (int i = 0; i < 3; ++i) CHECK(rep.r_observed[static_cast<size_t>(i)] <= rep.r_used[static_cast<size_t>(i)]);
  }
}

TEST_CASE("the measured ratio is stable under halving the probe scale") {
  const ModalitySession& s = micro_ds().train[0];
  ModelParams params = ModelParams::init(micro_model_cfg(), 13);
  ScaleProfile profile = measure_scale(params, std::span<const ModalitySession>(&s, 1));

  LipschitzReport coarse = lipschitz_empirical(params, s, Modality::audio, 200, 1e-3, 31, profile);
  LipschitzReport fine = lipschitz_empirical(params, s, Modality::audio, 200, 5e-4, 31, profile);
  REQUIRE(coarse.max_ratio > 0.0);
  CHECK(std::abs(coarse.max_ratio - fine.max_ratio) / coarse.max_ratio < 0.10);
}

TEST_CASE("empirical runner rejects degenerate probe settings") {
  const ModalitySession& s = micro_ds().train[1];
  ModelParams params = ModelParams::init(micro_model_cfg(), 14);
  ScaleProfile profile;
  profile.r_h = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(lipschitz_empirical(params, s, Modality::audio, 0, 1e-3, 1, profile),
                  ContractError);
  CHECK_THROWS_AS(lipschitz_empirical(params, s, Modality::audio, 5, 0.0, 1, profile),
                  ContractError);
  std::vector<ModalitySession> empty;
  CHECK_THROWS_AS(measure_scale(params, empty), ContractError);
}

TEST_CASE("gradient, fixed-point, and bound checks all pass on their toy problems") {
  for (const TheoryCheck& c : check_grad(42)) {
    INFO(c.name, ": ", c.detail);
    CHECK(c.pass);
    CHECK(!c.name.empty());
  }
  for (const TheoryCheck& c : check_fixed_point(43)) {
    INFO(c.name, ": ", c.detail);
    CHECK(c.pass);
  }
  for (const TheoryCheck& c : check_lipschitz(44)) {
    INFO(c.name, ": ", c.detail);
    CHECK(c.pass);
  }
  CHECK(check_grad(42).size() > 10);      // one row per parameter block
  CHECK(check_fixed_point(43).size() >= 4);
  CHECK(check_lipschitz(44).size() >= 6);  // per modality, plus zeroed-companion runs
}

TEST_CASE("the ablation runner trains every variant and reports honest spreads") {
  const EmotionDataset& ds = micro_ds();
  ModelConfig mc = micro_model_cfg();
  TrainConfig tc = micro_train_cfg();
  const std::vector<int> seeds{21};

  AblationResult ab = run_ablation(mc, tc, ds, seeds);
  REQUIRE(ab.cells.size() == 4);
  REQUIRE(ab.rows.size() == 4);

  SUBCASE("rows follow the canonical variant order with zero spread at one seed") {
    for (size_t i = 0; i < kVariants.size(); ++i) {
      CHECK(ab.rows[i].variant == kVariants[i]);
      CHECK(ab.rows[i].acc_std == 0.0);
      CHECK(ab.rows[i].f1_std == 0.0);
      CHECK(ab.rows[i].acc_mean == ab.cells[i].accuracy);
      CHECK(ab.rows[i].f1_mean == ab.cells[i].macro_f1);
    }
    CHECK(ab.row(Variant::no_tfl).variant == Variant::no_tfl);
  }

  SUBCASE("the full-variant cell equals a direct train plus evaluate") {
    ModelConfig direct_mc = mc;
    direct_mc.variant = Variant::full;
    TrainConfig direct_tc = tc;
    direct_tc.seed = 21;
    TrainResult tr = train(direct_mc, direct_tc, ds);
    EvalOptions opts;
    opts.lambda = direct_tc.lambda;
    MetricsRecord rec = evaluate(tr.best, ds.test, opts);
    CHECK(ab.cells[0].variant == Variant::full);
    CHECK(ab.cells[0].accuracy == rec.get("accuracy"));
    CHECK(ab.cells[0].macro_f1 == rec.get("macro_f1"));
    CHECK(ab.cells[0].best_epoch == tr.best_epoch);
  }

  SUBCASE("csv and table carry provenance, variants, and spread markers") {
    std::string csv = ab.csv();
    CHECK(csv.rfind("# config_hash=", 0) == 0);
    CHECK(csv.find("variant,seed,accuracy,macro_f1,best_epoch\n") != std::string::npos);
    CHECK(count_lines(csv) == 2 + 4);
    std::string table = ab.table();
    for (Variant v : kVariants) CHECK(table.find(variant_name(v)) != std::string::npos);
    CHECK(table.find("±") != std::string::npos);
    nlohmann::json j = nlohmann::json::parse(ab.json());
    CHECK(j["experiment"] == "ablation");
    CHECK(j["runs"].size() == 4);
    CHECK(j["variants"]["full"]["macro_f1_mean"].get<double>() == ab.row(Variant::full).f1_mean);
  }

  CHECK_THROWS_AS(run_ablation(mc, tc, ds, {}), ContractError);
  CHECK_THROWS_AS(ab.row(static_cast<Variant>(99)), ContractError);
}
