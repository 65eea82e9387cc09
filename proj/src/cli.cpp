// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "affectfuse/config.hpp"
#include "affectfuse/error.hpp"
#include "affectfuse/io.hpp"
#include "affectfuse/kvparse.hpp"
#include "affectfuse/parallel.hpp"

namespace affectfuse::cli {

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create output directory " + dir + ": " + ec.message());
}

EmotionDataset load_data_checked(const std::string& path) {
  LoadedDataset ld = load_dataset(path);
  if (!ld.fingerprint_ok)
    throw FormatError("dataset " + path + " does not match its embedded recipe hash");
  return std::move(ld.data);
}

void require_same_data(uint64_t expected, uint64_t got, const std::string& what) {
  if (expected != got)
    throw FormatError(what + ": dataset fingerprint " + kv::fmt_hex64(got) +
                      " does not match expected " + kv::fmt_hex64(expected));
}

// Checkpoint display names for sweep outputs: the file stem, deduplicated
// by position when stems repeat.
std::vector<std::string> model_labels(const std::vector<std::string>& paths) {
  std::vector<std::string> names;
  names.reserve(paths.size());
  for (const std::string& p : paths) names.push_back(std::filesystem::path(p).stem().string());
  for (size_t i = 0; i < names.size(); ++i) {
    bool dup = false;
    for (size_t j = 0; j < names.size(); ++j)
      if (j != i && names[j] == names[i]) dup = true;
    if (dup) names[i] += "#" + std::to_string(i);
  }
  return names;
}

std::string metrics_csv(const MetricsRecord& rec) {
  std::string s = "# config_hash=" + kv::fmt_hex64(rec.config_hash) +
                  " seed=" + kv::fmt_int(static_cast<int64_t>(rec.seed)) + "\n";
  s += "metric,value\n";
  for (const auto& [k, v] : rec.values) s += k + "," + kv::fmt_double(v) + "\n";
  return s;
}

int cmd_generate(const std::string& config_path, const std::string& out) {
  RunConfig cfg = RunConfig::from_file(config_path);
  EmotionDataset ds = generate_dataset(cfg.generator);
  if (!out.empty()) {
    std::filesystem::path parent = std::filesystem::path(out).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
  }
  save_dataset(out, ds);
  std::cout << "wrote " << out << "\n"
            << "fingerprint " << kv::fmt_hex64(ds.fingerprint) << " sessions train="
            << ds.train.size() << " val=" << ds.val.size() << " test=" << ds.test.size()
            << " steps=" << cfg.generator.steps << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out) {
  RunConfig cfg = RunConfig::from_file(config_path);
  EmotionDataset ds = load_data_checked(data);
  require_same_data(cfg.generator.fingerprint(), ds.fingerprint, data);

  TrainResult r = train(cfg.model, cfg.train, ds);
  const uint64_t hash = cfg.config_hash();

  ensure_dir(out);
  const std::string ckpt = artifact_path(out, "checkpoint", hash, cfg.train.seed, "ckpt");
  CheckpointMeta meta;
  meta.run_hash = hash;
  meta.dataset_fingerprint = ds.fingerprint;
  meta.seed = cfg.train.seed;
  meta.best_epoch = r.best_epoch;
  meta.best_val_macro_f1 = r.best_val_macro_f1;
  save_checkpoint(ckpt, meta, r.best);
  const std::string hist = artifact_path(out, "train_history", hash, cfg.train.seed, "csv");
  io::write_text_file(hist, history_csv(r.history, hash, cfg.train.seed));

  for (const EpochRecord& e : r.history.epochs)
    std::cout << "epoch " << e.epoch << " lr=" << e.lr << " train_total=" << e.train_total
              << " val_total=" << e.val_total << " val_macro_f1=" << e.val_macro_f1 << "\n";
  std::cout << "best epoch " << r.best_epoch << " val_macro_f1=" << r.best_val_macro_f1 << "\n"
            << "wrote " << ckpt << "\n"
            << "wrote " << hist << "\n";
  return 0;
}

int cmd_eval(const std::string& model, const std::string& data, double rate,
             const std::string& mode, double lambda, uint64_t seed, const std::string& out) {
  LoadedCheckpoint ck = load_checkpoint(model);
  EmotionDataset ds = load_data_checked(data);
  require_same_data(ck.meta.dataset_fingerprint, ds.fingerprint, model);

  EvalOptions opts;
  opts.missing_rate = rate;
  opts.mode = missing_mode_from(mode);
  opts.lambda = lambda;
  opts.seed = seed;
  MetricsRecord rec = evaluate(ck.params, ds.test, opts);
  rec.config_hash = ck.meta.run_hash;
  rec.seed = seed;

  for (const auto& [k, v] : rec.values) std::cout << k << " = " << kv::fmt_double(v) << "\n";
  if (!out.empty()) {
    ensure_dir(out);
    const std::string path = artifact_path(out, "eval_metrics", rec.config_hash, seed, "csv");
    io::write_text_file(path, metrics_csv(rec));
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int cmd_sweep(const std::vector<std::string>& models, const std::string& data,
              const std::vector<double>& rates, const std::string& mode, double lambda,
              uint64_t seed, const std::string& out) {
  EmotionDataset ds = load_data_checked(data);
  std::vector<LoadedCheckpoint> loaded;
  loaded.reserve(models.size());
  for (const std::string& p : models) loaded.push_back(load_checkpoint(p));
  std::vector<std::string> names = model_labels(models);
  std::vector<NamedModel> named;
  named.reserve(loaded.size());
  for (size_t i = 0; i < loaded.size(); ++i)
    named.push_back({names[i], &loaded[i].params, loaded[i].meta.dataset_fingerprint});
  require_same_data(loaded[0].meta.dataset_fingerprint, ds.fingerprint, data);

  SweepResult res = missing_rate_sweep(named, ds.test, rates, missing_mode_from(mode), seed,
                                       lambda);
  res.config_hash = loaded[0].meta.run_hash;
  std::cout << res.csv();
  if (!out.empty()) {
    ensure_dir(out);
    const std::string csv = artifact_path(out, "sweep_missing", res.config_hash, seed, "csv");
    const std::string json = artifact_path(out, "sweep_missing", res.config_hash, seed, "json");
    io::write_text_file(csv, res.csv());
    io::write_text_file(json, res.json());
    std::cout << "wrote " << csv << "\n"
              << "wrote " << json << "\n";
  }
  return 0;
}

int cmd_trace(const std::string& model, const std::string& data, int session,
              const std::string& out) {
  LoadedCheckpoint ck = load_checkpoint(model);
  EmotionDataset ds = load_data_checked(data);
  require_same_data(ck.meta.dataset_fingerprint, ds.fingerprint, model);

  const ModalitySession* found = nullptr;
  for (const std::vector<ModalitySession>* split : {&ds.train, &ds.val, &ds.test})
    for (const ModalitySession& s : *split)
      if (s.id == static_cast<uint32_t>(session)) found = &s;
  if (!found)
    throw ContractError("no session with id " + std::to_string(session) + " in " + data);

  ConfidenceTrace trace = confidence_trace(ck.params, *found, ds.cfg);
  trace.config_hash = ck.meta.run_hash;
  trace.seed = ck.meta.seed;
  std::cout << trace.csv();
  if (!out.empty()) {
    ensure_dir(out);
    const std::string path =
        artifact_path(out, "confidence_trace_s" + std::to_string(session), trace.config_hash,
                      trace.seed, "csv");
    io::write_text_file(path, trace.csv());
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data,
               std::vector<int> seeds, const std::string& out) {
  RunConfig cfg = RunConfig::from_file(config_path);
  EmotionDataset ds = load_data_checked(data);
  require_same_data(cfg.generator.fingerprint(), ds.fingerprint, data);
  if (seeds.empty()) seeds = cfg.harness.seeds;

  AblationResult res = run_ablation(cfg.model, cfg.train, ds, seeds);
  res.config_hash = cfg.config_hash();
  res.seed = static_cast<uint64_t>(seeds[0]);
  std::cout << res.table();
  if (!out.empty()) {
    ensure_dir(out);
    const std::string csv = artifact_path(out, "ablation", res.config_hash, res.seed, "csv");
    const std::string json = artifact_path(out, "ablation", res.config_hash, res.seed, "json");
    io::write_text_file(csv, res.csv());
    io::write_text_file(json, res.json());
    std::cout << "wrote " << csv << "\n"
              << "wrote " << json << "\n";
  }
  return 0;
}

int cmd_check(const std::string& which, const std::string& config_path, uint64_t seed) {
  if (!config_path.empty()) seed = RunConfig::from_file(config_path).train.seed;
  std::vector<TheoryCheck> checks;
  if (which == "grad") {
    checks = check_grad(seed);
  } else if (which == "lipschitz") {
    checks = check_lipschitz(seed);
  } else {
    checks = check_fixed_point(seed);
  }
  int failed = 0;
  for (const TheoryCheck& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
    if (!c.pass) ++failed;
  }
  std::cout << (checks.size() - static_cast<size_t>(failed)) << "/" << checks.size()
            << " checks passed\n";
  return failed == 0 ? 0 : 3;
}

}  // namespace

int run(std::vector<std::string> args) {
  CLI::App app{"affectfuse: multimodal emotion recognition on synthetic benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();

  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = hardware default)")
      ->envname("AFFECTFUSE_THREADS");

  std::string config_path, data_path, model_path, out_path, mode = "at_most_one";
  std::vector<std::string> model_paths;
  std::vector<double> rates{0.0, 0.2, 0.4, 0.6};
  std::vector<int> seeds;
  double rate = 0.0, lambda = 0.1;
  uint64_t seed = 7;
  int session = 0;
  std::string which;

  CLI::App* gen = app.add_subcommand("generate-data", "synthesize a benchmark dataset file");
  gen->add_option("--config", config_path, "run config file")->required();
  gen->add_option("--out", out_path, "output dataset path")->required();

  CLI::App* tr = app.add_subcommand("train", "train a model and write checkpoint + history");
  tr->add_option("--config", config_path, "run config file")->required();
  tr->add_option("--data", data_path, "dataset file")->required();
  tr->add_option("--out", out_path, "output directory")->required();

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--model", model_path, "checkpoint file")->required();
  ev->add_option("--data", data_path, "dataset file")->required();
  ev->add_option("--missing-rate", rate, "extra injected missing rate")
      ->check(CLI::Range(0.0, 1.0));
  ev->add_option("--mode", mode, "missing mode")
      ->check(CLI::IsMember({"at_most_one", "independent"}));
  ev->add_option("--lambda", lambda, "temporal KL weight in the reported loss");
  ev->add_option("--seed", seed, "seed deriving the injected masks");
  ev->add_option("--out", out_path, "directory for the metrics CSV");

  CLI::App* sw = app.add_subcommand("sweep-missing", "paired missing-rate sweep over checkpoints");
  sw->add_option("--models", model_paths, "checkpoint files")->required()->expected(-1);
  sw->add_option("--data", data_path, "dataset file")->required();
  sw->add_option("--rates", rates, "missing rates, strictly increasing")->delimiter(',');
  sw->add_option("--mode", mode, "missing mode")
      ->check(CLI::IsMember({"at_most_one", "independent"}));
  sw->add_option("--lambda", lambda, "temporal KL weight in the reported loss");
  sw->add_option("--seed", seed, "seed deriving the injected masks");
  sw->add_option("--out", out_path, "directory for CSV/JSON results");

  CLI::App* tc = app.add_subcommand("trace-confidence", "per-step fusion weights for a session");
  tc->add_option("--model", model_path, "checkpoint file")->required();
  tc->add_option("--data", data_path, "dataset file")->required();
  tc->add_option("--session", session, "session id")->required();
  tc->add_option("--out", out_path, "directory for the trace CSV");

  CLI::App* ab = app.add_subcommand("ablate", "train and score every variant over seeds");
  ab->add_option("--config", config_path, "run config file")->required();
  ab->add_option("--data", data_path, "dataset file")->required();
  ab->add_option("--seeds", seeds, "training seeds (default: harness.seeds)")->delimiter(',');
  ab->add_option("--out", out_path, "directory for CSV/JSON results");

  CLI::App* ct = app.add_subcommand("check-theory", "run one theoretical validation suite");
  ct->add_option("which", which, "grad | lipschitz | fixed-point")
      ->required()
      ->check(CLI::IsMember({"grad", "lipschitz", "fixed-point"}));
  ct->add_option("--config", config_path, "run config file (seed source)");
  ct->add_option("--seed", seed, "root seed when no config is given");

  int rc = 0;
  auto with_threads = [&](auto body) {
    return [&threads, body] {
      parallel::set_threads(threads);
      body();
    };
  };
  gen->callback(with_threads([&] { rc = cmd_generate(config_path, out_path); }));
  tr->callback(with_threads([&] { rc = cmd_train(config_path, data_path, out_path); }));
  ev->callback(with_threads(
      [&] { rc = cmd_eval(model_path, data_path, rate, mode, lambda, seed, out_path); }));
  sw->callback(with_threads(
      [&] { rc = cmd_sweep(model_paths, data_path, rates, mode, lambda, seed, out_path); }));
  tc->callback(with_threads([&] { rc = cmd_trace(model_path, data_path, session, out_path); }));
  ab->callback(with_threads([&] { rc = cmd_ablate(config_path, data_path, seeds, out_path); }));
  ct->callback(with_threads([&] {
    // check-theory defaults to seed 42 unless given explicitly.
    if (ct->count("--seed") == 0 && config_path.empty()) seed = 42;
    rc = cmd_check(which, config_path, seed);
  }));

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  }
  return rc;
}

}  // namespace affectfuse::cli
