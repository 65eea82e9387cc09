// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "affectfuse/cli.hpp"
#include "affectfuse/config.hpp"
#include "affectfuse/error.hpp"
#include "affectfuse/io.hpp"

using namespace affectfuse;
namespace fs = std::filesystem;

namespace {

// A complete run recipe small enough to train inside a unit test.
const char* kMicroConfig =
    "generator.seed = 11\n"
    "generator.sessions_train = 8\n"
    "generator.sessions_val = 4\n"
    "generator.sessions_test = 4\n"
    "generator.steps = 6\n"
    "generator.dim_audio = 5\n"
    "generator.dim_visual = 6\n"
    "generator.dim_text = 4\n"
    "generator.sigma_audio = 0.4\n"
    "generator.sigma_visual = 0.4\n"
    "generator.sigma_text = 0.4\n"
    "generator.audio_burst = false\n"
    "generator.missing_rate_audio = 0\n"
    "generator.missing_rate_visual = 0\n"
    "generator.missing_rate_text = 0\n"
    "model.width = 8\n"
    "model.enc_layers = 1\n"
    "model.enc_heads = 2\n"
    "model.ffn_mult = 2\n"
    "model.cmaa_dk = 8\n"
    "model.mie_hidden = 8\n"
    "model.t_max = 8\n"
    "model.in_dim_audio = 5\n"
    "model.in_dim_visual = 6\n"
    "model.in_dim_text = 4\n"
    "train.epochs = 2\n"
    "train.batch = 4\n"
    "train.lr = 0.003\n"
    "train.warmup = 1\n"
    "train.patience = 5\n"
    "train.seed = 21\n"
    "harness.seeds = 21\n"
    "harness.rates = 0,0.5\n";

struct CliResult {
  int rc = 0;
  std::string out;
  std::string err;
};

// In-process invocation with both streams captured, so negative tests do
// not spray expected error text into the test log.
CliResult run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  std::streambuf* old_out = std::cout.rdbuf(out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(err.rdbuf());
  CliResult r;
  try {
    r.rc = cli::run(std::move(args));
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& rel = "") const { return (path / rel).string(); }
};

}  // namespace

TEST_CASE("run config defaults validate and round-trip through the parser") {
  RunConfig def;
  def.validate();
  const std::string text = def.canonical_text();
  CHECK(text.rfind("generator.", 0) == 0);
  CHECK(text.find("\nharness.") != std::string::npos);
  CHECK(text.find("\nmodel.") != std::string::npos);
  CHECK(text.find("\ntrain.") != std::string::npos);
  CHECK(text.find("generator.seed = 38\n") != std::string::npos);

  RunConfig back = RunConfig::parse(text);
  CHECK(back.canonical_text() == text);
  CHECK(back.config_hash() == def.config_hash());
  CHECK(RunConfig::parse("").config_hash() == def.config_hash());
}

TEST_CASE("run config overlays only the given keys") {
  RunConfig cfg = RunConfig::parse("generator.steps = 10\ntrain.lr = 0.01\n");
  CHECK(cfg.generator.steps == 10);
  CHECK(cfg.train.lr == 0.01);
  CHECK(cfg.model.width == RunConfig().model.width);
  CHECK(cfg.config_hash() != RunConfig().config_hash());

  CHECK_THROWS_AS(RunConfig::parse("who.knows = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("generator.stepz = 10\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("not a key-value line\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("generator.steps = soon\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("generator.steps = 10\ngenerator.steps = 11\n"),
                  ConfigError);
}

TEST_CASE("run config enforces cross-section consistency") {
  CHECK_THROWS_AS(RunConfig::parse("model.in_dim_audio = 13\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("generator.steps = 100\n"), ConfigError);
  RunConfig ok = RunConfig::parse("generator.steps = 64\n");
  CHECK(ok.generator.steps == ok.model.t_max);
  CHECK_THROWS_AS(RunConfig::parse("model.width = 0\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/affectfuse.cfg"), FormatError);
  RunConfig micro = RunConfig::parse(kMicroConfig);
  micro.validate();
  CHECK(micro.train.seed == 21);
  CHECK(micro.harness.rates == std::vector<double>{0.0, 0.5});
}

TEST_CASE("cli rejects bad invocations without touching the filesystem") {
  CHECK(run_cli({}).rc == 1);
  CHECK(run_cli({"frobnicate"}).rc == 1);
  CHECK(run_cli({"--help"}).rc == 0);
  CHECK(run_cli({"check-theory", "bogus"}).rc == 1);
  CHECK(run_cli({"check-theory"}).rc == 1);

  TempDir tmp("affectfuse_cli_usage");
  const std::string cfg = tmp.str("run.cfg");
  io::write_text_file(cfg, kMicroConfig);

  const std::string never = tmp.str("never_created");
  CliResult r = run_cli({"train", "--config", cfg, "--out", never});
  CHECK(r.rc == 1);  // --data is required
  CHECK(!fs::exists(never));

  r = run_cli({"eval", "--model", tmp.str("no.ckpt"), "--data", tmp.str("no.af"),
               "--missing-rate", "1.5"});
  CHECK(r.rc == 1);  // range check fires before any file access

  r = run_cli({"generate-data", "--config", tmp.str("missing.cfg"), "--out", never});
  CHECK(r.rc == 2);  // unreadable config file
  CHECK(!fs::exists(never));

  io::write_text_file(tmp.str("bad.cfg"), "generator.bogus = 1\n");
  r = run_cli({"generate-data", "--config", tmp.str("bad.cfg"), "--out", never});
  CHECK(r.rc == 1);  // unknown key is a config error
  CHECK(!fs::exists(never));
}

TEST_CASE("cli pipeline runs end to end and fails loudly on bad inputs") {
  TempDir tmp("affectfuse_cli_pipe");
  const std::string cfg = tmp.str("run.cfg");
  io::write_text_file(cfg, kMicroConfig);
  const RunConfig rc_cfg = RunConfig::parse(kMicroConfig);
  const uint64_t hash = rc_cfg.config_hash();
  const std::string data = tmp.str("bench.af");

  CliResult gen = run_cli({"generate-data", "--config", cfg, "--out", data});
  REQUIRE(gen.rc == 0);
  REQUIRE(fs::exists(data));
  CHECK(gen.out.find("fingerprint") != std::string::npos);

  const std::string run_dir = tmp.str("run");
  CliResult tr = run_cli({"train", "--config", cfg, "--data", data, "--out", run_dir});
  REQUIRE(tr.rc == 0);
  const std::string ckpt = artifact_path(run_dir, "checkpoint", hash, 21, "ckpt");
  const std::string hist = artifact_path(run_dir, "train_history", hash, 21, "csv");
  REQUIRE(fs::exists(ckpt));
  REQUIRE(fs::exists(hist));
  CHECK(io::read_text_file(hist).rfind("# config_hash=", 0) == 0);

  SUBCASE("eval writes metrics and is thread-count independent") {
    CliResult e1 = run_cli({"--threads", "1", "eval", "--model", ckpt, "--data", data,
                            "--out", tmp.str("ev1")});
    CliResult e8 = run_cli({"--threads", "8", "eval", "--model", ckpt, "--data", data,
                            "--out", tmp.str("ev8")});
    REQUIRE(e1.rc == 0);
    REQUIRE(e8.rc == 0);
    const std::string m1 = artifact_path(tmp.str("ev1"), "eval_metrics", hash, 7, "csv");
    const std::string m8 = artifact_path(tmp.str("ev8"), "eval_metrics", hash, 7, "csv");
    REQUIRE(fs::exists(m1));
    CHECK(io::read_text_file(m1) == io::read_text_file(m8));
    CHECK(io::read_text_file(m1).find("accuracy,") != std::string::npos);
    CHECK(e1.out.find("macro_f1 = ") != std::string::npos);
  }

  SUBCASE("sweep output is byte-stable across reruns") {
    CliResult s1 = run_cli({"sweep-missing", "--models", ckpt, "--data", data, "--rates",
                            "0,0.5", "--out", tmp.str("sw1")});
    CliResult s2 = run_cli({"sweep-missing", "--models", ckpt, "--data", data, "--rates",
                            "0,0.5", "--out", tmp.str("sw2")});
    REQUIRE(s1.rc == 0);
    REQUIRE(s2.rc == 0);
    const std::string c1 = artifact_path(tmp.str("sw1"), "sweep_missing", hash, 7, "csv");
    const std::string c2 = artifact_path(tmp.str("sw2"), "sweep_missing", hash, 7, "csv");
    REQUIRE(fs::exists(c1));
    CHECK(io::read_text_file(c1) == io::read_text_file(c2));
    const std::string j1 = artifact_path(tmp.str("sw1"), "sweep_missing", hash, 7, "json");
    CHECK(fs::exists(j1));
    CHECK(run_cli({"sweep-missing", "--models", ckpt, "--data", data, "--rates", "0.5,0.2"})
              .rc == 2);
  }

  SUBCASE("confidence traces address sessions by id") {
    CliResult t0 = run_cli({"trace-confidence", "--model", ckpt, "--data", data, "--session",
                            "0", "--out", tmp.str("trc")});
    REQUIRE(t0.rc == 0);
    const std::string path =
        artifact_path(tmp.str("trc"), "confidence_trace_s0", hash, 21, "csv");
    REQUIRE(fs::exists(path));
    CHECK(io::read_text_file(path).find("step,w_audio") != std::string::npos);
    CHECK(run_cli({"trace-confidence", "--model", ckpt, "--data", data, "--session", "9999"})
              .rc == 2);
  }

  SUBCASE("corrupted datasets and mismatched recipes are format errors") {
    std::string bytes = io::read_text_file(data);
    bytes[6] ^= 0x01;
    const std::string bad = tmp.str("bad.af");
    io::write_text_file(bad, bytes);
    CHECK(run_cli({"eval", "--model", ckpt, "--data", bad}).rc == 2);

    std::string other_cfg_text = kMicroConfig;
    other_cfg_text += "generator.self_transition = 0.8\n";
    const std::string other_cfg = tmp.str("other.cfg");
    io::write_text_file(other_cfg, other_cfg_text);
    const std::string never = tmp.str("mismatch_run");
    CliResult mm = run_cli({"train", "--config", other_cfg, "--data", data, "--out", never});
    CHECK(mm.rc == 2);  // dataset was generated from a different recipe
    CHECK(!fs::exists(artifact_path(never, "checkpoint", RunConfig::parse(other_cfg_text)
                                                             .config_hash(),
                                    21, "ckpt")));
    CHECK(run_cli({"eval", "--model", data, "--data", data}).rc == 2);  // not a checkpoint
  }

  SUBCASE("ablate trains every variant from the config recipe") {
    CliResult ab = run_cli({"ablate", "--config", cfg, "--data", data, "--seeds", "21",
                            "--out", tmp.str("ab")});
    REQUIRE(ab.rc == 0);
    const std::string csv = artifact_path(tmp.str("ab"), "ablation", hash, 21, "csv");
    REQUIRE(fs::exists(csv));
    std::string body = io::read_text_file(csv);
    for (const char* v : {"full", "no_cmaa", "no_mie", "no_tfl"})
      CHECK(body.find(v) != std::string::npos);
    CHECK(ab.out.find("±") != std::string::npos);  // the aligned table on stdout
  }

  SUBCASE("theory checks run from the cli") {
    CliResult fp = run_cli({"check-theory", "fixed-point", "--seed", "43"});
    CHECK(fp.rc == 0);
    CHECK(fp.out.find("PASS") != std::string::npos);
    CHECK(fp.out.find("checks passed") != std::string::npos);
  }
}
