// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "affectfuse/harness.hpp"

namespace affectfuse {

// One run's complete recipe: data generator, model, optimizer, experiment
// protocol. Config files are flat "section.key = value" text; keys omitted
// fall back to the defaults below, unknown keys are rejected.
struct RunConfig {
  GeneratorConfig generator;
  HarnessConfig harness;
  ModelConfig model;
  TrainConfig train;

  void validate() const;

  // All four sections in canonical order (generator, harness, model,
  // train), each section's keys alphabetical. Equal configs produce
  // byte-identical text; this is what gets hashed and embedded in files.
  std::string canonical_text() const;
  uint64_t config_hash() const;

  static RunConfig parse(const std::string& text);      // ConfigError on bad input
  static RunConfig from_file(const std::string& path);  // FormatError on I/O failure
};

}  // namespace affectfuse
