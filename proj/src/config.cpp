// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/config.hpp"

#include <map>

#include "affectfuse/error.hpp"
#include "affectfuse/io.hpp"
#include "affectfuse/kvparse.hpp"

namespace affectfuse {

void RunConfig::validate() const {
  generator.validate();
  harness.validate();
  model.validate();
  train.validate();
  // Cross-section consistency: the model must accept what the generator emits.
  for (int m = 0; m < 3; ++m)
    if (model.in_dims[static_cast<size_t>(m)] != generator.dims[static_cast<size_t>(m)])
      throw ConfigError("model.in_dims must match generator dims (got " +
                        std::to_string(model.in_dims[static_cast<size_t>(m)]) + " vs " +
                        std::to_string(generator.dims[static_cast<size_t>(m)]) + ")");
  if (generator.steps > model.t_max)
    throw ConfigError("generator.steps exceeds model.t_max (" +
                      std::to_string(generator.steps) + " > " + std::to_string(model.t_max) + ")");
}

std::string RunConfig::canonical_text() const {
  return generator.canonical_text() + harness.canonical_text() + model.canonical_text() +
         train.canonical_text();
}

uint64_t RunConfig::config_hash() const { return fnv1a64(canonical_text()); }

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig defaults;
  // Start from the defaults' canonical listing, overlay the given keys,
  // then round-trip each section through its own full parser. Unknown keys
  // are those absent from the defaults.
  std::map<std::string, std::string> table;
  for (auto& [k, v] : kv::parse_flat(defaults.canonical_text())) table.emplace(k, v);
  for (auto& [k, v] : kv::parse_flat(text)) {
    auto it = table.find(k);
    if (it == table.end()) throw ConfigError("unknown config key " + k);
    it->second = v;
  }
  auto section = [&](const std::string& prefix) {
    std::string s;
    for (auto& [k, v] : table)
      if (k.rfind(prefix, 0) == 0) s += k + " = " + v + "\n";
    return s;
  };
  RunConfig cfg;
  cfg.generator = GeneratorConfig::from_canonical(section("generator."));
  cfg.harness = HarnessConfig::from_canonical(section("harness."));
  cfg.model = ModelConfig::from_canonical(section("model."));
  cfg.train = TrainConfig::from_canonical(section("train."));
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return parse(io::read_text_file(path));
}

}  // namespace affectfuse
