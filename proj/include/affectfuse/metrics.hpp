// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace affectfuse {

struct ConfusionMatrix {
  int classes = 0;
  std::vector<int64_t> counts;  // counts[true * classes + pred]

  static ConfusionMatrix from(std::span<const int> preds, std::span<const int> labels, int classes);
  int64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth) * classes + pred]; }
};

double accuracy(std::span<const int> preds, std::span<const int> labels);

// Per-class F1 with the 0/0 convention: a class with no true and no
// predicted examples scores 0.
std::vector<double> per_class_f1(const ConfusionMatrix& cm);

// Unweighted mean of per-class F1 over all `classes` classes.
double macro_f1(std::span<const int> preds, std::span<const int> labels, int classes);

// Named scalar results plus the metadata needed to reproduce them.
struct MetricsRecord {
  std::vector<std::pair<std::string, double>> values;
  uint64_t seed = 0;
  uint64_t config_hash = 0;

  void set(const std::string& name, double v);
  double get(const std::string& name) const;  // ContractError when missing
  bool has(const std::string& name) const;
};

}  // namespace affectfuse
