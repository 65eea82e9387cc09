// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/metrics.hpp"

#include "affectfuse/error.hpp"

namespace affectfuse {

ConfusionMatrix ConfusionMatrix::from(std::span<const int> preds, std::span<const int> labels,
                                      int classes) {
  if (preds.size() != labels.size())
    throw ContractError("confusion matrix: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  if (preds.empty()) throw ContractError("confusion matrix: empty input");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<size_t>(classes) * classes, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    const int t = labels[i], p = preds[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes)
      throw ContractError("confusion matrix: class id out of range");
    ++cm.counts[static_cast<size_t>(t) * classes + p];
  }
  return cm;
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw ContractError("accuracy: bad input sizes");
  int64_t hit = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  std::vector<double> out(static_cast<size_t>(cm.classes), 0.0);
  for (int c = 0; c < cm.classes; ++c) {
    int64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < cm.classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const int64_t denom = 2 * tp + fp + fn;
    out[static_cast<size_t>(c)] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double macro_f1(std::span<const int> preds, std::span<const int> labels, int classes) {
  auto f1 = per_class_f1(ConfusionMatrix::from(preds, labels, classes));
  double s = 0.0;
  for (double v : f1) s += v;
  return s / static_cast<double>(classes);
}

void MetricsRecord::set(const std::string& name, double v) {
  for (auto& kv : values)
    if (kv.first == name) {
      kv.second = v;
      return;
    }
  values.emplace_back(name, v);
}

double MetricsRecord::get(const std::string& name) const {
  for (const auto& kv : values)
    if (kv.first == name) return kv.second;
  throw ContractError("metrics record has no entry named " + name);
}

bool MetricsRecord::has(const std::string& name) const {
  for (const auto& kv : values)
    if (kv.first == name) return true;
  return false;
}

}  // namespace affectfuse
