#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "akt/data.hpp"
#include "akt/error.hpp"
#include "akt/tensor.hpp"

namespace akt {

/// Average precision of one ranked list: mean over positives of precision at that positive's rank.
/// Sorting is by descending score with ties broken by ascending item index.
inline double average_precision(std::span<const double> scores, std::span<const double> truth) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (truth[order[rank]] != 0.0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

/// Mean of per-class AP, in percent. Classes with no positive sample are left out.
inline double mean_average_precision(const Tensor& scores, const Tensor& truth) {
  if (scores.rank() != 2 || scores.shape() != truth.shape()) {
    throw ShapeError("mean_average_precision: scores " + scores.shape_string() + " vs truth " + truth.shape_string());
  }
  const std::size_t n = scores.rows();
  const std::size_t c = scores.cols();
  double total = 0.0;
  std::size_t evaluated = 0;
  std::vector<double> s(n), t(n);
  for (std::size_t j = 0; j < c; ++j) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores(i, j);
      t[i] = truth(i, j);
      any = any || t[i] != 0.0;
    }
    if (!any) continue;
    total += average_precision(s, t);
    ++evaluated;
  }
  if (evaluated == 0) throw ValidationError("mean_average_precision: no class has a positive sample");
  return 100.0 * total / static_cast<double>(evaluated);
}

struct PseudoLabelFrequency {
  std::size_t label = 0;
  std::size_t count = 0;
};

struct ReliabilityReport {
  double score = 0.0;  // percent of mapped samples whose pseudo-label is the declared target class
  std::size_t correct = 0;
  std::size_t mapped = 0;
  /// Per source class, pseudo-labels by descending frequency (ties: lower label first), at most three.
  std::map<std::size_t, std::vector<PseudoLabelFrequency>> top3;
};

/// Scores hard pseudo-labels (one row per source sample) against the diagnostic classes.
/// Only source classes with a declared target class take part in the score.
inline ReliabilityReport pseudo_label_reliability(const Tensor& predicted, const SourceDiagnostics& diag) {
  if (predicted.rank() != 2 || predicted.rows() != diag.source_class.size()) {
    throw ShapeError("pseudo_label_reliability: " + predicted.shape_string() + " labels for " +
                     std::to_string(diag.source_class.size()) + " diagnostic entries");
  }
  ReliabilityReport r;
  std::map<std::size_t, std::map<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < predicted.rows(); ++i) {
    const std::size_t src = diag.source_class[i];
    const std::size_t label = argmax(predicted.row(i));
    ++counts[src][label];
    if (src >= diag.target_for_source.size() || !diag.target_for_source[src]) continue;
    ++r.mapped;
    if (label == *diag.target_for_source[src]) ++r.correct;
  }
  if (r.mapped == 0) throw ValidationError("pseudo_label_reliability: no sample belongs to a mapped source class");
  r.score = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.mapped);
  for (const auto& [src, hist] : counts) {
    std::vector<PseudoLabelFrequency> freq;
    for (const auto& [label, count] : hist) freq.push_back({label, count});
    std::stable_sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
    if (freq.size() > 3) freq.resize(3);
    r.top3[src] = std::move(freq);
  }
  return r;
}

/// Top-1 accuracy in percent for one-hot truth.
inline double top1_accuracy(const Tensor& logits, const Tensor& truth) {
  if (logits.rank() != 2 || logits.shape() != truth.shape()) {
    throw ShapeError("top1_accuracy: logits " + logits.shape_string() + " vs truth " + truth.shape_string());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i)
    if (truth(i, argmax(logits.row(i))) == 1.0) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace akt
