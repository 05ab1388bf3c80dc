#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempocf/automata.hpp"
#include "tempocf/log.hpp"
#include "tempocf/model.hpp"
#include "tempocf/types.hpp"

namespace tempocf::metrics {

/// Weighting factors of the fitness terms (alpha: distance, beta: sparsity,
/// gamma: implausibility, delta: compliance reward).
struct FitnessWeights {
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.5;
  double delta = 0.5;
};

/// 1 when the prediction misses the desired class; 0 is good.
inline int validity(bool predicted_label, bool desired_label) {
  return predicted_label != desired_label ? 1 : 0;
}

/// Normalized positional mismatch count, in [0, 1].
inline double distance(const Trace& t1, const Trace& t2) {
  if (t1.size() != t2.size()) throw Error("distance: traces must have equal length");
  if (t1.empty()) throw Error("distance: traces must be non-empty");
  std::size_t diff = 0;
  for (std::size_t i = 0; i < t1.size(); ++i) diff += t1[i] != t2[i] ? 1 : 0;
  return static_cast<double>(diff) / static_cast<double>(t1.size());
}

/// L0 count of changed positions; equals len * distance exactly.
inline int sparsity(const Trace& t1, const Trace& t2) {
  if (t1.size() != t2.size()) throw Error("sparsity: traces must have equal length");
  int diff = 0;
  for (std::size_t i = 0; i < t1.size(); ++i) diff += t1[i] != t2[i] ? 1 : 0;
  return diff;
}

/// Distance to the closest reference prefix at the candidate's length.
/// Population traces shorter than the candidate are skipped.
inline double implausibility(const Trace& candidate, const std::vector<Trace>& population) {
  if (candidate.empty()) throw Error("implausibility: candidate must be non-empty");
  const std::size_t len = candidate.size();
  bool comparable = false;
  std::size_t best = len + 1;
  for (const auto& ref : population) {
    if (ref.size() < len) continue;
    comparable = true;
    std::size_t diff = 0;
    for (std::size_t i = 0; i < len && diff < best; ++i) diff += ref[i] != candidate[i] ? 1 : 0;
    if (diff < best) best = diff;
    if (best == 0) break;
  }
  if (!comparable) throw Error("implausibility: no population trace reaches the candidate length");
  return static_cast<double>(best) / static_cast<double>(len);
}

inline double implausibility(const Trace& candidate, const log::EventLog& population) {
  std::vector<Trace> traces;
  traces.reserve(population.size());
  for (const auto& c : population.cases()) traces.push_back(c.trace);
  return implausibility(candidate, traces);
}

/// Mean pairwise distance over the counterfactual set: sets with fewer than
/// two members have diversity 0 by definition.
inline double diversity(const std::vector<Trace>& set) {
  if (set.size() < 2) return 0.0;
  for (const auto& t : set)
    if (t.size() != set.front().size()) throw Error("diversity: mixed trace lengths");
  double sum = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t j = i + 1; j < set.size(); ++j) sum += distance(set[i], set[j]);
  const double pairs = static_cast<double>(set.size()) * static_cast<double>(set.size() - 1);
  return 2.0 * sum / pairs;
}

/// 1 iff the trace satisfies the compiled background-knowledge formula.
inline int compliance(const Trace& candidate, const automata::Dfa& dfa) {
  return dfa.accepts(candidate) ? 1 : 0;
}

/// Minimized fitness: validity + alpha*dist + beta*spars + gamma*implaus
/// + delta*(1 - compliance). Compliance enters as a reward so that
/// satisfying the formula lowers the score.
inline double fitness(const Trace& candidate, const Trace& query, bool desired_label,
                      const model::Classifier& classifier, const std::vector<Trace>& population,
                      const automata::Dfa& dfa, const FitnessWeights& weights) {
  const int val = validity(classifier.predict(candidate), desired_label);
  return static_cast<double>(val) + weights.alpha * distance(query, candidate) +
         weights.beta * static_cast<double>(sparsity(query, candidate)) +
         weights.gamma * implausibility(candidate, population) +
         weights.delta * (1.0 - static_cast<double>(compliance(candidate, dfa)));
}

/// Per-candidate metrics and the aggregate over a counterfactual set.
struct MetricsReport {
  double validity = 0.0;  // means of the per-candidate metrics
  double distance = 0.0;
  double sparsity = 0.0;
  double implausibility = 0.0;
  double compliance = 0.0;
  double diversity = 0.0;
  double hit_rate = 0.0;
  double runtime_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"validity", validity},
            {"distance", distance},
            {"sparsity", sparsity},
            {"implausibility", implausibility},
            {"compliance", compliance},
            {"diversity", diversity},
            {"hit_rate", hit_rate},
            {"runtime_seconds", runtime_seconds}};
  }
};

}  // namespace tempocf::metrics
