#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tempocf/automata.hpp"
#include "tempocf/log.hpp"
#include "tempocf/ltl.hpp"
#include "tempocf/metrics.hpp"
#include "tempocf/model.hpp"
#include "tempocf/rng.hpp"
#include "tempocf/types.hpp"

namespace tempocf::engine {

/// Raised when a constrained strategy is asked to explain a query that does
/// not satisfy the background-knowledge formula; the operators' safety
/// guarantees hold only for compliant queries.
struct HypothesisViolation : Error {
  using Error::Error;
};

enum class Strategy { Gen, GenPhi, Mar, APriori, Online };

inline bool is_constrained(Strategy s) {
  return s == Strategy::Mar || s == Strategy::APriori || s == Strategy::Online;
}

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Gen: return "Gen";
    case Strategy::GenPhi: return "GenPhi";
    case Strategy::Mar: return "MAR";
    case Strategy::APriori: return "APriori";
    case Strategy::Online: return "Online";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
  for (Strategy s : {Strategy::Gen, Strategy::GenPhi, Strategy::Mar, Strategy::APriori,
                     Strategy::Online})
    if (strategy_name(s) == name) return s;
  throw Error("unknown strategy '" + name + "' (expected Gen|GenPhi|MAR|APriori|Online)");
}

struct GaConfig {
  std::size_t population_size = 50;
  std::size_t generations = 100;
  double p_c = 0.5;
  double p_mut = 0.2;
  double selection_fraction = 0.5;
  std::size_t patience = 20;  // stagnant generations before early stop
  std::uint64_t seed = 0;
  std::size_t t = 5;  // requested counterfactuals
  metrics::FitnessWeights weights;
  Strategy strategy = Strategy::Online;
  int mar_max_retries = 100;

  void validate() const {
    if (population_size < 2) throw Error("config: population_size must be >= 2");
    if (generations < 1) throw Error("config: generations must be >= 1");
    if (p_c < 0.0 || p_c > 1.0) throw Error("config: p_c must be in [0,1]");
    if (p_mut < 0.0 || p_mut > 1.0) throw Error("config: p_mut must be in [0,1]");
    if (selection_fraction <= 0.0 || selection_fraction > 1.0)
      throw Error("config: selection_fraction must be in (0,1]");
    if (t < 1) throw Error("config: t must be >= 1");
    if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0 || weights.delta < 0)
      throw Error("config: weights must be nonnegative");
    if (mar_max_retries < 1) throw Error("config: mar_max_retries must be >= 1");
  }
};

struct Individual {
  Trace chromosome;
  double fitness = 0.0;
  double score = 0.0;   // classifier probability, cached
  bool compliant = false;
  int sparsity = 0;     // changes against the query, cached for tie-breaks
};

struct CounterfactualCandidate {
  Trace trace;
  int validity = 0;
  double distance = 0.0;
  int sparsity = 0;
  double implausibility = 0.0;
  int compliance = 0;
  double fitness = 0.0;
};

struct CounterfactualSet {
  Trace query;
  bool desired_label = false;
  Strategy strategy = Strategy::Online;
  GaConfig config;
  std::vector<CounterfactualCandidate> candidates;
  metrics::MetricsReport report;
};

/// Temporal knowledge-aware crossover. Positions where the query mentions a
/// constrained activity are pinned to the query; the rest take parent genes
/// when those genes stay outside Sigma_phi, falling back to the query gene.
/// Preserves satisfaction of the formula whenever the query satisfies it.
inline Trace constrained_crossover(const Trace& p1, const Trace& p2, const Trace& query,
                                   const ltl::FormulaSignature& sig, double p_c, Rng& rng) {
  const std::size_t n = query.size();
  if (p1.size() != n || p2.size() != n)
    throw Error("constrained_crossover: length mismatch");
  constexpr ActivityId kUnset = std::numeric_limits<ActivityId>::max();
  Trace child(n, kUnset);
  for (std::size_t i = 0; i < n; ++i)
    if (sig.mentions(query[i])) child[i] = query[i];
  for (std::size_t i = 0; i < n; ++i) {
    const double p = rng.next_unit();  // drawn every position, used when unset
    if (child[i] != kUnset) continue;
    if (p < p_c && !sig.mentions(p1[i]))
      child[i] = p1[i];
    else if (p >= p_c && !sig.mentions(p2[i]))
      child[i] = p2[i];
    else
      child[i] = query[i];
  }
  return child;
}

/// Baseline uniform crossover: each gene from parent 1 with probability p_c,
/// else from parent 2.
inline Trace standard_crossover(const Trace& p1, const Trace& p2, double p_c, Rng& rng) {
  if (p1.size() != p2.size()) throw Error("standard_crossover: length mismatch");
  Trace child(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    child[i] = rng.next_unit() < p_c ? p1[i] : p2[i];
  return child;
}

namespace detail {

/// Uniform draw from domain ∩ filter. Returns the current gene when the
/// sampling set is empty.
template <class Keep>
inline ActivityId draw_from(const std::vector<ActivityId>& domain, Keep&& keep, ActivityId current,
                            Rng& rng) {
  std::vector<ActivityId> pool;
  pool.reserve(domain.size());
  for (auto a : domain)
    if (keep(a)) pool.push_back(a);
  if (pool.empty()) return current;
  return pool[static_cast<std::size_t>(rng.next_below(pool.size()))];
}

}  // namespace detail

/// aPriori mutation: genes outside Sigma_phi mutate within D_i \ Sigma_phi;
/// everything else stays. Preserves satisfaction of the formula.
inline Trace mutate_apriori(const Trace& offspring, const ltl::FormulaSignature& sig,
                            const log::Domains& domains, double p_mut, Rng& rng) {
  if (domains.horizon() < offspring.size()) throw Error("mutate: domains do not cover the trace");
  Trace out = offspring;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (rng.next_unit() >= p_mut) continue;
    if (sig.mentions(out[i])) continue;
    out[i] = detail::draw_from(
        domains.at(i + 1), [&](ActivityId a) { return !sig.mentions(a); }, out[i], rng);
  }
  return out;
}

/// Online mutation: each gene mutates within D_i ∩ SafeAct(current trace, i).
/// Positions are processed left to right against the partially mutated trace;
/// by construction every replacement keeps the automaton run unchanged, so
/// acceptance is preserved.
inline Trace mutate_online(const Trace& offspring, const automata::Dfa& dfa,
                           const log::Domains& domains, double p_mut, Rng& rng) {
  if (domains.horizon() < offspring.size()) throw Error("mutate: domains do not cover the trace");
  Trace out = offspring;
  automata::StateId q = dfa.initial();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (rng.next_unit() < p_mut) {
      const auto safe = dfa.safe_from(q, out[i]);
      std::vector<bool> is_safe(dfa.alphabet().size(), false);
      for (auto a : safe) is_safe[a] = true;
      out[i] = detail::draw_from(
          domains.at(i + 1), [&](ActivityId a) { return is_safe[a]; }, out[i], rng);
    }
    q = dfa.step(q, out[i]);
  }
  return out;
}

/// Baseline mutation: each gene mutates within the full D_i.
inline Trace mutate_standard(const Trace& offspring, const log::Domains& domains, double p_mut,
                             Rng& rng) {
  if (domains.horizon() < offspring.size()) throw Error("mutate: domains do not cover the trace");
  Trace out = offspring;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (rng.next_unit() >= p_mut) continue;
    out[i] = detail::draw_from(
        domains.at(i + 1), [](ActivityId) { return true; }, out[i], rng);
  }
  return out;
}

/// Mutate-And-Retry baseline: unconstrained mutation re-checked against the
/// automaton, resampling until compliant. Retry exhaustion silently returns
/// the input.
inline Trace mutate_and_retry(const Trace& offspring, const automata::Dfa& dfa,
                              const log::Domains& domains, double p_mut, Rng& rng,
                              int max_retries = 100, int* retries_used = nullptr) {
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    Trace candidate = mutate_standard(offspring, domains, p_mut, rng);
    if (dfa.accepts(candidate)) {
      if (retries_used) *retries_used = attempt;
      return candidate;
    }
  }
  if (retries_used) *retries_used = max_retries;
  return offspring;
}

/// Strategy dispatch for the mutation phase.
inline Trace mutate(const Trace& offspring, Strategy strategy, const ltl::FormulaSignature& sig,
                    const automata::Dfa& dfa, const log::Domains& domains, double p_mut, Rng& rng,
                    int mar_max_retries = 100) {
  switch (strategy) {
    case Strategy::APriori: return mutate_apriori(offspring, sig, domains, p_mut, rng);
    case Strategy::Online: return mutate_online(offspring, dfa, domains, p_mut, rng);
    case Strategy::Mar:
      return mutate_and_retry(offspring, dfa, domains, p_mut, rng, mar_max_retries);
    case Strategy::Gen:
    case Strategy::GenPhi: return mutate_standard(offspring, domains, p_mut, rng);
  }
  throw Error("mutate: unreachable");
}

/// Hybrid initialization: reference prefixes predicted as the desired class,
/// closest to the query first, topped up with random traces drawn from the
/// per-position domains.
inline std::vector<Trace> initialize_population(const Trace& query, bool desired_label,
                                                const log::EventLog& population_log,
                                                const model::Classifier& classifier,
                                                const log::Domains& domains, std::size_t size,
                                                Rng& rng) {
  if (domains.horizon() < query.size())
    throw Error("initialize_population: domains do not cover the query length");
  struct Seeded {
    double dist;
    Trace trace;
  };
  std::vector<Seeded> seeds;
  for (const auto& c : population_log.cases()) {
    if (c.trace.size() != query.size()) continue;
    if (classifier.predict(c.trace) != desired_label) continue;
    seeds.push_back({metrics::distance(query, c.trace), c.trace});
  }
  std::sort(seeds.begin(), seeds.end(), [](const Seeded& a, const Seeded& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.trace < b.trace;
  });

  std::vector<Trace> population;
  population.reserve(size);
  for (const auto& s : seeds) {
    if (population.size() >= size) break;
    population.push_back(s.trace);
  }
  while (population.size() < size) {
    Trace t(query.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& domain = domains.at(i + 1);
      t[i] = domain[static_cast<std::size_t>(rng.next_below(domain.size()))];
    }
    population.push_back(std::move(t));
  }
  return population;
}

/// Keeps the ceil(fraction * size) lowest-fitness individuals. Ties break on
/// sparsity, then lexicographic chromosome, so selection is deterministic.
inline std::vector<Individual> select(std::vector<Individual> population, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0) throw Error("select: fraction must be in (0,1]");
  std::sort(population.begin(), population.end(), [](const Individual& a, const Individual& b) {
    if (a.fitness != b.fitness) return a.fitness < b.fitness;
    if (a.sparsity != b.sparsity) return a.sparsity < b.sparsity;
    return a.chromosome < b.chromosome;
  });
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(population.size())));
  population.resize(std::min(population.size(), std::max<std::size_t>(keep, 1)));
  return population;
}

/// Runs the generational loop and extracts up to t counterfactuals.
///
/// The reference log is prefixed to the query length and serves three roles:
/// position domains D_i, hybrid initialization, and the implausibility
/// population. Constrained strategies require the query itself to satisfy
/// the formula. Results are deterministic for a fixed config and seed; the
/// reported runtime is the only wall-clock output and callers may zero it.
inline CounterfactualSet generate(const Trace& query, bool desired_label,
                                  const ltl::Formula::Ptr& formula, const log::EventLog& log,
                                  const model::Classifier& classifier, const GaConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  config.validate();
  if (query.empty()) throw Error("generate: query must be non-empty");

  GaConfig cfg = config;
  if (cfg.t > cfg.population_size) {
    std::cerr << "warning: t=" << cfg.t << " exceeds population_size=" << cfg.population_size
              << "; clamping\n";
    cfg.t = cfg.population_size;
  }
  // Gen is the delta-free baseline regardless of the configured weight.
  if (cfg.strategy == Strategy::Gen) cfg.weights.delta = 0.0;

  if (is_constrained(cfg.strategy) && !ltl::evaluate(query, formula))
    throw HypothesisViolation("query does not satisfy the background formula; the " +
                              strategy_name(cfg.strategy) +
                              " strategy requires a compliant query");

  const auto prefixed = log::prefixes(log, query.size());
  if (prefixed.empty())
    throw Error("generate: no reference trace reaches the query length " +
                std::to_string(query.size()));
  const auto doms = log::domains(prefixed, query.size());
  const auto sig = ltl::signature(formula, log.alphabet());
  const auto dfa = automata::compile(formula, log.alphabet());

  std::vector<Trace> population_traces;
  population_traces.reserve(prefixed.size());
  for (const auto& c : prefixed.cases()) population_traces.push_back(c.trace);
  std::sort(population_traces.begin(), population_traces.end());
  population_traces.erase(std::unique(population_traces.begin(), population_traces.end()),
                          population_traces.end());

  Rng rng(cfg.seed);

  struct Eval {
    double fitness;
    double score;
    bool compliant;
    int sparsity;
  };
  std::unordered_map<Trace, Eval, TraceHash> seen;
  auto evaluate_trace = [&](const Trace& chromo) -> const Eval& {
    auto it = seen.find(chromo);
    if (it != seen.end()) return it->second;
    Eval e;
    e.score = classifier.score(chromo);
    const bool predicted = e.score > 0.5;
    e.compliant = dfa.accepts(chromo);
    e.sparsity = metrics::sparsity(query, chromo);
    e.fitness = static_cast<double>(metrics::validity(predicted, desired_label)) +
                cfg.weights.alpha * metrics::distance(query, chromo) +
                cfg.weights.beta * static_cast<double>(e.sparsity) +
                cfg.weights.gamma * metrics::implausibility(chromo, population_traces) +
                cfg.weights.delta * (1.0 - (e.compliant ? 1.0 : 0.0));
    return seen.emplace(chromo, e).first->second;
  };

  auto make_individual = [&](Trace chromo) {
    const Eval& e = evaluate_trace(chromo);
    return Individual{std::move(chromo), e.fitness, e.score, e.compliant, e.sparsity};
  };

  std::vector<Individual> population;
  for (auto& t : initialize_population(query, desired_label, prefixed, classifier, doms,
                                       cfg.population_size, rng))
    population.push_back(make_individual(std::move(t)));

  double best_fitness = std::numeric_limits<double>::infinity();
  std::size_t stagnant = 0;
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    double gen_best = std::numeric_limits<double>::infinity();
    for (const auto& ind : population) gen_best = std::min(gen_best, ind.fitness);
    if (gen_best < best_fitness - 1e-9) {
      best_fitness = gen_best;
      stagnant = 0;
    } else if (++stagnant >= cfg.patience) {
      break;
    }

    auto survivors = select(std::move(population), cfg.selection_fraction);
    std::vector<Individual> next = survivors;  // the elite survive unmodified
    while (next.size() < cfg.population_size) {
      const auto& p1 = survivors[static_cast<std::size_t>(rng.next_below(survivors.size()))];
      const auto& p2 = survivors[static_cast<std::size_t>(rng.next_below(survivors.size()))];
      Trace child;
      if (cfg.strategy == Strategy::APriori || cfg.strategy == Strategy::Online)
        child = constrained_crossover(p1.chromosome, p2.chromosome, query, sig, cfg.p_c, rng);
      else
        child = standard_crossover(p1.chromosome, p2.chromosome, cfg.p_c, rng);
      child = mutate(child, cfg.strategy, sig, dfa, doms, cfg.p_mut, rng, cfg.mar_max_retries);
      next.push_back(make_individual(std::move(child)));
    }
    population = std::move(next);
  }

  // Extraction: every evaluated chromosome that flips the prediction (and,
  // for constrained strategies, satisfies the formula), best fitness first.
  struct Pick {
    double fitness;
    int sparsity;
    const Trace* trace;
  };
  std::vector<Pick> pool;
  for (const auto& [chromo, e] : seen) {
    const bool predicted = e.score > 0.5;
    if (predicted != desired_label) continue;
    if (is_constrained(cfg.strategy) && !e.compliant) continue;
    pool.push_back({e.fitness, e.sparsity, &chromo});
  }
  std::sort(pool.begin(), pool.end(), [](const Pick& a, const Pick& b) {
    if (a.fitness != b.fitness) return a.fitness < b.fitness;
    if (a.sparsity != b.sparsity) return a.sparsity < b.sparsity;
    return *a.trace < *b.trace;
  });

  CounterfactualSet result;
  result.query = query;
  result.desired_label = desired_label;
  result.strategy = cfg.strategy;
  result.config = cfg;
  std::vector<Trace> chosen;
  for (const auto& p : pool) {
    if (result.candidates.size() >= cfg.t) break;
    CounterfactualCandidate cand;
    cand.trace = *p.trace;
    cand.validity = 0;
    cand.distance = metrics::distance(query, cand.trace);
    cand.sparsity = p.sparsity;
    cand.implausibility = metrics::implausibility(cand.trace, population_traces);
    cand.compliance = seen.at(cand.trace).compliant ? 1 : 0;
    cand.fitness = p.fitness;
    chosen.push_back(cand.trace);
    result.candidates.push_back(std::move(cand));
  }

  auto& rep = result.report;
  const auto n_cands = static_cast<double>(result.candidates.size());
  if (!result.candidates.empty()) {
    for (const auto& c : result.candidates) {
      rep.validity += c.validity;
      rep.distance += c.distance;
      rep.sparsity += c.sparsity;
      rep.implausibility += c.implausibility;
      rep.compliance += c.compliance;
    }
    rep.validity /= n_cands;
    rep.distance /= n_cands;
    rep.sparsity /= n_cands;
    rep.implausibility /= n_cands;
    rep.compliance /= n_cands;
  }
  rep.diversity = metrics::diversity(chosen);
  rep.hit_rate = n_cands / static_cast<double>(cfg.t);
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

inline nlohmann::json config_to_json(const GaConfig& cfg) {
  return {{"population_size", cfg.population_size},
          {"generations", cfg.generations},
          {"p_c", cfg.p_c},
          {"p_mut", cfg.p_mut},
          {"selection_fraction", cfg.selection_fraction},
          {"patience", cfg.patience},
          {"seed", cfg.seed},
          {"t", cfg.t},
          {"alpha", cfg.weights.alpha},
          {"beta", cfg.weights.beta},
          {"gamma", cfg.weights.gamma},
          {"delta", cfg.weights.delta},
          {"strategy", strategy_name(cfg.strategy)},
          {"mar_max_retries", cfg.mar_max_retries}};
}

inline nlohmann::json to_json(const CounterfactualSet& set, const Alphabet& alphabet,
                              bool include_runtime = false) {
  nlohmann::json j;
  j["query"] = trace_names(alphabet, set.query);
  j["desired_label"] = set.desired_label;
  j["strategy"] = strategy_name(set.strategy);
  j["config"] = config_to_json(set.config);
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : set.candidates) {
    j["candidates"].push_back({{"trace", trace_names(alphabet, c.trace)},
                               {"validity", c.validity},
                               {"distance", c.distance},
                               {"sparsity", c.sparsity},
                               {"implausibility", c.implausibility},
                               {"compliance", c.compliance},
                               {"fitness", c.fitness}});
  }
  auto rep = set.report;
  if (!include_runtime) rep.runtime_seconds = 0.0;
  j["report"] = rep.to_json();
  return j;
}

}  // namespace tempocf::engine
