#pragma once

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tempocf/engine.hpp"
#include "tempocf/log.hpp"
#include "tempocf/ltl.hpp"
#include "tempocf/model.hpp"
#include "tempocf/rng.hpp"

namespace tempocf::bench {

struct FormulaSpec {
  std::string id;  // human label used in the CSV
  ltl::Formula::Ptr formula;
};

struct BenchSpec {
  std::vector<std::string> strategies;  // names, e.g. {"Gen", "APriori"}
  std::vector<FormulaSpec> formulas;
  std::vector<std::size_t> prefixes;
  std::size_t queries_per_cell = 15;
  std::uint64_t seed = 0;
  engine::GaConfig ga;  // strategy/seed fields overridden per cell
  model::TrainHyper hyper;
};

/// One CSV row: a (strategy, formula, prefix) cell aggregated over its
/// sampled queries.
struct BenchRow {
  std::string strategy;
  std::string formula_id;
  double coverage = 0.0;
  std::size_t prefix = 0;
  double distance = 0.0;
  double sparsity = 0.0;
  double implausibility = 0.0;
  double diversity = 0.0;
  double compliance = 0.0;
  double hit_rate = 0.0;
  double runtime_seconds = 0.0;
  std::size_t queries_with_candidates = 0;
  std::size_t queries_total = 0;
};

inline std::string csv_header() {
  return "strategy,formula_id,coverage,prefix,distance,sparsity,implausibility,diversity,"
         "compliance,hit_rate,runtime_seconds";
}

inline std::string to_csv(const BenchRow& r) {
  std::ostringstream out;
  out << r.strategy << ',' << r.formula_id << ',' << r.coverage << ',' << r.prefix << ','
      << r.distance << ',' << r.sparsity << ',' << r.implausibility << ',' << r.diversity << ','
      << r.compliance << ',' << r.hit_rate << ',' << r.runtime_seconds;
  return out.str();
}

/// Samples query cases from the test split: prefixes that satisfy the
/// formula (every strategy shares the same query set, so constrained runs
/// meet their hypothesis and rows stay comparable). The desired class is the
/// flip of the model's prediction. Seeded Fisher-Yates keeps the draw
/// uniform and deterministic.
inline std::vector<Trace> sample_queries(const log::EventLog& test_prefixed,
                                         const ltl::Formula::Ptr& formula, std::size_t count,
                                         Rng& rng) {
  std::vector<const Trace*> eligible;
  for (const auto& c : test_prefixed.cases()) {
    if (!ltl::evaluate(c.trace, formula)) continue;
    eligible.push_back(&c.trace);
  }
  for (std::size_t i = eligible.size(); i > 1; --i)
    std::swap(eligible[i - 1], eligible[static_cast<std::size_t>(rng.next_below(i))]);
  std::vector<Trace> out;
  for (std::size_t i = 0; i < eligible.size() && out.size() < count; ++i)
    out.push_back(*eligible[i]);
  return out;
}

/// Runs the full matrix. Per-cell failures are reported on `errors` and the
/// run continues. Every cell derives its own seed from (master seed, cell
/// indices), so results do not depend on execution order.
inline std::vector<BenchRow> run(const log::EventLog& log, const BenchSpec& spec,
                                 std::ostream& errors = std::cerr) {
  std::vector<BenchRow> rows;
  for (std::size_t pi = 0; pi < spec.prefixes.size(); ++pi) {
    const std::size_t prefix = spec.prefixes[pi];
    auto prefixed = log::prefixes(log, prefix);
    if (prefixed.empty()) {
      errors << "bench: no case reaches prefix " << prefix << "; skipping\n";
      continue;
    }
    model::TrainHyper hyper = spec.hyper;
    hyper.seed = mix_seed({spec.seed, 0xed0caull, pi});
    auto trained = model::train_linear(log, prefix, hyper);
    model::LinearClassifier classifier(trained);
    auto split = model::chronological_split(prefixed);

    for (std::size_t fi = 0; fi < spec.formulas.size(); ++fi) {
      const auto& fspec = spec.formulas[fi];
      const auto sig = ltl::signature(fspec.formula, log.alphabet());
      const double coverage =
          static_cast<double>(sig.active.size()) / static_cast<double>(log.alphabet().size());

      Rng sample_rng(mix_seed({spec.seed, 0x5eedull, pi, fi}));
      const auto queries =
          sample_queries(split.test, fspec.formula, spec.queries_per_cell, sample_rng);
      if (queries.size() < spec.queries_per_cell)
        errors << "bench: only " << queries.size() << " eligible queries for formula '"
               << fspec.id << "' at prefix " << prefix << "\n";
      if (queries.empty()) continue;

      for (std::size_t si = 0; si < spec.strategies.size(); ++si) {
        BenchRow row;
        row.strategy = spec.strategies[si];
        row.formula_id = fspec.id;
        row.coverage = coverage;
        row.prefix = prefix;
        row.queries_total = queries.size();
        double hit_sum = 0.0;
        std::size_t failures = 0;
        for (std::size_t qi = 0; qi < queries.size(); ++qi) {
          engine::GaConfig cfg = spec.ga;
          cfg.strategy = engine::strategy_from_name(spec.strategies[si]);
          cfg.seed = mix_seed({spec.seed, si, fi, pi, qi});
          const bool desired = !classifier.predict(queries[qi]);
          try {
            auto result = engine::generate(queries[qi], desired, fspec.formula, split.train,
                                           classifier, cfg);
            hit_sum += result.report.hit_rate;
            if (!result.candidates.empty()) {
              row.distance += result.report.distance;
              row.sparsity += result.report.sparsity;
              row.implausibility += result.report.implausibility;
              row.diversity += result.report.diversity;
              row.compliance += result.report.compliance;
              ++row.queries_with_candidates;
            }
            row.runtime_seconds += result.report.runtime_seconds;
          } catch (const std::exception& e) {
            errors << "bench: cell (" << row.strategy << ", " << fspec.id << ", " << prefix
                   << ") query " << qi << " failed: " << e.what() << "\n";
            ++failures;
          }
        }
        const auto attempted = static_cast<double>(queries.size());
        if (row.queries_with_candidates > 0) {
          const auto n = static_cast<double>(row.queries_with_candidates);
          row.distance /= n;
          row.sparsity /= n;
          row.implausibility /= n;
          row.diversity /= n;
          row.compliance /= n;
        }
        row.hit_rate = hit_sum / attempted;
        row.runtime_seconds /= attempted;
        (void)failures;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace tempocf::bench
