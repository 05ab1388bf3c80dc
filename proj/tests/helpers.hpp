#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tempocf/ltl.hpp"
#include "tempocf/rng.hpp"
#include "tempocf/types.hpp"

namespace tempocf::testing {

inline Alphabet letters_alphabet(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::string(1, static_cast<char>('a' + i)));
  return Alphabet(names);
}

/// The running-example alphabet used across the metric and automata tests.
inline Alphabet agency_alphabet() {
  return Alphabet({"apply", "aut_chk", "man_chk", "phone", "ok", "offer", "book", "send_doc",
                   "sms", "email"});
}

/// Random core-AST formula of bounded depth. Leans on atoms so that random
/// formulas tend to be satisfiable by rejection sampling.
inline ltl::Formula::Ptr random_formula(Rng& rng, const Alphabet& alphabet, int max_depth) {
  using F = ltl::Formula;
  const auto r = rng.next_unit();
  if (max_depth <= 0 || r < 0.30) {
    const auto k = rng.next_unit();
    if (k < 0.90) return F::atom_of(static_cast<ActivityId>(rng.next_below(alphabet.size())));
    if (k < 0.95) return F::make_true();
    return F::make_false();
  }
  if (r < 0.45) return F::negation(random_formula(rng, alphabet, max_depth - 1));
  if (r < 0.60)
    return F::conjunction(random_formula(rng, alphabet, max_depth - 1),
                          random_formula(rng, alphabet, max_depth - 1));
  if (r < 0.75)
    return F::disjunction(random_formula(rng, alphabet, max_depth - 1),
                          random_formula(rng, alphabet, max_depth - 1));
  if (r < 0.85) return F::next(random_formula(rng, alphabet, max_depth - 1));
  return F::until(random_formula(rng, alphabet, max_depth - 1),
                  random_formula(rng, alphabet, max_depth - 1));
}

inline Trace random_trace(Rng& rng, const Alphabet& alphabet, std::size_t len) {
  Trace t(len);
  for (auto& a : t) a = static_cast<ActivityId>(rng.next_below(alphabet.size()));
  return t;
}

/// Rejection-samples a trace satisfying the formula, or nullopt if the
/// attempt budget runs out (the formula is then likely unsatisfiable at
/// these lengths).
inline std::optional<Trace> find_satisfying(Rng& rng, const ltl::Formula::Ptr& formula,
                                            const Alphabet& alphabet, std::size_t len,
                                            int attempts = 200) {
  for (int i = 0; i < attempts; ++i) {
    Trace t = random_trace(rng, alphabet, len);
    if (ltl::evaluate(t, formula)) return t;
  }
  return std::nullopt;
}

/// Enumerates all traces over the alphabet with lengths in [1, max_len] and
/// feeds them to the callback.
template <class Fn>
inline void for_all_traces(const Alphabet& alphabet, std::size_t max_len, Fn&& fn) {
  const std::size_t k = alphabet.size();
  for (std::size_t len = 1; len <= max_len; ++len) {
    Trace t(len, 0);
    for (;;) {
      fn(const_cast<const Trace&>(t));
      std::size_t pos = 0;
      while (pos < len) {
        if (++t[pos] < k) break;
        t[pos] = 0;
        ++pos;
      }
      if (pos == len) break;
    }
  }
}

}  // namespace tempocf::testing
