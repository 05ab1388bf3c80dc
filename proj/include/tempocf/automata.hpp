#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <sstream>
#include <tuple>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempocf/ltl.hpp"
#include "tempocf/types.hpp"

namespace tempocf::automata {

using StateId = std::uint32_t;

/// Deterministic finite automaton over process traces: transitions are
/// labelled by single activities and the table is total. Immutable once
/// built; safe to share across threads.
class Dfa {
 public:
  Dfa(Alphabet alphabet, StateId num_states, StateId initial, std::vector<StateId> delta,
      std::vector<bool> accepting)
      : alphabet_(std::move(alphabet)),
        num_states_(num_states),
        initial_(initial),
        delta_(std::move(delta)),
        accepting_(std::move(accepting)) {
    if (num_states_ == 0) throw Error("dfa: needs at least one state");
    if (initial_ >= num_states_) throw Error("dfa: initial state out of range");
    if (delta_.size() != static_cast<std::size_t>(num_states_) * alphabet_.size())
      throw Error("dfa: transition table is not total");
    for (auto s : delta_)
      if (s >= num_states_) throw Error("dfa: transition target out of range");
    if (accepting_.size() != num_states_) throw Error("dfa: accepting flags malformed");
  }

  const Alphabet& alphabet() const { return alphabet_; }
  StateId num_states() const { return num_states_; }
  StateId initial() const { return initial_; }
  bool is_accepting(StateId s) const { return accepting_[s]; }

  StateId step(StateId s, ActivityId a) const { return delta_[s * alphabet_.size() + a]; }

  StateId num_accepting() const {
    return static_cast<StateId>(std::count(accepting_.begin(), accepting_.end(), true));
  }

  /// The sequence of len(trace)+1 states visited while reading the trace.
  std::vector<StateId> run_path(const Trace& trace) const {
    check_trace(trace);
    std::vector<StateId> path;
    path.reserve(trace.size() + 1);
    StateId q = initial_;
    path.push_back(q);
    for (auto a : trace) {
      q = step(q, a);
      path.push_back(q);
    }
    return path;
  }

  bool accepts(const Trace& trace) const {
    check_trace(trace);
    StateId q = initial_;
    for (auto a : trace) q = step(q, a);
    return accepting_[q];
  }

  /// Activities that, substituted into `from_state` in place of `current`,
  /// lead to the same successor state.
  std::vector<ActivityId> safe_from(StateId from_state, ActivityId current) const {
    const StateId target = step(from_state, current);
    std::vector<ActivityId> out;
    for (ActivityId a = 0; a < alphabet_.size(); ++a)
      if (step(from_state, a) == target) out.push_back(a);
    return out;
  }

  /// Safe-activity query: the activities interchangeable with trace(i)
  /// without disturbing the run. Always contains trace(i) itself.
  std::vector<ActivityId> safe_activities(const Trace& trace, std::size_t instant) const {
    check_trace(trace);
    if (instant < 1 || instant > trace.size()) throw Error("safe_activities: instant out of range");
    StateId q = initial_;
    for (std::size_t j = 1; j < instant; ++j) q = step(q, trace[j - 1]);
    return safe_from(q, trace[instant - 1]);
  }

  /// Diagnostic: no accepting state is reachable from s.
  bool is_trap(StateId s) const {
    std::vector<bool> seen(num_states_, false);
    std::deque<StateId> queue{s};
    seen[s] = true;
    while (!queue.empty()) {
      StateId q = queue.front();
      queue.pop_front();
      if (accepting_[q]) return false;
      for (ActivityId a = 0; a < alphabet_.size(); ++a) {
        StateId n = step(q, a);
        if (!seen[n]) {
          seen[n] = true;
          queue.push_back(n);
        }
      }
    }
    return true;
  }

  bool operator==(const Dfa& other) const {
    return alphabet_ == other.alphabet_ && num_states_ == other.num_states_ &&
           initial_ == other.initial_ && delta_ == other.delta_ && accepting_ == other.accepting_;
  }

 private:
  void check_trace(const Trace& trace) const {
    if (trace.empty()) throw Error("dfa: trace must be non-empty");
    for (auto a : trace)
      if (a >= alphabet_.size()) throw Error("dfa: trace activity outside alphabet");
  }

  Alphabet alphabet_;
  StateId num_states_;
  StateId initial_;
  std::vector<StateId> delta_;  // num_states x |alphabet|, dense
  std::vector<bool> accepting_;
};

namespace detail {

// Residual-language arena for the derivative construction.
//
// Residuals denote languages over Sigma* (the derivative of an atom already
// contains the empty suffix). Boolean structure is kept canonical as ordered,
// hash-consed decision diagrams whose variables are the temporal base terms
// Atom(a), Next(psi) and Until(psi1, psi2); TrueStar (all suffixes) and the
// empty language are the terminals. Derivation rewrites variables only —
//   Atom b    -> TrueStar if the consumed activity matches, else Empty
//   Next psi  -> psi
//   Until u   -> deriv(psi2) | (deriv(psi1) & u)
// — so the variable set is fixed once a formula is embedded and the residual
// space is finite by construction. A state accepts iff its residual is
// nullable, i.e. holds of the empty suffix: nullable(Atom) = nullable(Next)
// = false, nullable(Until) = nullable(psi2).
//
// User formulas are interpreted over non-empty traces, so the embedding
// guards the two places where the empty suffix would otherwise leak in:
// `true` becomes "some activity follows" (Next TrueStar) and negation is
// intersected with the same guard.
class ResidualArena {
 public:
  using Ref = std::uint32_t;  // decision-diagram node

  static constexpr Ref kEmpty = 0;     // terminal: empty language
  static constexpr Ref kTrueStar = 1;  // terminal: all suffixes

  ResidualArena() {
    nodes_.push_back({0, 0, 0});  // terminal slots, never dereferenced
    nodes_.push_back({0, 0, 0});
    alive_ = var_ref(intern_var({VarKind::Next, 0, kTrueStar, 0}));
  }

  bool nullable(Ref r) const {
    if (r == kEmpty) return false;
    if (r == kTrueStar) return true;
    const auto& n = nodes_[r];
    return var_nullable(n.var) ? nullable(n.hi) : nullable(n.lo);
  }

  /// Embeds a core LTLp formula, guarding for non-empty-trace semantics.
  Ref embed(const ltl::Formula::Ptr& f) {
    using ltl::Op;
    switch (f->op) {
      case Op::True: return alive_;
      case Op::False: return kEmpty;
      case Op::Atom: return var_ref(intern_var({VarKind::Atom, f->atom, 0, 0}));
      case Op::Not: return conjunction(alive_, negation(embed(f->lhs)));
      case Op::And: return conjunction(embed(f->lhs), embed(f->rhs));
      case Op::Or: return disjunction(embed(f->lhs), embed(f->rhs));
      case Op::Next: return var_ref(intern_var({VarKind::Next, 0, embed(f->lhs), 0}));
      case Op::Until: {
        const Ref lhs = embed(f->lhs);
        const Ref rhs = embed(f->rhs);
        return var_ref(intern_var({VarKind::Until, 0, lhs, rhs}));
      }
    }
    throw Error("embed: unreachable");
  }

  /// Brzozowski derivative with respect to one activity.
  Ref derive(Ref r, ActivityId a) {
    if (r == kEmpty || r == kTrueStar) return r;
    const auto key = std::make_pair(r, a);
    if (auto it = derive_cache_.find(key); it != derive_cache_.end()) return it->second;
    const auto n = nodes_[r];  // copy: recursion may reallocate nodes_
    const Ref out = ite(derive_var(n.var, a), derive(n.hi, a), derive(n.lo, a));
    derive_cache_.emplace(key, out);
    return out;
  }

 private:
  enum class VarKind : std::uint8_t { Atom, Next, Until };

  struct Var {
    VarKind kind;
    ActivityId atom;  // Atom only
    Ref c1;           // Next operand / Until lhs
    Ref c2;           // Until rhs
  };

  struct Node {
    std::uint32_t var;
    Ref hi;
    Ref lo;
  };

  Ref negation(Ref x) { return ite(x, kEmpty, kTrueStar); }
  Ref conjunction(Ref x, Ref y) { return ite(x, y, kEmpty); }
  Ref disjunction(Ref x, Ref y) { return ite(x, kTrueStar, y); }

  bool var_nullable(std::uint32_t v) const {
    const Var& var = vars_[v];
    return var.kind == VarKind::Until && nullable(var.c2);
  }

  Ref derive_var(std::uint32_t v, ActivityId a) {
    const Var var = vars_[v];
    switch (var.kind) {
      case VarKind::Atom:
        return var.atom == a ? kTrueStar : kEmpty;
      case VarKind::Next:
        return var.c1;
      case VarKind::Until:
        return disjunction(derive(var.c2, a), conjunction(derive(var.c1, a), var_ref(v)));
    }
    throw Error("derive_var: unreachable");
  }

  static constexpr std::uint32_t kNoVar = 0xffffffffu;

  std::uint32_t top_var(Ref r) const { return r <= kTrueStar ? kNoVar : nodes_[r].var; }

  Ref cofactor(Ref r, std::uint32_t v, bool hi) const {
    if (r <= kTrueStar || nodes_[r].var != v) return r;
    return hi ? nodes_[r].hi : nodes_[r].lo;
  }

  Ref ite(Ref f, Ref g, Ref h) {
    if (f == kTrueStar) return g;
    if (f == kEmpty) return h;
    if (g == h) return g;
    if (g == kTrueStar && h == kEmpty) return f;
    const auto key = std::make_tuple(f, g, h);
    if (auto it = ite_cache_.find(key); it != ite_cache_.end()) return it->second;
    const std::uint32_t v = std::min({top_var(f), top_var(g), top_var(h)});
    const Ref hi = ite(cofactor(f, v, true), cofactor(g, v, true), cofactor(h, v, true));
    const Ref lo = ite(cofactor(f, v, false), cofactor(g, v, false), cofactor(h, v, false));
    const Ref out = hi == lo ? hi : mk_node(v, hi, lo);
    ite_cache_.emplace(key, out);
    return out;
  }

  Ref var_ref(std::uint32_t v) { return mk_node(v, kTrueStar, kEmpty); }

  Ref mk_node(std::uint32_t v, Ref hi, Ref lo) {
    auto [it, fresh] = node_index_.try_emplace(pack_key(v, hi, lo), 0);
    if (!fresh) return it->second;
    const Ref r = static_cast<Ref>(nodes_.size());
    nodes_.push_back({v, hi, lo});
    it->second = r;
    return r;
  }

  static std::string pack_key(std::uint32_t v, Ref hi, Ref lo) {
    std::string k(12, '\0');
    std::memcpy(k.data(), &v, 4);
    std::memcpy(k.data() + 4, &hi, 4);
    std::memcpy(k.data() + 8, &lo, 4);
    return k;
  }

  std::uint32_t intern_var(Var var) {
    std::string key(11, '\0');
    key[0] = static_cast<char>(var.kind);
    std::memcpy(key.data() + 1, &var.atom, 2);
    std::memcpy(key.data() + 3, &var.c1, 4);
    std::memcpy(key.data() + 7, &var.c2, 4);
    auto [it, fresh] = var_index_.try_emplace(std::move(key), 0);
    if (!fresh) return it->second;
    const std::uint32_t v = static_cast<std::uint32_t>(vars_.size());
    vars_.push_back(var);
    it->second = v;
    return v;
  }

  struct TupleHash {
    std::size_t operator()(const std::tuple<Ref, Ref, Ref>& t) const {
      std::uint64_t h = std::get<0>(t);
      h = h * 0x9e3779b97f4a7c15ull + std::get<1>(t);
      h = h * 0x9e3779b97f4a7c15ull + std::get<2>(t);
      return static_cast<std::size_t>(h ^ (h >> 29));
    }
  };
  struct PairHash {
    std::size_t operator()(const std::pair<Ref, ActivityId>& p) const {
      return std::hash<std::uint64_t>()((std::uint64_t(p.first) << 16) ^ p.second);
    }
  };

  std::vector<Var> vars_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::uint32_t> var_index_;
  std::unordered_map<std::string, Ref> node_index_;
  std::unordered_map<std::tuple<Ref, Ref, Ref>, Ref, TupleHash> ite_cache_;
  std::unordered_map<std::pair<Ref, ActivityId>, Ref, PairHash> derive_cache_;
  Ref alive_ = 0;
};

/// Renumbers states in BFS discovery order (letters in id order) so that
/// equal languages compile to byte-equal automata.
inline Dfa canonicalize(const Alphabet& alphabet, StateId initial,
                        const std::vector<StateId>& delta, const std::vector<bool>& accepting) {
  const std::size_t n_sigma = alphabet.size();
  const StateId n = static_cast<StateId>(accepting.size());
  std::vector<StateId> order(n, n);
  std::deque<StateId> queue{initial};
  order[initial] = 0;
  StateId next_id = 1;
  while (!queue.empty()) {
    StateId q = queue.front();
    queue.pop_front();
    for (std::size_t a = 0; a < n_sigma; ++a) {
      StateId t = delta[q * n_sigma + a];
      if (order[t] == n) {
        order[t] = next_id++;
        queue.push_back(t);
      }
    }
  }
  // Unreachable states are dropped.
  std::vector<StateId> new_delta(static_cast<std::size_t>(next_id) * n_sigma);
  std::vector<bool> new_accepting(next_id);
  for (StateId q = 0; q < n; ++q) {
    if (order[q] == n) continue;
    new_accepting[order[q]] = accepting[q];
    for (std::size_t a = 0; a < n_sigma; ++a)
      new_delta[order[q] * n_sigma + a] = order[delta[q * n_sigma + a]];
  }
  return Dfa(alphabet, next_id, 0, std::move(new_delta), std::move(new_accepting));
}

}  // namespace detail

/// Language-preserving minimization: reachability pruning, Hopcroft partition
/// refinement, plus one correction specific to acceptors of non-empty traces.
/// Because acceptance is only ever queried after reading at least one
/// activity, an initial state with no incoming transitions may be folded into
/// a state with identical outgoing rows even when their accepting flags
/// differ. Idempotent; never shrinks safe-activity sets.
inline Dfa minimize(const Dfa& dfa) {
  const std::size_t n_sigma = dfa.alphabet().size();

  // Reachable subset, canonical numbering.
  std::vector<StateId> delta;
  std::vector<bool> accepting;
  {
    std::vector<StateId> raw(dfa.num_states() * n_sigma);
    std::vector<bool> acc(dfa.num_states());
    for (StateId q = 0; q < dfa.num_states(); ++q) {
      acc[q] = dfa.is_accepting(q);
      for (std::size_t a = 0; a < n_sigma; ++a)
        raw[q * n_sigma + a] = dfa.step(q, static_cast<ActivityId>(a));
    }
    Dfa pruned = detail::canonicalize(dfa.alphabet(), dfa.initial(), raw, acc);
    delta.resize(pruned.num_states() * n_sigma);
    accepting.resize(pruned.num_states());
    for (StateId q = 0; q < pruned.num_states(); ++q) {
      accepting[q] = pruned.is_accepting(q);
      for (std::size_t a = 0; a < n_sigma; ++a)
        delta[q * n_sigma + a] = pruned.step(q, static_cast<ActivityId>(a));
    }
  }
  const StateId n = static_cast<StateId>(accepting.size());

  // Hopcroft refinement over the pruned automaton.
  std::vector<std::vector<std::vector<StateId>>> preimage(
      n, std::vector<std::vector<StateId>>(n_sigma));
  for (StateId q = 0; q < n; ++q)
    for (std::size_t a = 0; a < n_sigma; ++a) preimage[delta[q * n_sigma + a]][a].push_back(q);

  std::vector<int> block_of(n, 0);
  std::vector<std::vector<StateId>> blocks;
  {
    std::vector<StateId> acc, rej;
    for (StateId q = 0; q < n; ++q) (accepting[q] ? acc : rej).push_back(q);
    if (!acc.empty()) blocks.push_back(acc);
    if (!rej.empty()) blocks.push_back(rej);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      for (StateId q : blocks[b]) block_of[q] = static_cast<int>(b);
  }
  std::deque<std::pair<int, std::size_t>> worklist;
  std::vector<std::vector<char>> pending;  // [block][letter]
  auto push_splitter = [&](int b, std::size_t a) {
    while (pending.size() < blocks.size()) pending.emplace_back(n_sigma, 0);
    if (!pending[b][a]) {
      pending[b][a] = 1;
      worklist.emplace_back(b, a);
    }
  };
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t a = 0; a < n_sigma; ++a) push_splitter(static_cast<int>(b), a);

  while (!worklist.empty()) {
    auto [split_block, letter] = worklist.front();
    worklist.pop_front();
    pending[split_block][letter] = 0;
    // States with a `letter`-transition into the splitter block.
    std::vector<StateId> movers;
    for (StateId q : blocks[split_block])
      for (StateId p : preimage[q][letter]) movers.push_back(p);
    if (movers.empty()) continue;
    std::sort(movers.begin(), movers.end());
    movers.erase(std::unique(movers.begin(), movers.end()), movers.end());

    std::map<int, std::vector<StateId>> hits;
    for (StateId p : movers) hits[block_of[p]].push_back(p);
    for (auto& [b, inside] : hits) {
      if (inside.size() == blocks[b].size()) continue;  // block not split
      std::vector<StateId> outside;
      outside.reserve(blocks[b].size() - inside.size());
      std::vector<bool> is_inside(n, false);
      for (StateId p : inside) is_inside[p] = true;
      for (StateId p : blocks[b])
        if (!is_inside[p]) outside.push_back(p);
      const int new_block = static_cast<int>(blocks.size());
      blocks[b] = std::move(outside);
      blocks.push_back(std::move(inside));
      while (pending.size() < blocks.size()) pending.emplace_back(n_sigma, 0);
      for (StateId p : blocks[new_block]) block_of[p] = new_block;
      // Worklist maintenance: a pending (b, a) still covers the outside
      // part, so the inside part joins it; otherwise the smaller half
      // suffices as a future splitter.
      for (std::size_t a = 0; a < n_sigma; ++a) {
        if (pending[b][a]) {
          push_splitter(new_block, a);
        } else {
          const int smaller =
              blocks[new_block].size() < blocks[b].size() ? new_block : b;
          push_splitter(smaller, a);
        }
      }
    }
  }

  // Quotient automaton.
  const StateId m = static_cast<StateId>(blocks.size());
  std::vector<StateId> q_delta(m * n_sigma);
  std::vector<bool> q_accepting(m);
  for (StateId b = 0; b < m; ++b) {
    const StateId rep = blocks[b][0];
    q_accepting[b] = accepting[rep];
    for (std::size_t a = 0; a < n_sigma; ++a)
      q_delta[b * n_sigma + a] = static_cast<StateId>(block_of[delta[rep * n_sigma + a]]);
  }
  StateId q_initial = static_cast<StateId>(block_of[0]);

  // Non-empty-trace correction: if the initial state is never re-entered,
  // its accepting flag is unobservable, so it can merge with any state that
  // has the same outgoing row.
  bool initial_reentered = false;
  for (StateId q = 0; q < m && !initial_reentered; ++q)
    for (std::size_t a = 0; a < n_sigma; ++a)
      if (q_delta[q * n_sigma + a] == q_initial) {
        initial_reentered = true;
        break;
      }
  if (!initial_reentered) {
    for (StateId s = 0; s < m; ++s) {
      if (s == q_initial) continue;
      bool same_row = true;
      for (std::size_t a = 0; a < n_sigma && same_row; ++a)
        same_row = q_delta[s * n_sigma + a] == q_delta[q_initial * n_sigma + a];
      if (same_row) {
        q_initial = s;  // the old initial state becomes unreachable
        break;
      }
    }
  }

  return detail::canonicalize(dfa.alphabet(), q_initial, q_delta, q_accepting);
}

/// Compiles a core LTLp formula into a DFA over process traces via activity
/// derivatives: states are canonicalized residual formulas, a state accepts
/// iff its residual holds at the end of the trace. The result is pruned and,
/// by default, minimized. Throws when the residual space exceeds the budget.
inline Dfa compile(const ltl::Formula::Ptr& formula, const Alphabet& alphabet,
                   std::size_t state_budget = 100000, bool minimized = true) {
  detail::ResidualArena arena;
  using Ref = detail::ResidualArena::Ref;
  const Ref start = arena.embed(formula);

  std::unordered_map<Ref, StateId> state_of;
  std::vector<Ref> residual_of;
  std::deque<Ref> queue;
  std::vector<StateId> delta;
  auto state_for = [&](Ref r) {
    auto it = state_of.find(r);
    if (it != state_of.end()) return it->second;
    if (residual_of.size() >= state_budget)
      throw Error("compile: state budget exceeded (" + std::to_string(state_budget) + " states)");
    const StateId s = static_cast<StateId>(residual_of.size());
    state_of.emplace(r, s);
    residual_of.push_back(r);
    delta.resize(residual_of.size() * alphabet.size());
    queue.push_back(r);
    return s;
  };

  state_for(start);
  while (!queue.empty()) {
    const Ref r = queue.front();
    queue.pop_front();
    const StateId s = state_of.at(r);
    for (ActivityId a = 0; a < alphabet.size(); ++a) {
      const StateId t = state_for(arena.derive(r, a));
      delta[s * alphabet.size() + a] = t;
    }
  }

  std::vector<bool> accepting(residual_of.size());
  for (StateId s = 0; s < residual_of.size(); ++s) accepting[s] = arena.nullable(residual_of[s]);

  Dfa dfa = detail::canonicalize(alphabet, 0, delta, accepting);
  return minimized ? minimize(dfa) : dfa;
}

/// Graphviz rendering in the usual automata style: doubled circles for
/// accepting states, one edge per (source, target) pair labelled with the
/// activity set. Deterministic output ordering.
inline std::string export_dot(const Dfa& dfa) {
  std::ostringstream out;
  out << "digraph dfa {\n  rankdir=LR;\n  __start [shape=point];\n";
  for (StateId q = 0; q < dfa.num_states(); ++q)
    out << "  q" << q << " [shape=" << (dfa.is_accepting(q) ? "doublecircle" : "circle")
        << "];\n";
  out << "  __start -> q" << dfa.initial() << ";\n";
  for (StateId q = 0; q < dfa.num_states(); ++q) {
    std::map<StateId, std::vector<std::string>> edges;
    for (ActivityId a = 0; a < dfa.alphabet().size(); ++a)
      edges[dfa.step(q, a)].push_back(dfa.alphabet().name_of(a));
    for (const auto& [target, labels] : edges) {
      out << "  q" << q << " -> q" << target << " [label=\"";
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out << ",";
        out << labels[i];
      }
      out << "\"];\n";
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace tempocf::automata
