#pragma once

#include <cassert>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tempocf/types.hpp"

namespace tempocf::ltl {

/// Core node kinds. Surface forms (->, F, G) are desugared by the parser so
/// everything downstream handles exactly these seven shapes plus the two
/// constants.
enum class Op : std::uint8_t { True, False, Atom, Not, And, Or, Next, Until };

/// Immutable formula node. Shared subtrees are fine; nothing mutates after
/// construction.
class Formula {
 public:
  using Ptr = std::shared_ptr<const Formula>;

  Op op;
  ActivityId atom = 0;  // valid iff op == Atom
  Ptr lhs;              // operand / left operand
  Ptr rhs;              // right operand of And/Or/Until

  static Ptr make_true() { return node(Op::True); }
  static Ptr make_false() { return node(Op::False); }
  static Ptr atom_of(ActivityId a) {
    auto f = std::make_shared<Formula>();
    f->op = Op::Atom;
    f->atom = a;
    return f;
  }
  static Ptr negation(Ptr f) { return node(Op::Not, std::move(f)); }
  static Ptr conjunction(Ptr l, Ptr r) { return node(Op::And, std::move(l), std::move(r)); }
  static Ptr disjunction(Ptr l, Ptr r) { return node(Op::Or, std::move(l), std::move(r)); }
  static Ptr next(Ptr f) { return node(Op::Next, std::move(f)); }
  static Ptr until(Ptr l, Ptr r) { return node(Op::Until, std::move(l), std::move(r)); }

  // Derived surface operators, desugared on construction:
  // F f = true U f, G f = !F!f, l -> r = !l | r.
  static Ptr eventually(Ptr f) { return until(make_true(), std::move(f)); }
  static Ptr globally(Ptr f) { return negation(eventually(negation(std::move(f)))); }
  static Ptr implies(Ptr l, Ptr r) { return disjunction(negation(std::move(l)), std::move(r)); }

 private:
  static Ptr node(Op op, Ptr l = nullptr, Ptr r = nullptr) {
    auto f = std::make_shared<Formula>();
    f->op = op;
    f->lhs = std::move(l);
    f->rhs = std::move(r);
    return f;
  }
};

inline bool equal(const Formula::Ptr& a, const Formula::Ptr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->op != b->op) return false;
  switch (a->op) {
    case Op::True:
    case Op::False:
      return true;
    case Op::Atom:
      return a->atom == b->atom;
    case Op::Not:
    case Op::Next:
      return equal(a->lhs, b->lhs);
    case Op::And:
    case Op::Or:
    case Op::Until:
      return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
  }
  return false;
}

namespace detail {

enum class TokKind : std::uint8_t {
  Ident, True, False, Not, And, Or, Implies, Next, Until, Eventually, Globally,
  LParen, RParen, End
};

struct Token {
  TokKind kind;
  std::string text;
  int line;
  int col;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_blank();
    const int line = line_, col = col_;
    if (pos_ >= text_.size()) return {TokKind::End, "", line, col};
    const char c = text_[pos_];
    switch (c) {
      case '(': consume(); return {TokKind::LParen, "(", line, col};
      case ')': consume(); return {TokKind::RParen, ")", line, col};
      case '!': consume(); return {TokKind::Not, "!", line, col};
      case '&': consume(); return {TokKind::And, "&", line, col};
      case '|': consume(); return {TokKind::Or, "|", line, col};
      case '-':
        if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
          consume();
          consume();
          return {TokKind::Implies, "->", line, col};
        }
        throw ParseError("unexpected character '-'", line, col);
      default:
        break;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string word;
      while (pos_ < text_.size()) {
        const char w = text_[pos_];
        const bool ident_char =
            std::isalnum(static_cast<unsigned char>(w)) || w == '_' || w == '-';
        // '-' only continues an identifier when it does not start "->".
        if (!ident_char || (w == '-' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>')) break;
        word.push_back(w);
        consume();
      }
      if (word == "true") return {TokKind::True, word, line, col};
      if (word == "false") return {TokKind::False, word, line, col};
      if (word == "U") return {TokKind::Until, word, line, col};
      if (word == "X") return {TokKind::Next, word, line, col};
      if (word == "F") return {TokKind::Eventually, word, line, col};
      if (word == "G") return {TokKind::Globally, word, line, col};
      return {TokKind::Ident, word, line, col};
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line, col);
  }

 private:
  void consume() {
    if (pos_ >= text_.size()) return;
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_blank() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') consume();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        consume();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// Recursive descent over:
//   implied := ored ( "->" implied )?
//   ored    := anded ( "|" anded )*
//   anded   := until ( "&" until )*
//   until   := unary ( "U" until )?
//   unary   := "!" unary | "X" unary | "F" unary | "G" unary | atom
//   atom    := "true" | "false" | IDENT | "(" formula ")"
class Parser {
 public:
  Parser(std::string_view text, const Alphabet& alphabet) : lexer_(text), alphabet_(alphabet) {
    bump();
  }

  Formula::Ptr parse() {
    auto f = parse_implied();
    if (cur_.kind != TokKind::End)
      throw ParseError("expected end of input, found '" + cur_.text + "'", cur_.line, cur_.col);
    return f;
  }

 private:
  Formula::Ptr parse_implied() {
    auto lhs = parse_ored();
    if (cur_.kind == TokKind::Implies) {
      bump();
      return Formula::implies(std::move(lhs), parse_implied());
    }
    return lhs;
  }

  Formula::Ptr parse_ored() {
    auto lhs = parse_anded();
    while (cur_.kind == TokKind::Or) {
      bump();
      lhs = Formula::disjunction(std::move(lhs), parse_anded());
    }
    return lhs;
  }

  Formula::Ptr parse_anded() {
    auto lhs = parse_until();
    while (cur_.kind == TokKind::And) {
      bump();
      lhs = Formula::conjunction(std::move(lhs), parse_until());
    }
    return lhs;
  }

  Formula::Ptr parse_until() {
    auto lhs = parse_unary();
    if (cur_.kind == TokKind::Until) {
      bump();
      return Formula::until(std::move(lhs), parse_until());
    }
    return lhs;
  }

  Formula::Ptr parse_unary() {
    switch (cur_.kind) {
      case TokKind::Not:
        bump();
        return Formula::negation(parse_unary());
      case TokKind::Next:
        bump();
        return Formula::next(parse_unary());
      case TokKind::Eventually:
        bump();
        return Formula::eventually(parse_unary());
      case TokKind::Globally:
        bump();
        return Formula::globally(parse_unary());
      default:
        return parse_atom();
    }
  }

  Formula::Ptr parse_atom() {
    switch (cur_.kind) {
      case TokKind::True:
        bump();
        return Formula::make_true();
      case TokKind::False:
        bump();
        return Formula::make_false();
      case TokKind::Ident: {
        auto id = alphabet_.find(cur_.text);
        if (!id)
          throw ParseError("unknown activity '" + cur_.text + "'", cur_.line, cur_.col);
        bump();
        return Formula::atom_of(*id);
      }
      case TokKind::LParen: {
        bump();
        auto f = parse_implied();
        if (cur_.kind != TokKind::RParen)
          throw ParseError("expected ')', found '" + describe(cur_) + "'", cur_.line, cur_.col);
        bump();
        return f;
      }
      default:
        throw ParseError("expected formula, found '" + describe(cur_) + "'", cur_.line, cur_.col);
    }
  }

  static std::string describe(const Token& t) {
    return t.kind == TokKind::End ? "end of input" : t.text;
  }

  void bump() { cur_ = lexer_.next(); }

  Lexer lexer_;
  const Alphabet& alphabet_;
  Token cur_;
};

inline int precedence(Op op) {
  switch (op) {
    case Op::Or: return 1;
    case Op::And: return 2;
    case Op::Until: return 3;
    case Op::Not:
    case Op::Next: return 4;
    default: return 5;  // atoms and constants never need parentheses
  }
}

inline void collect_nodes(const Formula* f, std::vector<const Formula*>& out) {
  out.push_back(f);
  if (f->lhs) collect_nodes(f->lhs.get(), out);
  if (f->rhs) collect_nodes(f->rhs.get(), out);
}

}  // namespace detail

/// Parses formula text against a fixed alphabet. Derived operators are
/// desugared; the result contains core nodes only. Atoms must name existing
/// alphabet activities (parsing never extends the alphabet).
inline Formula::Ptr parse_formula(std::string_view text, const Alphabet& alphabet) {
  return detail::Parser(text, alphabet).parse();
}

/// Renders a core AST back to the concrete syntax. Reparsing the result gives
/// a structurally identical AST.
inline std::string render(const Formula::Ptr& f, const Alphabet& alphabet) {
  using detail::precedence;
  // tie_ok marks positions where a child at the parent's own level may stay
  // unparenthesised: the side each binary operator associates to (left for
  // & and |, right for U) and nested prefix operators.
  struct R {
    const Alphabet& alphabet;
    std::string go(const Formula::Ptr& n, int parent, bool tie_ok) const {
      std::string s;
      switch (n->op) {
        case Op::True: s = "true"; break;
        case Op::False: s = "false"; break;
        case Op::Atom: s = alphabet.name_of(n->atom); break;
        case Op::Not: s = "!" + go(n->lhs, precedence(Op::Not), true); break;
        case Op::Next: s = "X " + go(n->lhs, precedence(Op::Next), true); break;
        case Op::And:
          s = go(n->lhs, precedence(Op::And), true) + " & " + go(n->rhs, precedence(Op::And), false);
          break;
        case Op::Or:
          s = go(n->lhs, precedence(Op::Or), true) + " | " + go(n->rhs, precedence(Op::Or), false);
          break;
        case Op::Until:
          s = go(n->lhs, precedence(Op::Until), false) + " U " +
              go(n->rhs, precedence(Op::Until), true);
          break;
      }
      const int mine = precedence(n->op);
      if (mine < parent || (mine == parent && !tie_ok)) return "(" + s + ")";
      return s;
    }
  };
  return R{alphabet}.go(f, 0, true);
}

/// Direct trace semantics at instant i (1-based). This is the independent
/// oracle the automata module is validated against; it never touches DFAs.
inline bool evaluate_at(const Trace& trace, std::size_t instant, const Formula::Ptr& formula) {
  if (trace.empty()) throw Error("evaluate: trace must be non-empty");
  if (instant < 1 || instant > trace.size()) throw Error("evaluate: instant out of range");

  std::vector<const Formula*> nodes;
  detail::collect_nodes(formula.get(), nodes);
  std::unordered_map<const Formula*, std::size_t> index;
  index.reserve(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) index.emplace(nodes[k], k);

  const std::size_t len = trace.size();
  // memo[k][i-1]: -1 unknown, else truth of node k at instant i.
  std::vector<signed char> memo(nodes.size() * len, -1);

  struct Eval {
    const Trace& trace;
    const std::unordered_map<const Formula*, std::size_t>& index;
    std::vector<signed char>& memo;
    std::size_t len;

    bool at(const Formula* f, std::size_t i) {
      signed char& slot = memo[index.at(f) * len + (i - 1)];
      if (slot >= 0) return slot != 0;
      bool v = false;
      switch (f->op) {
        case Op::True: v = true; break;
        case Op::False: v = false; break;
        case Op::Atom: v = trace[i - 1] == f->atom; break;
        case Op::Not: v = !at(f->lhs.get(), i); break;
        case Op::And: v = at(f->lhs.get(), i) && at(f->rhs.get(), i); break;
        case Op::Or: v = at(f->lhs.get(), i) || at(f->rhs.get(), i); break;
        case Op::Next: v = i + 1 <= len && at(f->lhs.get(), i + 1); break;
        case Op::Until:
          // phi2 now or later, phi1 at every instant before the witness.
          for (std::size_t j = i; j <= len; ++j) {
            if (at(f->rhs.get(), j)) { v = true; break; }
            if (!at(f->lhs.get(), j)) break;
          }
          break;
      }
      slot = v ? 1 : 0;
      return v;
    }
  };

  Eval eval{trace, index, memo, len};
  return eval.at(formula.get(), instant);
}

/// tau |= phi, i.e. satisfaction at instant 1.
inline bool evaluate(const Trace& trace, const Formula::Ptr& formula) {
  return evaluate_at(trace, 1, formula);
}

/// Sigma_phi / Theta_other partition of the alphabet.
struct FormulaSignature {
  std::vector<ActivityId> active;  // activities mentioned in the formula, ascending
  std::vector<ActivityId> other;   // the complement, ascending
  std::vector<bool> is_active;     // indexed by activity id

  bool mentions(ActivityId a) const { return is_active[a]; }
};

inline FormulaSignature signature(const Formula::Ptr& formula, const Alphabet& alphabet) {
  FormulaSignature sig;
  sig.is_active.assign(alphabet.size(), false);
  std::vector<const Formula*> nodes;
  detail::collect_nodes(formula.get(), nodes);
  for (const auto* n : nodes)
    if (n->op == Op::Atom) {
      if (n->atom >= alphabet.size()) throw Error("formula atom outside alphabet");
      sig.is_active[n->atom] = true;
    }
  for (ActivityId a = 0; a < alphabet.size(); ++a)
    (sig.is_active[a] ? sig.active : sig.other).push_back(a);
  return sig;
}

}  // namespace tempocf::ltl
