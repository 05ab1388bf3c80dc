#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tempocf {

using ActivityId = std::uint16_t;

/// A process trace: the sequence of executed activity ids, 1-based in the
/// domain's instant numbering (trace[i-1] is the activity at instant i).
using Trace = std::vector<ActivityId>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed formula text or CSV input.
struct ParseError : Error {
  ParseError(const std::string& msg, int line, int col)
      : Error(msg + " (line " + std::to_string(line) + ", col " + std::to_string(col) + ")"),
        line(line),
        col(col) {}
  int line;
  int col;
};

struct UnknownActivityError : Error {
  explicit UnknownActivityError(const std::string& name)
      : Error("unknown activity: " + name), name(name) {}
  std::string name;
};

inline bool is_valid_activity_name(std::string_view name) {
  if (name.empty()) return false;
  auto head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto tail = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  };
  if (!head(name.front())) return false;
  for (std::size_t i = 1; i < name.size(); ++i)
    if (!tail(name[i])) return false;
  return true;
}

struct Activity {
  ActivityId id;
  std::string name;
};

/// Ordered activity universe. Iteration order is insertion order and ids are
/// dense indices into it.
class Alphabet {
 public:
  Alphabet() = default;

  explicit Alphabet(std::vector<std::string> names) {
    if (names.empty()) throw Error("alphabet must not be empty");
    for (auto& n : names) add(std::move(n));
  }

  ActivityId add(std::string name) {
    if (!is_valid_activity_name(name)) throw Error("invalid activity name: '" + name + "'");
    if (index_.count(name)) throw Error("duplicate activity name: '" + name + "'");
    auto id = static_cast<ActivityId>(names_.size());
    index_.emplace(name, id);
    names_.push_back(std::move(name));
    return id;
  }

  std::size_t size() const { return names_.size(); }

  const std::string& name_of(ActivityId id) const {
    if (id >= names_.size()) throw Error("activity id out of range");
    return names_[id];
  }

  std::optional<ActivityId> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  ActivityId id_of(std::string_view name) const {
    auto id = find(name);
    if (!id) throw UnknownActivityError(std::string(name));
    return *id;
  }

  Activity activity(ActivityId id) const { return {id, name_of(id)}; }

  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const Alphabet& other) const { return names_ == other.names_; }
  bool operator!=(const Alphabet& other) const { return !(*this == other); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ActivityId> index_;
};

inline Trace trace_from_names(const Alphabet& alphabet, const std::vector<std::string>& names) {
  Trace t;
  t.reserve(names.size());
  for (const auto& n : names) t.push_back(alphabet.id_of(n));
  return t;
}

inline std::vector<std::string> trace_names(const Alphabet& alphabet, const Trace& trace) {
  std::vector<std::string> out;
  out.reserve(trace.size());
  for (auto a : trace) out.push_back(alphabet.name_of(a));
  return out;
}

struct TraceHash {
  std::size_t operator()(const Trace& t) const {
    // FNV-1a over the id sequence.
    std::uint64_t h = 1469598103934665603ull;
    for (auto a : t) {
      h ^= static_cast<std::uint64_t>(a) + 1;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace tempocf
