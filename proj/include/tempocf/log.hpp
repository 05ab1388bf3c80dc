#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tempocf/rng.hpp"
#include "tempocf/types.hpp"

namespace tempocf::log {

struct LabeledCase {
  std::string case_id;
  Trace trace;
  bool label;  // outcome of the whole case
};

/// Event log: cases over a shared alphabet, in a deterministic order.
class EventLog {
 public:
  EventLog(Alphabet alphabet, std::vector<LabeledCase> cases)
      : alphabet_(std::move(alphabet)), cases_(std::move(cases)) {
    std::unordered_set<std::string> ids;
    for (const auto& c : cases_) {
      if (c.trace.empty()) throw Error("event log: case '" + c.case_id + "' has no events");
      if (!ids.insert(c.case_id).second)
        throw Error("event log: duplicate case id '" + c.case_id + "'");
      for (auto a : c.trace)
        if (a >= alphabet_.size())
          throw Error("event log: case '" + c.case_id + "' uses an unknown activity id");
    }
  }

  const Alphabet& alphabet() const { return alphabet_; }
  const std::vector<LabeledCase>& cases() const { return cases_; }
  std::size_t size() const { return cases_.size(); }
  bool empty() const { return cases_.empty(); }

  const LabeledCase* find_case(std::string_view case_id) const {
    for (const auto& c : cases_)
      if (c.case_id == case_id) return &c;
    return nullptr;
  }

  double positive_rate() const {
    if (cases_.empty()) return 0.0;
    std::size_t pos = 0;
    for (const auto& c : cases_) pos += c.label ? 1 : 0;
    return static_cast<double>(pos) / static_cast<double>(cases_.size());
  }

  /// Structural equality up to activity naming: same case ids, labels, and
  /// activity-name sequences. Alphabet id assignment may differ (a reloaded
  /// log infers ids from first appearance).
  bool same_content(const EventLog& other) const {
    if (cases_.size() != other.cases_.size()) return false;
    for (std::size_t i = 0; i < cases_.size(); ++i) {
      const auto& a = cases_[i];
      const auto& b = other.cases_[i];
      if (a.case_id != b.case_id || a.label != b.label || a.trace.size() != b.trace.size())
        return false;
      for (std::size_t k = 0; k < a.trace.size(); ++k)
        if (alphabet_.name_of(a.trace[k]) != other.alphabet_.name_of(b.trace[k])) return false;
    }
    return true;
  }

 private:
  Alphabet alphabet_;
  std::vector<LabeledCase> cases_;
};

struct CsvReadOptions {
  char delimiter = ',';
};

/// Reads the minimal CSV log contract: header `case_id,position,activity,label`,
/// 1-based contiguous positions per case, one label per case. The alphabet is
/// inferred from distinct activity names in first-appearance order; cases keep
/// their first-appearance order.
inline EventLog read_csv_log(const std::filesystem::path& path, CsvReadOptions options = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open log file: " + path.string());

  auto split = [&](const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, options.delimiter)) fields.push_back(field);
    if (!line.empty() && line.back() == options.delimiter) fields.push_back("");
    return fields;
  };

  std::string line;
  if (!std::getline(in, line)) throw Error("empty log file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("log file " + path.string() + ": missing column '" + name + "'");
  };
  const std::size_t col_case = column("case_id");
  const std::size_t col_pos = column("position");
  const std::size_t col_act = column("activity");
  const std::size_t col_label = column("label");

  struct PendingCase {
    std::map<long, std::string> events;  // position -> activity name
    bool label = false;
    bool label_set = false;
  };
  std::vector<std::string> case_order;
  std::unordered_map<std::string, PendingCase> pending;

  Alphabet alphabet;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() < header.size())
      throw ParseError("log row has too few fields", line_no, 1);
    const std::string& case_id = fields[col_case];
    const std::string& activity = fields[col_act];
    const std::string& label_text = fields[col_label];

    long position = 0;
    try {
      position = std::stol(fields[col_pos]);
    } catch (const std::exception&) {
      throw ParseError("position is not an integer: '" + fields[col_pos] + "'", line_no, 1);
    }
    if (position < 1) throw ParseError("position must be >= 1", line_no, 1);

    bool label = false;
    if (label_text == "true")
      label = true;
    else if (label_text == "false")
      label = false;
    else
      throw ParseError("label must be 'true' or 'false', got '" + label_text + "'", line_no, 1);

    auto [it, fresh] = pending.try_emplace(case_id);
    if (fresh) case_order.push_back(case_id);
    auto& pc = it->second;
    if (!pc.events.emplace(position, activity).second)
      throw Error("log file " + path.string() + ": duplicate (case, position) = (" + case_id +
                  ", " + std::to_string(position) + ")");
    if (pc.label_set && pc.label != label)
      throw Error("log file " + path.string() + ": conflicting labels within case '" + case_id +
                  "'");
    pc.label = label;
    pc.label_set = true;

    if (!alphabet.find(activity)) alphabet.add(activity);
  }
  if (case_order.empty()) throw Error("log file " + path.string() + ": no event rows");

  std::vector<LabeledCase> cases;
  cases.reserve(case_order.size());
  for (const auto& id : case_order) {
    const auto& pc = pending.at(id);
    Trace trace;
    long expected = 1;
    for (const auto& [pos, act] : pc.events) {
      if (pos != expected)
        throw Error("log file " + path.string() + ": non-contiguous positions in case '" + id +
                    "' (expected " + std::to_string(expected) + ", found " + std::to_string(pos) +
                    ")");
      ++expected;
      trace.push_back(alphabet.id_of(act));
    }
    cases.push_back({id, std::move(trace), pc.label});
  }
  return EventLog(std::move(alphabet), std::move(cases));
}

/// Writes the CSV contract; rows sorted by (case_id, position).
inline void write_csv_log(const EventLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write log file: " + path.string());
  out << "case_id,position,activity,label\n";
  std::vector<const LabeledCase*> order;
  order.reserve(log.size());
  for (const auto& c : log.cases()) order.push_back(&c);
  std::sort(order.begin(), order.end(),
            [](const LabeledCase* a, const LabeledCase* b) { return a->case_id < b->case_id; });
  for (const auto* c : order)
    for (std::size_t i = 0; i < c->trace.size(); ++i)
      out << c->case_id << ',' << i + 1 << ',' << log.alphabet().name_of(c->trace[i]) << ','
          << (c->label ? "true" : "false") << '\n';
  if (!out) throw Error("failed writing log file: " + path.string());
}

/// Keeps cases of length >= n, truncated to their first n events. Labels are
/// preserved: the outcome describes the full case. May return an empty log.
inline EventLog prefixes(const EventLog& log, std::size_t n) {
  if (n < 1) throw Error("prefixes: length must be >= 1");
  std::vector<LabeledCase> kept;
  for (const auto& c : log.cases()) {
    if (c.trace.size() < n) continue;
    kept.push_back({c.case_id, Trace(c.trace.begin(), c.trace.begin() + n), c.label});
  }
  return EventLog(log.alphabet(), std::move(kept));
}

/// Per-position activity domains D_i = { tau(i) | tau in T, len(tau) >= i }.
struct Domains {
  std::vector<std::vector<ActivityId>> per_position;  // sorted, index 0 holds D_1
  std::vector<std::vector<bool>> member;              // [i-1][activity]

  std::size_t horizon() const { return per_position.size(); }

  const std::vector<ActivityId>& at(std::size_t instant) const {
    if (instant < 1 || instant > per_position.size()) throw Error("domains: instant out of range");
    return per_position[instant - 1];
  }

  bool contains(std::size_t instant, ActivityId a) const {
    if (instant < 1 || instant > per_position.size()) throw Error("domains: instant out of range");
    return member[instant - 1][a];
  }
};

inline Domains domains(const EventLog& log, std::size_t horizon) {
  if (horizon < 1) throw Error("domains: horizon must be >= 1");
  Domains d;
  d.per_position.resize(horizon);
  d.member.assign(horizon, std::vector<bool>(log.alphabet().size(), false));
  for (const auto& c : log.cases()) {
    const std::size_t upto = std::min(horizon, c.trace.size());
    for (std::size_t i = 0; i < upto; ++i) d.member[i][c.trace[i]] = true;
  }
  for (std::size_t i = 0; i < horizon; ++i) {
    for (ActivityId a = 0; a < log.alphabet().size(); ++a)
      if (d.member[i][a]) d.per_position[i].push_back(a);
    if (d.per_position[i].empty())
      throw Error("domains: no trace reaches position " + std::to_string(i + 1));
  }
  return d;
}

namespace claim {

// Activity ids in the generated claim-management alphabet.
inline const std::vector<std::string>& activity_names() {
  static const std::vector<std::string> names = {
      "register",
      "createquestionnaire",
      "highinsurancecheck",
      "contacthospital",
      "acceptclaim",
      "rejectclaim",
      "preparenotificationcontent",
      "sendnotificationbyphone",
      "sendnotificationbypost",
      "task_1",
      "task_2",
      "task_3",
      "task_4",
      "task_5",
      "task_6",
      "task_7",
  };
  return names;
}

}  // namespace claim

/// Synthetic claim-management log: 16 activities, mean trace length 11,
/// label true iff `acceptclaim` occurs. Every generated trace starts with
/// `register` and satisfies
///   G(contacthospital -> X(acceptclaim | rejectclaim)).
/// Outcome-correlated signal is spread across activities the formulas do not
/// mention (notification mode, checks, filler mix) so prediction is learnable
/// from many positions. Deterministic for a given seed.
inline EventLog generate_claim_log(std::uint64_t seed, std::size_t num_cases) {
  if (num_cases < 1) throw Error("generate_claim_log: num_cases must be >= 1");
  Alphabet alphabet(claim::activity_names());
  const ActivityId reg = alphabet.id_of("register");
  const ActivityId quest = alphabet.id_of("createquestionnaire");
  const ActivityId hic = alphabet.id_of("highinsurancecheck");
  const ActivityId contact = alphabet.id_of("contacthospital");
  const ActivityId accept = alphabet.id_of("acceptclaim");
  const ActivityId reject = alphabet.id_of("rejectclaim");
  const ActivityId prepare = alphabet.id_of("preparenotificationcontent");
  const ActivityId phone = alphabet.id_of("sendnotificationbyphone");
  const ActivityId post = alphabet.id_of("sendnotificationbypost");
  const ActivityId task0 = alphabet.id_of("task_1");

  Rng rng(mix_seed({seed, 0x636c61696dull}));  // "claim"

  // Trace length in [8, 14]; the triangular weights put the mean at 11.
  const std::vector<std::pair<std::size_t, int>> length_weights = {
      {8, 1}, {9, 2}, {10, 3}, {11, 4}, {12, 3}, {13, 2}, {14, 1}};
  int total_weight = 0;
  for (auto [len, w] : length_weights) total_weight += w;

  // Filler tasks carry an outcome bias: accepted claims lean on the early
  // tasks, rejected ones on the late tasks.
  const std::vector<int> filler_accept = {4, 3, 2, 1, 1, 1, 1};
  const std::vector<int> filler_reject = {1, 1, 1, 1, 2, 3, 4};
  auto pick_filler = [&](bool accepted) {
    const auto& w = accepted ? filler_accept : filler_reject;
    int sum = 0;
    for (int x : w) sum += x;
    int roll = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(sum)));
    for (std::size_t i = 0; i < w.size(); ++i) {
      roll -= w[i];
      if (roll < 0) return static_cast<ActivityId>(task0 + i);
    }
    return static_cast<ActivityId>(task0 + w.size() - 1);
  };

  const int id_width = static_cast<int>(std::to_string(num_cases).size());
  std::vector<LabeledCase> cases;
  cases.reserve(num_cases);
  for (std::size_t k = 0; k < num_cases; ++k) {
    const bool accepted = rng.next_bool(0.5);

    // Control flow as atomic segments; contacthospital is always followed
    // immediately by the decision, notification immediately by its mode.
    std::vector<std::vector<ActivityId>> segments;
    segments.push_back({reg});
    if (rng.next_bool(accepted ? 0.70 : 0.45)) segments.push_back({quest});
    if (rng.next_bool(accepted ? 0.65 : 0.35)) segments.push_back({hic});
    if (accepted) {
      if (rng.next_bool(0.75))
        segments.push_back({contact, accept});
      else
        segments.push_back({accept});
    } else {
      const double r = rng.next_unit();
      if (r < 0.55)
        segments.push_back({contact, reject});
      else if (r < 0.80)
        segments.push_back({reject});
      // else: the claim silently fizzles out
    }
    if (rng.next_bool(0.75)) {
      const bool by_phone = rng.next_bool(accepted ? 0.80 : 0.20);
      segments.push_back({prepare, by_phone ? phone : post});
    }

    std::size_t core_len = 0;
    for (const auto& s : segments) core_len += s.size();

    int roll = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(total_weight)));
    std::size_t target_len = length_weights.back().first;
    for (auto [len, w] : length_weights) {
      roll -= w;
      if (roll < 0) {
        target_len = len;
        break;
      }
    }
    const std::size_t n_fillers = target_len > core_len ? target_len - core_len : 0;

    // Fillers are dropped into gaps after segments (never before register).
    std::vector<std::vector<ActivityId>> gap_fill(segments.size());
    for (std::size_t f = 0; f < n_fillers; ++f) {
      const std::size_t gap = static_cast<std::size_t>(rng.next_below(segments.size()));
      gap_fill[gap].push_back(pick_filler(accepted));
    }

    Trace trace;
    trace.reserve(target_len);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      trace.insert(trace.end(), segments[s].begin(), segments[s].end());
      trace.insert(trace.end(), gap_fill[s].begin(), gap_fill[s].end());
    }

    std::string id = std::to_string(k + 1);
    id.insert(0, static_cast<std::size_t>(id_width) - id.size(), '0');
    cases.push_back({"case_" + id, std::move(trace), accepted});
  }
  return EventLog(std::move(alphabet), std::move(cases));
}

}  // namespace tempocf::log
