// tempocf: temporally constrained counterfactual explanations for process
// traces. Subcommands cover the full workflow: gen-log -> train -> compile /
// check -> explain / bench.

#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tempocf/automata.hpp"
#include "tempocf/bench.hpp"
#include "tempocf/engine.hpp"
#include "tempocf/log.hpp"
#include "tempocf/ltl.hpp"
#include "tempocf/metrics.hpp"
#include "tempocf/model.hpp"

namespace {

using namespace tempocf;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitHypothesis = 3;
constexpr int kExitNothingToExplain = 4;

struct NothingToExplain : Error {
  using Error::Error;
};

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Flat key=value experiment config: '#' comments, repeated keys append.
/// Values from the command line always win over file values.
using FlatConfig = std::vector<std::pair<std::string, std::string>>;

FlatConfig read_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  FlatConfig entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line is not key=value", line_no, 1);
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return entries;
}

/// Applies config entries to a subcommand's options unless the same option
/// was given explicitly on the command line.
void apply_flat_config(CLI::App* cmd, const FlatConfig& entries,
                       const std::map<std::string, std::function<void(const std::string&)>>&
                           setters) {
  for (const auto& [key, value] : entries) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error("unknown config key '" + key + "'");
    const auto* opt = cmd->get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) continue;  // explicit flag wins
    it->second(value);
  }
}

template <class T>
T parse_value(const std::string& text, const std::string& key) {
  std::istringstream ss(text);
  T out;
  ss >> out;
  if (ss.fail()) throw Error("config key '" + key + "': cannot parse '" + text + "'");
  return out;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw Error("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

Alphabet alphabet_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open alphabet file: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    names.push_back(line);
  }
  if (names.empty()) throw Error("alphabet file is empty: " + path);
  return Alphabet(names);
}

Trace parse_trace_literal(const std::string& text, const Alphabet& alphabet) {
  std::vector<std::string> names;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    // trim surrounding blanks
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw Error("empty activity in trace literal");
    names.push_back(item.substr(b, e - b + 1));
  }
  if (names.empty()) throw Error("empty trace literal");
  return trace_from_names(alphabet, names);
}

/// GA options shared by explain and bench; names match the GaConfig fields so
/// the key=value config files read naturally.
void add_ga_options(CLI::App* cmd, engine::GaConfig& cfg) {
  cmd->add_option("--population_size", cfg.population_size);
  cmd->add_option("--generations", cfg.generations);
  cmd->add_option("--p_c", cfg.p_c);
  cmd->add_option("--p_mut", cfg.p_mut);
  cmd->add_option("--selection_fraction", cfg.selection_fraction);
  cmd->add_option("--patience", cfg.patience);
  cmd->add_option("--alpha", cfg.weights.alpha);
  cmd->add_option("--beta", cfg.weights.beta);
  cmd->add_option("--gamma", cfg.weights.gamma);
  cmd->add_option("--delta", cfg.weights.delta);
  cmd->add_option("--mar_max_retries", cfg.mar_max_retries);
}

std::map<std::string, std::function<void(const std::string&)>> ga_setters(
    engine::GaConfig& cfg) {
  return {
      {"population_size",
       [&](const std::string& v) { cfg.population_size = parse_value<std::size_t>(v, "population_size"); }},
      {"generations",
       [&](const std::string& v) { cfg.generations = parse_value<std::size_t>(v, "generations"); }},
      {"p_c", [&](const std::string& v) { cfg.p_c = parse_value<double>(v, "p_c"); }},
      {"p_mut", [&](const std::string& v) { cfg.p_mut = parse_value<double>(v, "p_mut"); }},
      {"selection_fraction",
       [&](const std::string& v) {
         cfg.selection_fraction = parse_value<double>(v, "selection_fraction");
       }},
      {"patience",
       [&](const std::string& v) { cfg.patience = parse_value<std::size_t>(v, "patience"); }},
      {"alpha", [&](const std::string& v) { cfg.weights.alpha = parse_value<double>(v, "alpha"); }},
      {"beta", [&](const std::string& v) { cfg.weights.beta = parse_value<double>(v, "beta"); }},
      {"gamma", [&](const std::string& v) { cfg.weights.gamma = parse_value<double>(v, "gamma"); }},
      {"delta", [&](const std::string& v) { cfg.weights.delta = parse_value<double>(v, "delta"); }},
      {"mar_max_retries",
       [&](const std::string& v) { cfg.mar_max_retries = parse_value<int>(v, "mar_max_retries"); }},
  };
}

void print_report_table(const metrics::MetricsReport& rep, double measured_runtime) {
  std::cout << std::left;
  auto line = [](const std::string& k, double v) {
    std::cout << "  " << std::setw(16) << k << v << "\n";
  };
  std::cout << "aggregate metrics:\n";
  line("validity", rep.validity);
  line("distance", rep.distance);
  line("sparsity", rep.sparsity);
  line("implausibility", rep.implausibility);
  line("compliance", rep.compliance);
  line("diversity", rep.diversity);
  line("hit_rate", rep.hit_rate);
  line("runtime_seconds", measured_runtime);
}

int cmd_compile(const std::string& formula_path, const std::string& log_path,
                const std::string& alphabet_path, const std::string& dot_path,
                std::size_t budget) {
  Alphabet alphabet;
  if (!log_path.empty())
    alphabet = log::read_csv_log(log_path).alphabet();
  else if (!alphabet_path.empty())
    alphabet = alphabet_from_file(alphabet_path);
  else
    throw Error("compile needs --log or --alphabet as the alphabet source");
  auto formula = ltl::parse_formula(read_text_file(formula_path), alphabet);
  auto dfa = automata::compile(formula, alphabet, budget);
  std::cout << "states: " << dfa.num_states() << ", accepting: " << dfa.num_accepting() << "\n";
  if (!dot_path.empty()) {
    std::ofstream out(dot_path);
    if (!out) throw Error("cannot write dot file: " + dot_path);
    out << automata::export_dot(dfa);
    std::cout << "dot written to " << dot_path << "\n";
  }
  return kExitOk;
}

int cmd_check(const std::string& log_path, const std::string& formula_path, std::size_t prefix) {
  auto log = log::read_csv_log(log_path);
  if (prefix > 0) {
    log = log::prefixes(log, prefix);
    if (log.empty()) throw Error("no case reaches prefix length " + std::to_string(prefix));
  }
  auto formula = ltl::parse_formula(read_text_file(formula_path), log.alphabet());
  auto dfa = automata::compile(formula, log.alphabet());
  std::size_t compliant = 0;
  for (const auto& c : log.cases()) {
    const int ok = metrics::compliance(c.trace, dfa);
    compliant += static_cast<std::size_t>(ok);
    std::cout << c.case_id << "," << ok << "\n";
  }
  std::cout << "fraction: "
            << static_cast<double>(compliant) / static_cast<double>(log.size()) << "\n";
  return kExitOk;
}

int cmd_train(const std::string& log_path, std::size_t prefix, model::TrainHyper hyper,
              const std::string& out_path) {
  auto log = log::read_csv_log(log_path);
  auto trained = model::train_linear(log, prefix, hyper);
  std::cout << "train_accuracy: " << trained.train_accuracy << "\n";
  std::cout << "validation_accuracy: " << trained.validation_accuracy << "\n";
  if (!out_path.empty()) {
    model::save_model(trained, out_path);
    std::cout << "model written to " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_gen_log(std::uint64_t seed, std::size_t cases, const std::string& out_path) {
  auto log = log::generate_claim_log(seed, cases);
  log::write_csv_log(log, out_path);
  std::cout << "wrote " << log.size() << " cases over " << log.alphabet().size()
            << " activities to " << out_path << "\n";
  return kExitOk;
}

int cmd_explain(const std::string& log_path, const std::string& model_path,
                const std::string& formula_path, const std::string& case_id,
                const std::string& trace_literal, const std::string& strategy_name, std::size_t t,
                std::uint64_t seed, const std::string& desired_text, const std::string& out_path,
                bool timings, engine::GaConfig cfg, const std::string& external_cmd) {
  auto log = log::read_csv_log(log_path);

  std::unique_ptr<model::Classifier> classifier;
  std::size_t prefix_length = 0;
  if (!external_cmd.empty()) {
    if (trace_literal.empty() && case_id.empty())
      throw Error("explain with --external needs --trace or --case");
    classifier = std::make_unique<model::ExternalClassifier>(external_cmd, log.alphabet());
  }
  if (!model_path.empty()) {
    auto trained = model::load_model(model_path);
    if (trained.alphabet != log.alphabet())
      throw Error("model alphabet does not match the log alphabet");
    prefix_length = trained.prefix_length;
    if (!classifier) classifier = std::make_unique<model::LinearClassifier>(trained);
  }
  if (!classifier) throw Error("explain needs --model or --external");

  auto formula = ltl::parse_formula(read_text_file(formula_path), log.alphabet());

  Trace query;
  if (!case_id.empty()) {
    const auto* c = log.find_case(case_id);
    if (!c) throw Error("unknown case id: " + case_id);
    if (prefix_length == 0) prefix_length = c->trace.size();
    if (c->trace.size() < prefix_length)
      throw Error("case " + case_id + " is shorter than the model prefix length");
    query.assign(c->trace.begin(), c->trace.begin() + prefix_length);
  } else if (!trace_literal.empty()) {
    query = parse_trace_literal(trace_literal, log.alphabet());
    if (prefix_length != 0 && query.size() != prefix_length)
      throw Error("trace literal length does not match the model prefix length");
  } else {
    throw Error("explain needs --case or --trace");
  }

  bool desired;
  if (desired_text == "auto")
    desired = !classifier->predict(query);
  else if (desired_text == "true" || desired_text == "false")
    desired = desired_text == "true";
  else
    throw Error("--desired must be auto, true, or false");
  if (classifier->predict(query) == desired)
    throw NothingToExplain("the model already predicts the desired class " +
                           std::string(desired ? "true" : "false") + " for this query");

  cfg.strategy = engine::strategy_from_name(strategy_name);
  cfg.t = t;
  cfg.seed = seed;
  auto result = engine::generate(query, desired, formula, log, *classifier, cfg);

  std::cout << "strategy: " << engine::strategy_name(result.strategy) << "\n";
  std::cout << "query prediction: " << (desired ? "false" : "true") << ", desired: "
            << (desired ? "true" : "false") << "\n";
  std::cout << "candidates: " << result.candidates.size() << " of " << result.config.t
            << " requested\n";
  print_report_table(result.report, result.report.runtime_seconds);

  // JSON output is byte-stable for a fixed seed: wall-clock time stays out
  // of the file unless explicitly requested.
  const auto j = engine::to_json(result, log.alphabet(), timings);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write output file: " + out_path);
    out << j.dump(2) << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_bench(const std::string& log_path, const std::vector<std::string>& formula_args,
              const std::vector<std::string>& strategy_args,
              const std::vector<std::size_t>& prefixes, std::size_t queries, std::size_t t,
              std::uint64_t seed, const std::string& out_path, engine::GaConfig cfg,
              model::TrainHyper hyper) {
  if (formula_args.empty()) throw Error("bench needs at least one --formula path:id");
  if (prefixes.empty()) throw Error("bench needs at least one --prefixes value");
  auto log = log::read_csv_log(log_path);

  bench::BenchSpec spec;
  spec.strategies = strategy_args;
  if (spec.strategies.empty())
    spec.strategies = {"Gen", "GenPhi", "MAR", "APriori", "Online"};
  for (const auto& arg : formula_args) {
    const auto colon = arg.rfind(':');
    if (colon == std::string::npos)
      throw Error("--formula expects path:id, got '" + arg + "'");
    const std::string path = arg.substr(0, colon);
    const std::string id = arg.substr(colon + 1);
    if (id.empty()) throw Error("--formula expects a non-empty id in '" + arg + "'");
    spec.formulas.push_back({id, ltl::parse_formula(read_text_file(path), log.alphabet())});
  }
  spec.prefixes = prefixes;
  spec.queries_per_cell = queries;
  spec.seed = seed;
  spec.ga = cfg;
  spec.ga.t = t;
  spec.hyper = hyper;

  const auto rows = bench::run(log, spec);
  std::ostringstream csv;
  csv << bench::csv_header() << "\n";
  for (const auto& r : rows) csv << bench::to_csv(r) << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write output file: " + out_path);
    out << csv.str();
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
  } else {
    std::cout << csv.str();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporally constrained counterfactual explanations for process traces"};
  app.require_subcommand(1);

  // compile
  auto* compile = app.add_subcommand("compile", "compile a formula to a DFA");
  std::string c_formula, c_log, c_alphabet, c_dot;
  std::size_t c_budget = 100000;
  compile->add_option("--formula", c_formula)->required();
  compile->add_option("--log", c_log);
  compile->add_option("--alphabet", c_alphabet);
  compile->add_option("--dot", c_dot);
  compile->add_option("--budget", c_budget);

  // check
  auto* check = app.add_subcommand("check", "check log compliance against a formula");
  std::string k_log, k_formula;
  std::size_t k_prefix = 0;
  check->add_option("--log", k_log)->required();
  check->add_option("--formula", k_formula)->required();
  check->add_option("--prefix", k_prefix);

  // train
  auto* train = app.add_subcommand("train", "train the built-in linear outcome model");
  std::string t_log, t_out;
  std::size_t t_prefix = 0;
  model::TrainHyper t_hyper;
  train->add_option("--log", t_log)->required();
  train->add_option("--prefix", t_prefix)->required();
  train->add_option("--epochs", t_hyper.epochs);
  train->add_option("--learning_rate", t_hyper.learning_rate);
  train->add_option("--l2", t_hyper.l2);
  train->add_option("--seed", t_hyper.seed);
  train->add_option("--out", t_out);

  // explain
  auto* explain = app.add_subcommand("explain", "generate counterfactuals for one query");
  std::string e_log, e_model, e_formula, e_case, e_trace, e_strategy = "Online",
              e_desired = "auto", e_out, e_external, e_config;
  std::size_t e_t = 5;
  std::uint64_t e_seed = 0;
  bool e_timings = false;
  engine::GaConfig e_cfg;
  explain->add_option("--log", e_log);
  explain->add_option("--model", e_model);
  explain->add_option("--external", e_external, "external predictor command (NDJSON protocol)");
  explain->add_option("--formula", e_formula);
  explain->add_option("--case", e_case);
  explain->add_option("--trace", e_trace, "comma-separated activity names");
  explain->add_option("--strategy", e_strategy, "Gen|GenPhi|MAR|APriori|Online");
  explain->add_option("--t", e_t);
  explain->add_option("--seed", e_seed);
  explain->add_option("--desired", e_desired, "auto|true|false");
  explain->add_option("--out", e_out);
  explain->add_flag("--timings", e_timings, "include measured runtime in the JSON output");
  explain->add_option("--config", e_config, "key=value experiment file; flags override");
  add_ga_options(explain, e_cfg);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "run the strategy/formula/prefix matrix");
  std::string b_log, b_out, b_config;
  std::vector<std::string> b_formulas, b_strategies;
  std::vector<std::size_t> b_prefixes;
  std::size_t b_queries = 15, b_t = 5;
  std::uint64_t b_seed = 0;
  engine::GaConfig b_cfg;
  model::TrainHyper b_hyper;
  bench_cmd->add_option("--log", b_log);
  bench_cmd->add_option("--formula", b_formulas, "formula file as path:id (repeatable)");
  bench_cmd->add_option("--strategies", b_strategies)->delimiter(',');
  bench_cmd->add_option("--prefixes", b_prefixes)->delimiter(',');
  bench_cmd->add_option("--queries", b_queries);
  bench_cmd->add_option("--t", b_t);
  bench_cmd->add_option("--seed", b_seed);
  bench_cmd->add_option("--out", b_out);
  bench_cmd->add_option("--epochs", b_hyper.epochs);
  bench_cmd->add_option("--learning_rate", b_hyper.learning_rate);
  bench_cmd->add_option("--l2", b_hyper.l2);
  bench_cmd->add_option("--config", b_config, "key=value experiment file; flags override");
  add_ga_options(bench_cmd, b_cfg);

  // gen-log
  auto* gen = app.add_subcommand("gen-log", "generate the synthetic claim-management log");
  std::uint64_t g_seed = 42;
  std::size_t g_cases = 4800;
  std::string g_out;
  gen->add_option("--seed", g_seed);
  gen->add_option("--cases", g_cases);
  gen->add_option("--out", g_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (compile->parsed()) return cmd_compile(c_formula, c_log, c_alphabet, c_dot, c_budget);
    if (check->parsed()) return cmd_check(k_log, k_formula, k_prefix);
    if (train->parsed()) return cmd_train(t_log, t_prefix, t_hyper, t_out);
    if (explain->parsed()) {
      if (!e_config.empty()) {
        auto setters = ga_setters(e_cfg);
        setters.emplace("log", [&](const std::string& v) { e_log = v; });
        setters.emplace("model", [&](const std::string& v) { e_model = v; });
        setters.emplace("external", [&](const std::string& v) { e_external = v; });
        setters.emplace("formula", [&](const std::string& v) { e_formula = v; });
        setters.emplace("case", [&](const std::string& v) { e_case = v; });
        setters.emplace("trace", [&](const std::string& v) { e_trace = v; });
        setters.emplace("strategy", [&](const std::string& v) { e_strategy = v; });
        setters.emplace("t", [&](const std::string& v) { e_t = parse_value<std::size_t>(v, "t"); });
        setters.emplace("seed",
                        [&](const std::string& v) { e_seed = parse_value<std::uint64_t>(v, "seed"); });
        setters.emplace("desired", [&](const std::string& v) { e_desired = v; });
        setters.emplace("out", [&](const std::string& v) { e_out = v; });
        setters.emplace("timings", [&](const std::string& v) { e_timings = parse_bool(v, "timings"); });
        apply_flat_config(explain, read_flat_config(e_config), setters);
      }
      if (e_log.empty()) throw Error("explain needs --log (flag or config)");
      if (e_formula.empty()) throw Error("explain needs --formula (flag or config)");
      return cmd_explain(e_log, e_model, e_formula, e_case, e_trace, e_strategy, e_t, e_seed,
                         e_desired, e_out, e_timings, e_cfg, e_external);
    }
    if (bench_cmd->parsed()) {
      if (!b_config.empty()) {
        auto setters = ga_setters(b_cfg);
        setters.emplace("log", [&](const std::string& v) { b_log = v; });
        setters.emplace("formula", [&](const std::string& v) { b_formulas.push_back(v); });
        setters.emplace("strategies",
                        [&](const std::string& v) { b_strategies = split_list(v); });
        setters.emplace("prefixes", [&](const std::string& v) {
          b_prefixes.clear();
          for (const auto& item : split_list(v))
            b_prefixes.push_back(parse_value<std::size_t>(item, "prefixes"));
        });
        setters.emplace("queries",
                        [&](const std::string& v) { b_queries = parse_value<std::size_t>(v, "queries"); });
        setters.emplace("t", [&](const std::string& v) { b_t = parse_value<std::size_t>(v, "t"); });
        setters.emplace("seed",
                        [&](const std::string& v) { b_seed = parse_value<std::uint64_t>(v, "seed"); });
        setters.emplace("out", [&](const std::string& v) { b_out = v; });
        setters.emplace("epochs",
                        [&](const std::string& v) { b_hyper.epochs = parse_value<int>(v, "epochs"); });
        setters.emplace("learning_rate", [&](const std::string& v) {
          b_hyper.learning_rate = parse_value<double>(v, "learning_rate");
        });
        setters.emplace("l2",
                        [&](const std::string& v) { b_hyper.l2 = parse_value<double>(v, "l2"); });
        apply_flat_config(bench_cmd, read_flat_config(b_config), setters);
      }
      if (b_log.empty()) throw Error("bench needs --log (flag or config)");
      return cmd_bench(b_log, b_formulas, b_strategies, b_prefixes, b_queries, b_t, b_seed, b_out,
                       b_cfg, b_hyper);
    }
    if (gen->parsed()) return cmd_gen_log(g_seed, g_cases, g_out);
  } catch (const engine::HypothesisViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitHypothesis;
  } catch (const NothingToExplain& e) {
    std::cerr << "nothing to explain: " << e.what() << "\n";
    return kExitNothingToExplain;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
