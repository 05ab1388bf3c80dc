#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempocf/log.hpp"
#include "tempocf/ltl.hpp"
#include "tempocf/types.hpp"

namespace tempocf::model {

/// Black-box outcome predictor h_theta. Implementations must be deterministic
/// for a fixed model and input; score is a probability in [0, 1] and the
/// label thresholds it at 0.5 (exact ties break to false).
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual double score(const Trace& trace) const = 0;
  bool predict(const Trace& trace) const { return score(trace) > 0.5; }
};

/// Deterministic rule classifier for tests and debugging: either an
/// activity-presence check or an LTLp formula. Score is exactly 0 or 1.
class RuleClassifier : public Classifier {
 public:
  explicit RuleClassifier(ActivityId must_contain)
      : activity_(must_contain), use_formula_(false) {}

  RuleClassifier(ltl::Formula::Ptr formula, Alphabet alphabet)
      : formula_(std::move(formula)), alphabet_(std::move(alphabet)), use_formula_(true) {}

  double score(const Trace& trace) const override {
    if (use_formula_) return ltl::evaluate(trace, formula_) ? 1.0 : 0.0;
    for (auto a : trace)
      if (a == activity_) return 1.0;
    return 0.0;
  }

 private:
  ltl::Formula::Ptr formula_;
  Alphabet alphabet_;
  ActivityId activity_ = 0;
  bool use_formula_;
};

struct TrainHyper {
  int epochs = 200;
  double learning_rate = 0.5;
  double l2 = 0.01;
  std::uint64_t seed = 0;
};

/// Logistic model over one-hot (position, activity) features of fixed-length
/// prefixes. weights[i * |Sigma| + a] is the coefficient for activity a at
/// instant i+1; the bias is kept separately so the full parameter vector has
/// length n * |Sigma| + 1.
struct TrainedModel {
  std::size_t prefix_length = 0;
  Alphabet alphabet;
  std::vector<double> weights;
  double bias = 0.0;
  // training metadata
  std::uint64_t seed = 0;
  int epochs = 0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
};

class LinearClassifier : public Classifier {
 public:
  explicit LinearClassifier(TrainedModel model) : model_(std::move(model)) {
    if (model_.weights.size() != model_.prefix_length * model_.alphabet.size())
      throw Error("linear classifier: weight vector length mismatch");
  }

  double score(const Trace& trace) const override {
    if (trace.size() != model_.prefix_length)
      throw Error("linear classifier: trace length " + std::to_string(trace.size()) +
                  " does not match prefix length " + std::to_string(model_.prefix_length));
    double z = model_.bias;
    const std::size_t n_sigma = model_.alphabet.size();
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (trace[i] >= n_sigma) throw Error("linear classifier: activity outside alphabet");
      z += model_.weights[i * n_sigma + trace[i]];
    }
    return 1.0 / (1.0 + std::exp(-z));
  }

  const TrainedModel& model() const { return model_; }

 private:
  TrainedModel model_;
};

/// Deterministic chronological split in log order, 70/10/20 by default.
/// Fractions are of the case count; remainders land in test.
struct Split {
  log::EventLog train;
  log::EventLog validation;
  log::EventLog test;
};

inline Split chronological_split(const log::EventLog& log, double train_frac = 0.7,
                                 double val_frac = 0.1) {
  const std::size_t n = log.size();
  const auto n_train = static_cast<std::size_t>(train_frac * static_cast<double>(n));
  const auto n_val = static_cast<std::size_t>(val_frac * static_cast<double>(n));
  std::vector<log::LabeledCase> train, val, test;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = log.cases()[i];
    if (i < n_train)
      train.push_back(c);
    else if (i < n_train + n_val)
      val.push_back(c);
    else
      test.push_back(c);
  }
  return {log::EventLog(log.alphabet(), train), log::EventLog(log.alphabet(), val),
          log::EventLog(log.alphabet(), test)};
}

namespace detail {

inline double accuracy(const LinearClassifier& clf, const log::EventLog& log) {
  if (log.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& c : log.cases())
    if (clf.predict(c.trace) == c.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(log.size());
}

/// Mean logistic loss with L2 penalty on the weights (bias excluded), and
/// its analytic gradient. Exposed for the finite-difference check.
inline double logistic_loss_and_grad(const std::vector<Trace>& xs, const std::vector<bool>& ys,
                                     std::size_t n_sigma, const std::vector<double>& weights,
                                     double bias, double l2, std::vector<double>& grad_w,
                                     double& grad_b) {
  const std::size_t m = xs.size();
  grad_w.assign(weights.size(), 0.0);
  grad_b = 0.0;
  double loss = 0.0;
  for (std::size_t s = 0; s < m; ++s) {
    double z = bias;
    for (std::size_t i = 0; i < xs[s].size(); ++i) z += weights[i * n_sigma + xs[s][i]];
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double y = ys[s] ? 1.0 : 0.0;
    const double eps = 1e-12;  // clamp away from log(0)
    loss += -(y * std::log(p + eps) + (1.0 - y) * std::log(1.0 - p + eps));
    const double d = p - y;
    for (std::size_t i = 0; i < xs[s].size(); ++i) grad_w[i * n_sigma + xs[s][i]] += d;
    grad_b += d;
  }
  loss /= static_cast<double>(m);
  grad_b /= static_cast<double>(m);
  double penalty = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    grad_w[j] = grad_w[j] / static_cast<double>(m) + l2 * weights[j];
    penalty += weights[j] * weights[j];
  }
  return loss + 0.5 * l2 * penalty;
}

}  // namespace detail

/// Full-batch gradient descent on the logistic loss. Deterministic given the
/// hyperparameters (weights start at zero, so epochs = 0 scores 0.5
/// everywhere). Reports accuracy on the chronological 70/10/20 split.
inline TrainedModel train_linear(const log::EventLog& log, std::size_t prefix_length,
                                 TrainHyper hyper = {}) {
  auto prefixed = log::prefixes(log, prefix_length);
  if (prefixed.empty())
    throw Error("train_linear: no case reaches prefix length " + std::to_string(prefix_length));
  bool saw_true = false, saw_false = false;
  for (const auto& c : prefixed.cases()) (c.label ? saw_true : saw_false) = true;
  if (!saw_true || !saw_false) throw Error("train_linear: log has a single outcome class");

  auto split = chronological_split(prefixed);
  if (split.train.empty()) throw Error("train_linear: empty training split");

  const std::size_t n_sigma = log.alphabet().size();
  std::vector<Trace> xs;
  std::vector<bool> ys;
  for (const auto& c : split.train.cases()) {
    xs.push_back(c.trace);
    ys.push_back(c.label);
  }

  TrainedModel model;
  model.prefix_length = prefix_length;
  model.alphabet = log.alphabet();
  model.weights.assign(prefix_length * n_sigma, 0.0);
  model.bias = 0.0;
  model.seed = hyper.seed;
  model.epochs = hyper.epochs;

  std::vector<double> grad_w;
  double grad_b = 0.0;
  for (int e = 0; e < hyper.epochs; ++e) {
    detail::logistic_loss_and_grad(xs, ys, n_sigma, model.weights, model.bias, hyper.l2, grad_w,
                                   grad_b);
    for (std::size_t j = 0; j < model.weights.size(); ++j)
      model.weights[j] -= hyper.learning_rate * grad_w[j];
    model.bias -= hyper.learning_rate * grad_b;
  }

  LinearClassifier clf(model);
  model.train_accuracy = detail::accuracy(clf, split.train);
  model.validation_accuracy = detail::accuracy(clf, split.validation);
  return model;
}

inline void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["prefix_length"] = model.prefix_length;
  j["alphabet"] = model.alphabet.names();
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["metadata"] = {{"seed", model.seed},
                   {"epochs", model.epochs},
                   {"train_accuracy", model.train_accuracy},
                   {"validation_accuracy", model.validation_accuracy}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file: " + path.string());
  out << j.dump(2) << "\n";
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("model file " + path.string() + ": " + e.what());
  }
  TrainedModel model;
  try {
    model.prefix_length = j.at("prefix_length").get<std::size_t>();
    model.alphabet = Alphabet(j.at("alphabet").get<std::vector<std::string>>());
    model.weights = j.at("weights").get<std::vector<double>>();
    model.bias = j.at("bias").get<double>();
    const auto& meta = j.at("metadata");
    model.seed = meta.at("seed").get<std::uint64_t>();
    model.epochs = meta.at("epochs").get<int>();
    model.train_accuracy = meta.at("train_accuracy").get<double>();
    model.validation_accuracy = meta.at("validation_accuracy").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("model file " + path.string() + ": " + e.what());
  }
  return model;
}

/// Bridges to an external predictor process speaking newline-delimited JSON
/// on stdin/stdout: request {"id": k, "trace": ["a", ...]}, response
/// {"id": k, "score": s}. Responses may arrive in any order; ids match them
/// up. Access to the child is serialized, so concurrent callers queue.
class ExternalClassifier : public Classifier {
 public:
  ExternalClassifier(std::string command, Alphabet alphabet, int timeout_ms = 30000)
      : command_(std::move(command)), alphabet_(std::move(alphabet)), timeout_ms_(timeout_ms) {}

  ~ExternalClassifier() override { shutdown(); }

  ExternalClassifier(const ExternalClassifier&) = delete;
  ExternalClassifier& operator=(const ExternalClassifier&) = delete;

  double score(const Trace& trace) const override { return scores({trace}).front(); }

  /// Scores a batch in one protocol round trip; result order matches input.
  std::vector<double> scores(const std::vector<Trace>& traces) const {
    std::lock_guard<std::mutex> lock(mutex_);
    ensure_spawned();

    std::string request;
    for (std::size_t k = 0; k < traces.size(); ++k) {
      nlohmann::json j;
      j["id"] = k;
      j["trace"] = trace_names(alphabet_, traces[k]);
      request += j.dump();
      request += "\n";
    }
    write_all(request);

    std::vector<double> out(traces.size(), -1.0);
    std::size_t received = 0;
    while (received < traces.size()) {
      const std::string line = read_line();
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw Error("external predictor: malformed response line: " + line);
      }
      if (!j.contains("id") || !j.contains("score") || !j["id"].is_number_integer() ||
          !j["score"].is_number())
        throw Error("external predictor: response missing id/score: " + line);
      const auto id = j["id"].get<long long>();
      const double s = j["score"].get<double>();
      if (id < 0 || static_cast<std::size_t>(id) >= traces.size() || out[id] >= 0.0)
        throw Error("external predictor: unexpected response id " + std::to_string(id));
      if (s < 0.0 || s > 1.0)
        throw Error("external predictor: score out of [0,1]: " + std::to_string(s));
      out[id] = s;
      ++received;
    }
    return out;
  }

 private:
  void ensure_spawned() const {
    if (child_pid_ > 0) return;
    // A dead child must surface as a write error, not a SIGPIPE kill.
    signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) throw Error("external predictor: pipe failed");
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw Error("external predictor: pipe failed");
    }
    const pid_t pid = fork();
    if (pid < 0) {
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      throw Error("external predictor: fork failed");
    }
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    child_pid_ = pid;
    child_stdin_ = to_child[1];
    child_stdout_ = from_child[0];
  }

  void write_all(const std::string& data) const {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(child_stdin_, data.data() + off, data.size() - off);
      if (n <= 0) throw Error("external predictor: write failed (process gone?)");
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() const {
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      pollfd pfd{child_stdout_, POLLIN, 0};
      const int pr = poll(&pfd, 1, timeout_ms_);
      if (pr == 0) throw Error("external predictor: timeout waiting for response");
      if (pr < 0) throw Error("external predictor: poll failed");
      char chunk[4096];
      const ssize_t n = ::read(child_stdout_, chunk, sizeof(chunk));
      if (n <= 0) throw Error("external predictor: process closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() {
    if (child_pid_ > 0) {
      close(child_stdin_);
      close(child_stdout_);
      int status = 0;
      if (waitpid(child_pid_, &status, WNOHANG) == 0) {
        kill(child_pid_, SIGTERM);
        waitpid(child_pid_, &status, 0);
      }
      child_pid_ = -1;
    }
  }

  std::string command_;
  Alphabet alphabet_;
  int timeout_ms_;
  mutable std::mutex mutex_;
  mutable pid_t child_pid_ = -1;
  mutable int child_stdin_ = -1;
  mutable int child_stdout_ = -1;
  mutable std::string buffer_;
};

}  // namespace tempocf::model
