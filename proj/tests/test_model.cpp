#include <unistd.h>

#include <cmath>
#include <filesystem>

#include <catch2/catch.hpp>

#include "helpers.hpp"
#include "tempocf/log.hpp"
#include "tempocf/model.hpp"

using namespace tempocf;

#ifndef PREDICTOR_STUB_PATH
#define PREDICTOR_STUB_PATH "./predictor_stub"
#endif

namespace {

/// Toy log where the outcome is exactly "ok appears somewhere".
log::EventLog toy_ok_log(std::size_t cases, std::uint64_t seed) {
  Alphabet al({"start", "ok", "fail", "noise_a", "noise_b"});
  Rng rng(seed);
  std::vector<log::LabeledCase> out;
  for (std::size_t k = 0; k < cases; ++k) {
    Trace t{al.id_of("start")};
    bool has_ok = false;
    for (int i = 0; i < 5; ++i) {
      const double r = rng.next_unit();
      ActivityId a;
      if (r < 0.25) {
        a = al.id_of("ok");
        has_ok = true;
      } else if (r < 0.5) {
        a = al.id_of("fail");
      } else if (r < 0.75) {
        a = al.id_of("noise_a");
      } else {
        a = al.id_of("noise_b");
      }
      t.push_back(a);
    }
    out.push_back({"c" + std::to_string(k), t, has_ok});
  }
  return log::EventLog(al, out);
}

}  // namespace

TEST_CASE("linear training separates a learnable signal", "[model]") {
  auto log = toy_ok_log(400, 3);
  auto trained = model::train_linear(log, 6, {.epochs = 300, .learning_rate = 0.5, .l2 = 0.001});
  REQUIRE(trained.validation_accuracy >= 0.95);
  REQUIRE(trained.train_accuracy >= 0.95);

  SECTION("same hyperparameters reproduce identical weights") {
    auto again = model::train_linear(log, 6, {.epochs = 300, .learning_rate = 0.5, .l2 = 0.001});
    REQUIRE(again.weights == trained.weights);
    REQUIRE(again.bias == trained.bias);
  }

  SECTION("zero epochs scores one half everywhere, label false") {
    auto blank = model::train_linear(log, 6, {.epochs = 0});
    model::LinearClassifier clf(blank);
    const auto& t = log.cases().front().trace;
    REQUIRE(clf.score(t) == 0.5);
    REQUIRE_FALSE(clf.predict(t));  // exact tie breaks to false
  }

  SECTION("single-class and too-long prefixes are errors") {
    Alphabet al({"a"});
    log::EventLog mono(al, {{"c0", {0, 0}, true}, {"c1", {0, 0}, true}, {"c2", {0, 0}, true},
                           {"c3", {0, 0}, true}});
    REQUIRE_THROWS_AS(model::train_linear(mono, 2), Error);
    REQUIRE_THROWS_AS(model::train_linear(toy_ok_log(50, 1), 40), Error);
  }
}

TEST_CASE("prediction surfaces", "[model]") {
  auto log = toy_ok_log(100, 5);

  SECTION("rule classifier: activity presence") {
    model::RuleClassifier rule(log.alphabet().id_of("ok"));
    Trace with_ok{log.alphabet().id_of("start"), log.alphabet().id_of("ok")};
    Trace without{log.alphabet().id_of("start"), log.alphabet().id_of("fail")};
    REQUIRE(rule.predict(with_ok));
    REQUIRE(rule.score(with_ok) == 1.0);
    REQUIRE_FALSE(rule.predict(without));
    REQUIRE(rule.score(without) == 0.0);
  }

  SECTION("rule classifier: formula") {
    auto f = ltl::parse_formula("F ok", log.alphabet());
    model::RuleClassifier rule(f, log.alphabet());
    Trace with_ok{log.alphabet().id_of("noise_a"), log.alphabet().id_of("ok")};
    REQUIRE(rule.predict(with_ok));
  }

  SECTION("score/label coherence across classifiers") {
    auto trained = model::train_linear(log, 6, {.epochs = 50});
    model::LinearClassifier clf(trained);
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
      auto t = testing::random_trace(rng, log.alphabet(), 6);
      REQUIRE(clf.predict(t) == (clf.score(t) > 0.5));
      const double s1 = clf.score(t);
      REQUIRE(clf.score(t) == s1);  // deterministic
    }
  }

  SECTION("length mismatch is an error") {
    auto trained = model::train_linear(log, 6, {.epochs = 1});
    model::LinearClassifier clf(trained);
    REQUIRE_THROWS_AS(clf.score(Trace{0, 1}), Error);
  }
}

TEST_CASE("analytic gradient matches central differences", "[model]") {
  Rng rng(23);
  for (int round = 0; round < 20; ++round) {
    const std::size_t n_sigma = 3 + rng.next_below(3);
    const std::size_t len = 2 + rng.next_below(3);
    const auto al = testing::letters_alphabet(n_sigma);
    std::vector<Trace> xs;
    std::vector<bool> ys;
    for (int s = 0; s < 8; ++s) {
      xs.push_back(testing::random_trace(rng, al, len));
      ys.push_back(rng.next_bool(0.5));
    }
    std::vector<double> w(len * n_sigma);
    for (auto& x : w) x = rng.next_unit() * 2.0 - 1.0;
    double b = rng.next_unit() - 0.5;
    const double l2 = 0.01;

    std::vector<double> grad_w;
    double grad_b = 0.0;
    model::detail::logistic_loss_and_grad(xs, ys, n_sigma, w, b, l2, grad_w, grad_b);

    const double h = 1e-6;
    std::vector<double> dump;
    double gb_dump = 0.0;
    auto loss_at = [&](const std::vector<double>& wx, double bx) {
      return model::detail::logistic_loss_and_grad(xs, ys, n_sigma, wx, bx, l2, dump, gb_dump);
    };
    for (std::size_t j = 0; j < w.size(); ++j) {
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      const double numeric = (loss_at(wp, b) - loss_at(wm, b)) / (2 * h);
      const double denom = std::max(1.0, std::abs(numeric));
      REQUIRE(std::abs(grad_w[j] - numeric) / denom < 1e-5);
    }
    const double numeric_b = (loss_at(w, b + h) - loss_at(w, b - h)) / (2 * h);
    REQUIRE(std::abs(grad_b - numeric_b) / std::max(1.0, std::abs(numeric_b)) < 1e-5);
  }
}

TEST_CASE("model files round-trip", "[model]") {
  namespace fs = std::filesystem;
  auto log = toy_ok_log(200, 11);
  auto trained = model::train_linear(log, 6, {.epochs = 100});
  const auto path = fs::temp_directory_path() / ("tempocf_model_" + std::to_string(::getpid()) +
                                                 ".json");
  model::save_model(trained, path);
  auto loaded = model::load_model(path);
  fs::remove(path);
  REQUIRE(loaded.prefix_length == trained.prefix_length);
  REQUIRE(loaded.weights == trained.weights);
  REQUIRE(loaded.bias == trained.bias);
  REQUIRE(loaded.alphabet == trained.alphabet);
  REQUIRE(loaded.validation_accuracy == trained.validation_accuracy);
}

TEST_CASE("external predictor protocol", "[model][external]") {
  const std::string stub = PREDICTOR_STUB_PATH;
  Alphabet al({"go", "stop", "wait"});

  SECTION("constant-score stub flips every prediction") {
    model::ExternalClassifier clf(stub + " constant 1.0", al);
    REQUIRE(clf.score({al.id_of("go")}) == 1.0);
    REQUIRE(clf.predict({al.id_of("stop"), al.id_of("wait")}));
  }

  SECTION("activity-presence stub") {
    model::ExternalClassifier clf(stub + " contains stop", al);
    REQUIRE(clf.predict({al.id_of("go"), al.id_of("stop")}));
    REQUIRE_FALSE(clf.predict({al.id_of("go"), al.id_of("wait")}));
  }

  SECTION("malformed response is a protocol violation") {
    model::ExternalClassifier clf(stub + " malformed", al);
    REQUIRE_THROWS_WITH(clf.score({al.id_of("go")}), Catch::Contains("malformed"));
  }

  SECTION("spawn failure surfaces") {
    model::ExternalClassifier clf("/nonexistent/predictor", al);
    REQUIRE_THROWS_AS(clf.score({al.id_of("go")}), Error);
  }

  SECTION("large batch keeps order even when responses are reordered") {
    std::vector<std::string> names;
    for (int i = 0; i < 1000; ++i) names.push_back("t" + std::to_string(i));
    Alphabet tagged(names);
    model::ExternalClassifier clf(stub + " tagscore swap", tagged);
    std::vector<Trace> batch;
    for (int i = 0; i < 1000; ++i) batch.push_back({static_cast<ActivityId>(i)});
    auto scores = clf.scores(batch);
    REQUIRE(scores.size() == 1000);
    for (int i = 0; i < 1000; ++i) REQUIRE(scores[i] == Approx(i / 1000.0));
  }
}
