#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch2/catch.hpp>

#include "tempocf/log.hpp"

using namespace tempocf;
namespace fs = std::filesystem;

#ifndef TEMPOCF_CLI_PATH
#define TEMPOCF_CLI_PATH "./tempocf"
#endif
#ifndef PREDICTOR_STUB_PATH
#define PREDICTOR_STUB_PATH "./predictor_stub"
#endif

namespace {

struct CliFixture {
  fs::path dir;
  std::string cli = TEMPOCF_CLI_PATH;

  CliFixture() {
    dir = fs::temp_directory_path() / ("tempocf_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~CliFixture() { fs::remove_all(dir); }

  fs::path p(const std::string& name) const { return dir / name; }

  int run(const std::string& args, const std::string& out_file = "") const {
    std::string command = "'" + cli + "' " + args;
    command += " >'" + (out_file.empty() ? (dir / "stdout.txt").string() : out_file) + "' 2>'" +
               (dir / "stderr.txt").string() + "'";
    const int status = std::system(command.c_str());
    return status < 0 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : -1);
  }

  std::string stdout_text() const { return slurp(dir / "stdout.txt"); }

  static std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream f(p(name));
    f << text;
  }
};

}  // namespace

TEST_CASE("cli workflow", "[cli]") {
  CliFixture fx;

  // gen-log: deterministic per seed
  REQUIRE(fx.run("gen-log --seed 7 --cases 300 --out '" + fx.p("a.csv").string() + "'") == 0);
  REQUIRE(fx.run("gen-log --seed 7 --cases 300 --out '" + fx.p("b.csv").string() + "'") == 0);
  REQUIRE(fx.run("gen-log --seed 8 --cases 300 --out '" + fx.p("c.csv").string() + "'") == 0);
  REQUIRE(CliFixture::slurp(fx.p("a.csv")) == CliFixture::slurp(fx.p("b.csv")));
  REQUIRE(CliFixture::slurp(fx.p("a.csv")) != CliFixture::slurp(fx.p("c.csv")));

  fx.write("cov10.ltl", "G (contacthospital -> X (acceptclaim | rejectclaim))\n");
  fx.write("never.ltl", "false\n");
  fx.write("agency.txt", "apply\naut_chk\nman_chk\nphone\nok\noffer\nbook\nsend_doc\nsms\nemail\n");
  fx.write("phi_chk.ltl", "(!man_chk) U aut_chk\n");
  fx.write("bad.ltl", "F not_an_activity\n");

  SECTION("compile reports automaton shape") {
    REQUIRE(fx.run("compile --formula '" + fx.p("phi_chk.ltl").string() + "' --alphabet '" +
                   fx.p("agency.txt").string() + "' --dot '" + fx.p("phi.dot").string() + "'") ==
            0);
    REQUIRE(fx.stdout_text().find("states: 3, accepting: 1") != std::string::npos);
    REQUIRE(CliFixture::slurp(fx.p("phi.dot")).find("doublecircle") != std::string::npos);

    fx.write("top.ltl", "true\n");
    REQUIRE(fx.run("compile --formula '" + fx.p("top.ltl").string() + "' --alphabet '" +
                   fx.p("agency.txt").string() + "'") == 0);
    REQUIRE(fx.stdout_text().find("states: 1") != std::string::npos);

    REQUIRE(fx.run("compile --formula '" + fx.p("bad.ltl").string() + "' --alphabet '" +
                   fx.p("agency.txt").string() + "'") == 2);
  }

  SECTION("check prints per-case compliance and the fraction") {
    REQUIRE(fx.run("check --log '" + fx.p("a.csv").string() + "' --formula '" +
                   fx.p("cov10.ltl").string() + "'") == 0);
    const auto out = fx.stdout_text();
    REQUIRE(out.find("case_001,1") != std::string::npos);
    REQUIRE(out.find("fraction: 1") != std::string::npos);

    REQUIRE(fx.run("check --log '" + fx.p("a.csv").string() + "' --formula '" +
                   fx.p("never.ltl").string() + "'") == 0);
    REQUIRE(fx.stdout_text().find("fraction: 0") != std::string::npos);

    REQUIRE(fx.run("check --log '" + fx.p("a.csv").string() + "' --formula '" +
                   fx.p("cov10.ltl").string() + "' --prefix 99") == 2);
  }

  SECTION("train writes a model and reports accuracies") {
    REQUIRE(fx.run("train --log '" + fx.p("a.csv").string() +
                   "' --prefix 8 --epochs 120 --out '" + fx.p("model.json").string() + "'") == 0);
    const auto out = fx.stdout_text();
    REQUIRE(out.find("train_accuracy:") != std::string::npos);
    REQUIRE(out.find("validation_accuracy:") != std::string::npos);
    REQUIRE(fs::exists(fx.p("model.json")));

    REQUIRE(fx.run("train --log '" + fx.p("nope.csv").string() + "' --prefix 8") == 2);
  }

  SECTION("explain wires strategies, exit codes, and the external protocol") {
    REQUIRE(fx.run("train --log '" + fx.p("a.csv").string() +
                   "' --prefix 8 --epochs 120 --out '" + fx.p("model.json").string() + "'") == 0);

    const std::string base = "explain --log '" + fx.p("a.csv").string() + "' --model '" +
                             fx.p("model.json").string() + "' --formula '" +
                             fx.p("cov10.ltl").string() + "'";

    // t=1 delivers at most one candidate
    REQUIRE(fx.run(base + " --case case_001 --strategy Online --t 1 --seed 3 --out '" +
                   fx.p("one.json").string() + "'") == 0);
    const auto one = CliFixture::slurp(fx.p("one.json"));
    REQUIRE(one.find("\"candidates\"") != std::string::npos);

    // desired equal to the current prediction: nothing to explain
    auto log = log::read_csv_log(fx.p("a.csv"));
    (void)log;
    const int rc_same_true = fx.run(base + " --case case_001 --desired true");
    const int rc_same_false = fx.run(base + " --case case_001 --desired false");
    REQUIRE(((rc_same_true == 4) != (rc_same_false == 4)));  // exactly one direction is a no-op
    REQUIRE(((rc_same_true == 0) || (rc_same_false == 0)));

    // external predictor: presence of acceptclaim decides the class
    const std::string stub = PREDICTOR_STUB_PATH;
    REQUIRE(fx.run(base + " --external '" + stub +
                   " contains acceptclaim' --case case_001 --strategy Gen --t 2 --seed 4") == 0);
  }

  SECTION("bench emits one row per strategy x formula") {
    fx.write("bench.conf",
             "formula = " + fx.p("cov10.ltl").string() + ":cov10\n" +
                 "strategies = Gen,Online\nprefixes = 8\nqueries = 3\nt = 2\nseed = 1\n"
                 "generations = 15\npatience = 5\nepochs = 60\n");
    REQUIRE(fx.run("bench --log '" + fx.p("a.csv").string() + "' --config '" +
                   fx.p("bench.conf").string() + "' --out '" + fx.p("rows.csv").string() + "'") ==
            0);
    const auto csv = CliFixture::slurp(fx.p("rows.csv"));
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    REQUIRE(line ==
            "strategy,formula_id,coverage,prefix,distance,sparsity,implausibility,diversity,"
            "compliance,hit_rate,runtime_seconds");
    int rows = 0;
    while (std::getline(lines, line))
      if (!line.empty()) ++rows;
    REQUIRE(rows == 2);
    REQUIRE(csv.find("Gen,cov10") != std::string::npos);
    REQUIRE(csv.find("Online,cov10") != std::string::npos);
  }

  SECTION("bench results are deterministic apart from measured runtimes") {
    fx.write("bench.conf",
             "formula = " + fx.p("cov10.ltl").string() + ":cov10\n" +
                 "strategies = Online\nprefixes = 8\nqueries = 2\nt = 2\nseed = 9\n"
                 "generations = 10\npatience = 4\nepochs = 40\n");
    const std::string run = "bench --log '" + fx.p("a.csv").string() + "' --config '" +
                            fx.p("bench.conf").string() + "' --out '";
    REQUIRE(fx.run(run + fx.p("r1.csv").string() + "'") == 0);
    REQUIRE(fx.run(run + fx.p("r2.csv").string() + "'") == 0);
    auto strip_runtime = [](const std::string& text) {
      std::istringstream in(text);
      std::string line, out;
      while (std::getline(in, line)) {
        const auto comma = line.rfind(',');
        out += line.substr(0, comma) + "\n";
      }
      return out;
    };
    REQUIRE(strip_runtime(CliFixture::slurp(fx.p("r1.csv"))) ==
            strip_runtime(CliFixture::slurp(fx.p("r2.csv"))));
  }
}
