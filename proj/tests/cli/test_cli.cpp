// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

// Drives the built `ddt` binary. Runs from the repository root so the fixture config's
// relative paths resolve.

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kScratch = DDT_TEST_SCRATCH;
const std::string kFixture = DDT_FIXTURE_DIR;
const std::string kProvider = kFixture + "/provider.json";
const std::string kItems = kFixture + "/items.jsonl";
const std::string kIni = kFixture + "/hinted.ini";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

Run ddt(const std::vector<std::string>& args) {
  fs::create_directories(kScratch);
  const fs::path out = kScratch / "stdout.txt";
  const fs::path err = kScratch / "stderr.txt";
  std::string cmd = quote(DDT_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >" + quote(out.string()) + " 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string path(const std::string& name) { return (kScratch / name).string(); }

}  // namespace

TEST_CASE("score writes one line per item and a report") {
  const Run r = ddt({"--provider", kProvider, "--thresholds", "-1,-3,-5", "score", "-i", kItems, "-o", path("scored.jsonl"),
                     "--report", path("report.json"), "--histograms", path("hist")});
  REQUIRE(r.code == 0);
  const auto scored = lines_of(slurp(path("scored.jsonl")));
  CHECK(scored.size() == lines_of(slurp(kItems)).size());

  // The report's fractions agree with counting over the per-item phi lists.
  std::size_t n = 0;
  std::size_t ge1 = 0;
  std::size_t ge3 = 0;
  std::size_t ge5 = 0;
  for (const auto& l : scored) {
    const auto j = json::parse(l);
    for (const auto& v : j["phi"]) {
      const double x = v.get<double>();
      ++n;
      ge1 += x >= -1.0;
      ge3 += x >= -3.0;
      ge5 += x >= -5.0;
    }
  }
  const auto report = json::parse(slurp(path("report.json")));
  const auto& frac = report["frac_ge"];
  CHECK(frac["-1"].get<double>() == doctest::Approx(double(ge1) / double(n)).epsilon(1e-8));
  CHECK(frac["-3"].get<double>() == doctest::Approx(double(ge3) / double(n)).epsilon(1e-8));
  CHECK(frac["-5"].get<double>() == doctest::Approx(double(ge5) / double(n)).epsilon(1e-8));
  CHECK(slurp(path("hist/phi_hist.csv")).rfind("bin_left,bin_right,count", 0) == 0);
  CHECK(fs::exists(path("hist/s_clipped_hist.csv")));
}

TEST_CASE("score on an empty corpus succeeds") {
  std::ofstream(path("empty.jsonl")).close();
  const Run r = ddt({"--provider", kProvider, "score", "-i", path("empty.jsonl"), "-o", path("empty_scored.jsonl")});
  CHECK(r.code == 0);
  CHECK(lines_of(slurp(path("empty_scored.jsonl"))).empty());
}

TEST_CASE("usage and I/O failures exit with 2") {
  Run r = ddt({"--provider", kProvider, "score", "-i", path("does_not_exist.jsonl")});
  CHECK(r.code == 2);
  CHECK(r.err.find("does_not_exist") != std::string::npos);
  CHECK(ddt({"--provider", kProvider, "score"}).code == 2);
  CHECK(ddt({"frobnicate"}).code == 2);
  CHECK(ddt({"--provider", path("nope.json"), "score", "-i", kItems}).code == 2);
  r = ddt({"--provider", kProvider, "decode", "-q", "1 + 2", "-a", "3"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--seed") != std::string::npos);
  CHECK(ddt({"decode", "--help"}).code == 0);
}

TEST_CASE("classify fails on out-of-distribution items when asked") {
  std::ofstream(path("ood.jsonl")) << R"({"id": "x", "question": "1 + 1", "answer": "\\boxed{ 9 } </hint> # CoT <hint> so"})"
                                   << "\n";
  CHECK(ddt({"--provider", kProvider, "--gamma", "3", "classify", "-i", path("ood.jsonl")}).code == 0);
  const Run r = ddt({"--provider", kProvider, "--gamma", "3", "classify", "-i", path("ood.jsonl"), "--fail-on-ood"});
  CHECK(r.code == 1);
  CHECK(r.out.find("out_of_distribution") != std::string::npos);
}

TEST_CASE("show-config prints the effective settings") {
  const Run r = ddt({"--config", kIni, "--show-config", "decode"});
  CHECK(r.code == 0);
  CHECK(r.out.find("seed=7") != std::string::npos);
  CHECK(r.out.find("max-len=24") != std::string::npos);
}

TEST_CASE("decode with beta 0 replays the imitator-only baseline") {
  for (const std::string seed : {"1", "2", "3", "11"}) {
    const std::vector<std::string> base = {"--config", kIni, "--seed", seed, "decode", "-q", "13 + 17", "-a", "30", "--json"};
    auto with = [&](std::vector<std::string> extra) {
      std::vector<std::string> args = base;
      args.insert(args.end(), extra.begin(), extra.end());
      const Run r = ddt(args);
      REQUIRE(r.code == 0);
      return json::parse(r.out)["tokens"].get<std::vector<int>>();
    };
    const auto hinted = with({"--beta", "0", "--trace", path("trace.jsonl")});
    const auto imitator = with({"--mode", "imitator"});
    const auto trace = json::parse(slurp(path("trace.jsonl")));
    std::size_t mixed = 0;
    while (mixed < trace["mode"].size() && trace["mode"][mixed] == "mixed") ++mixed;
    CAPTURE(seed);
    REQUIRE(imitator.size() >= mixed);
    for (std::size_t i = 0; i < mixed; ++i) CHECK(hinted[i] == imitator[i]);
  }
}

TEST_CASE("decode constant-lambda ablation and trace") {
  const Run r = ddt({"--config", kIni, "decode", "-q", "13 + 17", "-a", "30", "--lambda-const", "0.5", "--trace",
                     path("trace05.jsonl")});
  REQUIRE(r.code == 0);
  const auto trace = json::parse(slurp(path("trace05.jsonl")));
  for (const std::string key : {"id", "entropy", "normalized_entropy", "lambda", "mode", "token"}) {
    CHECK(trace.contains(key));
  }
  bool any_mixed = false;
  for (std::size_t i = 0; i < trace["mode"].size(); ++i) {
    if (trace["mode"][i] == "mixed") {
      any_mixed = true;
      CHECK(trace["lambda"][i].get<double>() == 0.5);
    }
  }
  CHECK(any_mixed);
}

TEST_CASE("realign is byte-reproducible and independent of worker count") {
  const std::vector<std::string> common = {"--config", kIni, "realign", "-i", kItems};
  auto run = [&](const std::string& tag, const std::string& workers) {
    std::vector<std::string> args = {"--workers", workers};
    args.insert(args.end(), common.begin(), common.end());
    for (const std::string& a : {std::string("-o"), path(tag + ".jsonl"), std::string("--report"), path(tag + ".report.json")}) {
      args.push_back(a);
    }
    const Run r = ddt(args);
    REQUIRE(r.code == 0);
  };
  run("realign_a", "1");
  run("realign_b", "1");
  run("realign_c", "4");
  const std::string a = slurp(path("realign_a.jsonl"));
  CHECK(!a.empty());
  CHECK(a == slurp(path("realign_b.jsonl")));
  CHECK(a == slurp(path("realign_c.jsonl")));
  CHECK(slurp(path("realign_a.report.json")) == slurp(path("realign_b.report.json")));
  CHECK(slurp(path("realign_a.jsonl.dropped.jsonl")) == slurp(path("realign_c.jsonl.dropped.jsonl")));
  for (const auto& l : lines_of(a)) {
    const auto j = json::parse(l);
    CHECK(j["verified"] == true);
  }
}

TEST_CASE("idft-weights schemes") {
  // Runs on realigned output as well as on corpora.
  REQUIRE(ddt({"--config", kIni, "realign", "-i", kItems, "-o", path("for_weights.jsonl"), "--report",
               path("for_weights.report.json")})
              .code == 0);
  Run r = ddt({"--provider", kProvider, "idft-weights", "-i", path("for_weights.jsonl"), "--scheme", "dft", "-o",
               path("dft.jsonl")});
  REQUIRE(r.code == 0);
  for (const auto& l : lines_of(slurp(path("dft.jsonl")))) {
    const auto j = json::parse(l);
    for (std::size_t i = 0; i < j["weight"].size(); ++i) {
      const double p = std::exp(j["log_probs"][i].get<double>());
      CHECK(j["weight"][i].get<double>() == doctest::Approx(p).epsilon(1e-8));
    }
  }
  r = ddt({"--provider", kProvider, "idft-weights", "-i", kItems, "--scheme", "hard-truncate", "--tau", "-5"});
  REQUIRE(r.code == 0);
  std::size_t masked = 0;
  for (const auto& l : lines_of(r.out)) {
    const auto j = json::parse(l);
    for (std::size_t i = 0; i < j["weight"].size(); ++i) {
      const bool drop = j["phi"][i].get<double>() <= -5.0;
      masked += drop;
      CHECK(j["weight"][i].get<double>() == (drop ? 0.0 : 1.0));
    }
  }
  CHECK(ddt({"--provider", kProvider, "idft-weights", "-i", kItems, "--scheme", "eaft"}).code == 2);
}

TEST_CASE("validate-theory passes and catches an injected fault") {
  Run r = ddt({"validate-theory", "-o", path("theory.json")});
  CHECK(r.code == 0);
  const auto report = json::parse(slurp(path("theory.json")));
  CHECK(report["passed"] == true);
  CHECK(r.err.find("FAIL") == std::string::npos);

  r = ddt({"validate-theory", "--trials", "20000", "--sequences", "2000", "--inject-fault"});
  CHECK(r.code == 1);
  CHECK(r.err.find("FAIL zero_mean") != std::string::npos);
}
