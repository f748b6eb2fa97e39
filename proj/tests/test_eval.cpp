#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "doctest.h"
#include "fortune/detector.hpp"
#include "fortune/errors.hpp"
#include "fortune/eval.hpp"
#include "fortune/rng.hpp"
#include "json.hpp"

using namespace fortune;

namespace {

// Pair-counting AUC: P(attack > benign) + half credit for ties, evaluated
// literally over all benign x attack pairs.
double pair_auc(const std::vector<double>& benign,
                const std::vector<double>& attack) {
  double acc = 0.0;
  for (double a : attack)
    for (double b : benign) {
      if (a > b)
        acc += 1.0;
      else if (a == b)
        acc += 0.5;
    }
  return acc / (double(benign.size()) * double(attack.size()));
}

double brute_best_f(const std::vector<double>& benign,
                    const std::vector<double>& attack, double* thr_out) {
  std::vector<double> cand = benign;
  cand.insert(cand.end(), attack.begin(), attack.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  double best_f = -1.0, best_thr = 0.0;
  for (double thr : cand) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (double b : benign)
      if (b >= thr) ++fp;
    for (double a : attack)
      a >= thr ? ++tp : ++fn;
    const double denom = 2.0 * double(tp) + double(fp) + double(fn);
    const double f = denom > 0.0 ? 2.0 * double(tp) / denom : 0.0;
    if (f > best_f) {
      best_f = f;
      best_thr = thr;
    }
  }
  *thr_out = best_thr;
  return best_f;
}

FlagResult flags_of(std::size_t n, std::vector<AlarmInterval> alarms) {
  FlagResult f;
  f.flags.assign(n, 0);
  for (const auto& a : alarms)
    for (std::size_t t = a.begin; t < a.end; ++t) f.flags[t] = 1;
  f.alarms = std::move(alarms);
  return f;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const char* tag) {
  auto d = std::filesystem::temp_directory_path() /
           (std::string("fortune-eval-") + tag + "-" +
            std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("roc validation") {
  CHECK_THROWS_AS(roc({}, {1.0}), DataError);
  CHECK_THROWS_AS(roc({1.0}, {}), DataError);
  CHECK_THROWS_AS(roc({std::nan("")}, {1.0}), DataError);
  CHECK_THROWS_AS(roc({1.0}, {std::nan("")}), DataError);
}

TEST_CASE("auc equals pair counting with half credit for ties") {
  Rng rng(1212);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t nb = 1 + rng.below(30), na = 1 + rng.below(30);
    std::vector<double> b(nb), a(na);
    // Coarse integer scores force plenty of ties.
    for (auto& v : b) v = double(rng.below(10));
    for (auto& v : a) v = double(rng.below(10)) + double(rng.below(2));
    const auto curve = roc(b, a);
    CHECK(std::fabs(curve.auc - pair_auc(b, a)) <= 1e-12);
  }
}

TEST_CASE("separable score sets give exactly 1.0") {
  Rng rng(1313);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t nb = 1 + rng.below(20), na = 1 + rng.below(20);
    std::vector<double> b(nb), a(na);
    for (auto& v : b) v = rng.uniform(0.0, 10.0);
    for (auto& v : a) v = 10.5 + rng.uniform(0.0, 10.0);
    CHECK(roc(b, a).auc == 1.0);
  }
  // -inf benign scores (stream shorter than D) must not break exactness.
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(roc({ninf, 1.0}, {2.0, 3.0}).auc == 1.0);
}

TEST_CASE("identical score multisets give exactly 0.5") {
  Rng rng(1414);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.below(25);
    std::vector<double> s(n);
    for (auto& v : s) v = double(rng.below(6));
    CHECK(roc(s, s).auc == 0.5);
  }
}

TEST_CASE("roc curve runs from (0,0) to (1,1) with fpr ascending") {
  Rng rng(1515);
  std::vector<double> b(40), a(40);
  for (auto& v : b) v = double(rng.below(15));
  for (auto& v : a) v = double(rng.below(15)) + 3.0;
  const auto curve = roc(b, a);
  REQUIRE(curve.points.size() >= 2);
  CHECK(curve.points.front().fpr == 0.0);
  CHECK(curve.points.front().tpr == 0.0);
  CHECK(curve.points.back().fpr == 1.0);
  CHECK(curve.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
    CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
  }
}

TEST_CASE("trace_score matches the exhaustive max-min rule") {
  Rng rng(1616);
  for (int rep = 0; rep < 300; ++rep) {
    ErrorStream s;
    const std::size_t n = rng.below(25);
    s.errors.resize(n);
    for (auto& v : s.errors) v = rng.uniform(0.0, 6.0);
    const std::size_t d = 1 + rng.below(28);
    double want = -std::numeric_limits<double>::infinity();
    if (d <= n) {
      for (std::size_t t = d; t <= n; ++t) {
        double lo = s.errors[t - d];
        for (std::size_t k = t - d; k < t; ++k)
          lo = std::min(lo, s.errors[k]);
        want = std::max(want, lo);
      }
    }
    CHECK(trace_score(s, d) == want);
  }
  ErrorStream s;
  s.errors = {1.0};
  CHECK_THROWS_AS(trace_score(s, 0), UsageError);
}

TEST_CASE("f_score identities") {
  CHECK(f_score(5, 0, 0) == 1.0);
  CHECK(f_score(0, 3, 2) == 0.0);
  CHECK_THROWS_AS(f_score(0, 0, 0), DataError);
  // 2PR/(P+R) with P = tp/(tp+fp), R = tp/(tp+fn)
  const std::uint64_t tp = 7, fp = 3, fn = 2;
  const double p = double(tp) / double(tp + fp);
  const double r = double(tp) / double(tp + fn);
  CHECK(f_score(tp, fp, fn) ==
        doctest::Approx(2.0 * p * r / (p + r)).epsilon(1e-12));
  CHECK(f_score(14, 6, 4) == doctest::Approx(f_score(7, 3, 2)).epsilon(1e-15));
}

TEST_CASE("best threshold maximizes F and prefers the smallest on ties") {
  // Thresholds 1 and 3 both reach F = 2/3; the smaller one must win.
  const auto tie = best_threshold_fscore({2.0, 2.0}, {1.0, 3.0});
  CHECK(tie.threshold == 1.0);
  CHECK(tie.fscore == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const auto sep = best_threshold_fscore({1.0, 2.0}, {5.0, 6.0});
  CHECK(sep.threshold == 5.0);
  CHECK(sep.fscore == 1.0);

  CHECK_THROWS_AS(best_threshold_fscore({}, {1.0}), DataError);
  CHECK_THROWS_AS(best_threshold_fscore({1.0}, {}), DataError);
}

TEST_CASE("best threshold agrees with a brute-force candidate scan") {
  Rng rng(1717);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t nb = 1 + rng.below(20), na = 1 + rng.below(20);
    std::vector<double> b(nb), a(na);
    for (auto& v : b) v = double(rng.below(12));
    for (auto& v : a) v = double(rng.below(12));
    double want_thr = 0.0;
    const double want_f = brute_best_f(b, a, &want_thr);
    const auto got = best_threshold_fscore(b, a);
    CHECK(got.fscore == doctest::Approx(want_f).epsilon(1e-12));
    CHECK(got.threshold == want_thr);
  }
}

TEST_CASE("false alarm rate counts onsets per 100 seconds") {
  // No alarms over 10 seconds.
  std::vector<FlagResult> quiet{flags_of(10000, {})};
  CHECK(false_alarm_rate_per_second(quiet, 1.0) == 0.0);
  // One onset over 100 seconds of stream time.
  std::vector<FlagResult> one{flags_of(100000, {{5, 20}})};
  CHECK(false_alarm_rate_per_second(one, 1.0) == doctest::Approx(1.0));
  // Two onsets in one stream plus one in another, 50 s total at 2 ms.
  std::vector<FlagResult> multi{flags_of(20000, {{1, 2}, {10, 12}}),
                                flags_of(5000, {{100, 4000}})};
  CHECK(false_alarm_rate_per_second(multi, 2.0) == doctest::Approx(6.0));

  CHECK_THROWS_AS(false_alarm_rate_per_second({}, 1.0), DataError);
  CHECK_THROWS_AS(false_alarm_rate_per_second(quiet, 0.0), UsageError);
  std::vector<FlagResult> empty_streams{flags_of(0, {})};
  CHECK_THROWS_AS(false_alarm_rate_per_second(empty_streams, 1.0), DataError);
}

TEST_CASE("config hash is FNV-1a over key=value lines") {
  const std::vector<std::pair<std::string, std::string>> echo{{"a", "b"}};
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : std::string("a=b\n")) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  CHECK(config_hash(echo) == h);

  const std::vector<std::pair<std::string, std::string>> swapped{
      {"x", "1"}, {"y", "2"}};
  const std::vector<std::pair<std::string, std::string>> other{{"y", "2"},
                                                               {"x", "1"}};
  CHECK(config_hash(swapped) != config_hash(other));
  CHECK(config_hash({}) == 14695981039346656037ULL);
}

TEST_CASE("render_report writes a parseable, deterministic bundle") {
  // Small sweep over hand-built streams so every report section is present.
  ErrorStream benign;
  benign.errors = Vec(12, 0.5);
  ErrorStream attack;
  attack.errors = {0.5, 0.5, 4.0, 4.0, 4.0, 4.0, 0.5, 0.5, 4.0, 4.0, 4.0, 4.0};
  attack.label = Label::kAttack;
  ReportBundle bundle;
  bundle.sweep = sweep({benign}, {attack}, {1.0, 2.0}, {1, 2, 3});
  bundle.rocs.emplace_back("lstm w100", roc({0.5, 0.6}, {4.0, 4.0}));
  ComparisonTable table;
  table.rows.push_back({"rnn", 9, 1, 0, 0.947, 0.016, 0.0});
  table.rows.push_back({"pdf", 7, 5, 2, 0.666, 0.083, 0.222});
  bundle.comparison = table;
  bundle.config_echo = {{"model", "m.model"}, {"window", "100"}};
  bundle.seed = 1337;

  const auto d1 = temp_dir("r1");
  const auto d2 = temp_dir("r2");
  render_report(bundle, d1);
  render_report(bundle, d2);

  for (const char* name :
       {"sweep.csv", "roc_lstm_w100.csv", "comparison.csv", "comparison.txt",
        "summary.json-text", "README-run.txt"}) {
    INFO("file " << name);
    CHECK(std::filesystem::exists(d1 / name));
    CHECK(slurp(d1 / name) == slurp(d2 / name));
  }

  // sweep.csv: header + one row per grid cell, numerically faithful.
  {
    std::ifstream in(d1 / "sweep.csv");
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "tau,D,fpr,fnr,tpr,fscore");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string cell;
      std::vector<double> vals;
      while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
      REQUIRE(vals.size() == 6);
      const auto& g = bundle.sweep->grid[rows];
      CHECK(vals[0] == g.tau);
      CHECK(vals[1] == double(g.decision));
      CHECK(vals[2] == g.fpr);
      CHECK(vals[5] == g.fscore);
      ++rows;
    }
    CHECK(rows == bundle.sweep->grid.size());
    CHECK(rows == 6);  // 2 taus x 3 decisions
  }

  // summary.json-text: well-formed, carries seed, hash, AUC and rows.
  {
    const auto j = nlohmann::json::parse(slurp(d1 / "summary.json-text"));
    CHECK(j["seed"] == 1337);
    CHECK(j["config"]["window"] == "100");
    char want_hash[32];
    std::snprintf(want_hash, sizeof(want_hash), "%016llx",
                  static_cast<unsigned long long>(
                      config_hash(bundle.config_echo)));
    CHECK(j["config_hash"] == want_hash);
    CHECK(j["auc"]["lstm w100"] == 1.0);
    CHECK(j["comparison"].size() == 2);
    CHECK(j["operating_point"]["tau"] == bundle.sweep->chosen.tau);
    REQUIRE(j["attack_latency_ms"].size() == 1);
  }

  // README-run.txt names the seed and the hash so runs stay attributable.
  {
    const std::string readme = slurp(d1 / "README-run.txt");
    CHECK(readme.find("1337") != std::string::npos);
    char want_hash[32];
    std::snprintf(want_hash, sizeof(want_hash), "%016llx",
                  static_cast<unsigned long long>(
                      config_hash(bundle.config_echo)));
    CHECK(readme.find(want_hash) != std::string::npos);
    CHECK(readme.find("sweep.csv") != std::string::npos);
  }

  // comparison.txt is the aligned view of the same techniques.
  {
    const std::string txt = slurp(d1 / "comparison.txt");
    CHECK(txt.find("technique") != std::string::npos);
    CHECK(txt.find("rnn") != std::string::npos);
    CHECK(txt.find("0.9470") != std::string::npos);
  }

  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("render_report omits absent sections") {
  ReportBundle bundle;
  bundle.config_echo = {{"cmd", "probe"}};
  bundle.seed = 7;
  const auto d = temp_dir("sparse");
  render_report(bundle, d);
  CHECK_FALSE(std::filesystem::exists(d / "sweep.csv"));
  CHECK_FALSE(std::filesystem::exists(d / "comparison.csv"));
  CHECK(std::filesystem::exists(d / "summary.json-text"));
  CHECK(std::filesystem::exists(d / "README-run.txt"));

  ReportBundle hdr = bundle;
  hdr.comparison = ComparisonTable{};  // present but empty: header only
  const auto d2 = temp_dir("hdr");
  render_report(hdr, d2);
  CHECK(slurp(d2 / "comparison.csv") == "technique,tp,fp,fn,fscore,fpr,fnr\n");

  std::filesystem::remove_all(d);
  std::filesystem::remove_all(d2);
}

}  // TEST_SUITE
