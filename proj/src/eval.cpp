#include "fortune/eval.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>

#include "fortune/errors.hpp"
#include "json.hpp"
#include "fsio.hpp"

namespace fortune {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// %.17g round-trips doubles exactly through text.
std::string full(double v) { return fmt("%.17g", v); }

}  // namespace

RocCurve roc(const std::vector<double>& benign_scores,
             const std::vector<double>& attack_scores) {
  if (benign_scores.empty() || attack_scores.empty())
    throw DataError("roc needs at least one benign and one attack score");
  const std::uint64_t nb = benign_scores.size();
  const std::uint64_t na = attack_scores.size();

  // Count benign/attack scores per distinct value, then walk thresholds
  // from high to low. Keeping everything in integer counts makes the
  // trapezoid sum exact: each segment contributes
  //   (fp_step) * (2*tp_before + tp_step)
  // to 2*nb*na*AUC, which is an integer (ties enter as the tp_step*fp_step
  // half-credit term).
  std::map<double, std::pair<std::uint64_t, std::uint64_t>> counts;
  for (double s : benign_scores) {
    if (std::isnan(s)) throw DataError("roc scores must not be NaN");
    ++counts[s].first;
  }
  for (double s : attack_scores) {
    if (std::isnan(s)) throw DataError("roc scores must not be NaN");
    ++counts[s].second;
  }

  RocCurve out;
  out.points.push_back({0.0, 0.0});
  std::uint64_t fp = 0, tp = 0;
  std::uint64_t twice_area = 0;  // accumulates 2*nb*na*AUC
  for (auto it = counts.rbegin(); it != counts.rend(); ++it) {
    const std::uint64_t bstep = it->second.first;
    const std::uint64_t astep = it->second.second;
    twice_area += bstep * (2 * tp + astep);
    fp += bstep;
    tp += astep;
    out.points.push_back({static_cast<double>(fp) / static_cast<double>(nb),
                          static_cast<double>(tp) / static_cast<double>(na)});
  }
  out.auc = static_cast<double>(twice_area) /
            (2.0 * static_cast<double>(nb) * static_cast<double>(na));
  return out;
}

double trace_score(const ErrorStream& stream, std::size_t decision) {
  if (decision == 0) throw UsageError("decision window must be at least 1");
  return flag_score(stream.errors, decision);
}

double f_score(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  if (tp + fp + fn == 0) throw DataError("f_score needs at least one count");
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) /
         static_cast<double>(2 * tp + fp + fn);
}

ThresholdChoice best_threshold_fscore(const std::vector<double>& benign_scores,
                                      const std::vector<double>& attack_scores) {
  if (benign_scores.empty() || attack_scores.empty())
    throw DataError("threshold search needs benign and attack scores");
  // Candidate thresholds: every distinct score. "score >= thr" flags a
  // trace, so each candidate realizes one distinct confusion matrix.
  std::vector<double> cand;
  cand.reserve(benign_scores.size() + attack_scores.size());
  cand.insert(cand.end(), benign_scores.begin(), benign_scores.end());
  cand.insert(cand.end(), attack_scores.begin(), attack_scores.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

  ThresholdChoice best;
  bool have = false;
  for (double thr : cand) {
    std::uint64_t tp = 0, fp = 0;
    for (double s : attack_scores)
      if (s >= thr) ++tp;
    for (double s : benign_scores)
      if (s >= thr) ++fp;
    const std::uint64_t fn = attack_scores.size() - tp;
    const double f = (tp + fp + fn == 0) ? 0.0 : f_score(tp, fp, fn);
    if (!have || f > best.fscore) {
      best = {thr, f};
      have = true;
    }
  }
  return best;
}

double false_alarm_rate_per_second(const std::vector<FlagResult>& flags,
                                   double sample_period_ms) {
  if (flags.empty()) throw DataError("false alarm rate needs flag streams");
  if (!(sample_period_ms > 0.0))
    throw UsageError("sample period must be positive");
  std::uint64_t onsets = 0;
  std::uint64_t samples = 0;
  for (const auto& f : flags) {
    onsets += f.alarms.size();
    samples += f.flags.size();
  }
  const double seconds =
      static_cast<double>(samples) * sample_period_ms / 1000.0;
  if (!(seconds > 0.0)) throw DataError("flag streams cover zero duration");
  return static_cast<double>(onsets) / seconds * 100.0;
}

std::uint64_t config_hash(
    const std::vector<std::pair<std::string, std::string>>& config_echo) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [k, v] : config_echo) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  return h;
}

void render_report(const ReportBundle& bundle,
                   const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw DataError("cannot create report directory " + out_dir.string() +
                    ": " + ec.message());

  std::vector<std::string> written;

  if (bundle.sweep) {
    std::ostringstream os;
    os << "tau,D,fpr,fnr,tpr,fscore\n";
    for (const auto& c : bundle.sweep->grid) {
      os << full(c.tau) << ',' << c.decision << ',' << full(c.fpr) << ','
         << full(c.fnr) << ',' << full(c.tpr) << ',' << full(c.fscore)
         << '\n';
    }
    atomic_write_file(out_dir / "sweep.csv", os.str());
    written.push_back("sweep.csv");
  }

  for (const auto& [name, curve] : bundle.rocs) {
    std::string safe;
    for (char c : name)
      safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
               c == '_')
                  ? c
                  : '_';
    if (safe.empty()) safe = "model";
    std::ostringstream os;
    os << "fpr,tpr\n";
    for (const auto& p : curve.points)
      os << full(p.fpr) << ',' << full(p.tpr) << '\n';
    const std::string fname = "roc_" + safe + ".csv";
    atomic_write_file(out_dir / fname, os.str());
    written.push_back(fname);
  }

  if (bundle.comparison) {
    std::ostringstream os;
    os << "technique,tp,fp,fn,fscore,fpr,fnr\n";
    for (const auto& r : bundle.comparison->rows) {
      os << r.name << ',' << r.tp << ',' << r.fp << ',' << r.fn << ','
         << full(r.fscore) << ',' << full(r.fpr) << ',' << full(r.fnr)
         << '\n';
    }
    atomic_write_file(out_dir / "comparison.csv", os.str());
    written.push_back("comparison.csv");

    // Aligned fixed-width text view of the same rows.
    std::size_t wname = std::string("technique").size();
    for (const auto& r : bundle.comparison->rows)
      wname = std::max(wname, r.name.size());
    std::ostringstream ts;
    char line[160];
    std::snprintf(line, sizeof(line), "%-*s  %8s  %8s  %8s  %8s  %8s  %8s\n",
                  static_cast<int>(wname), "technique", "tp", "fp", "fn",
                  "fscore", "fpr", "fnr");
    ts << line;
    for (const auto& r : bundle.comparison->rows) {
      std::snprintf(line, sizeof(line),
                    "%-*s  %8" PRIu64 "  %8" PRIu64 "  %8" PRIu64
                    "  %8.4f  %8.4f  %8.4f\n",
                    static_cast<int>(wname), r.name.c_str(), r.tp, r.fp, r.fn,
                    r.fscore, r.fpr, r.fnr);
      ts << line;
    }
    atomic_write_file(out_dir / "comparison.txt", ts.str());
    written.push_back("comparison.txt");
  }

  {
    nlohmann::ordered_json j;
    j["seed"] = bundle.seed;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : bundle.config_echo) cfg[k] = v;
    j["config"] = cfg;
    char hashbuf[32];
    std::snprintf(hashbuf, sizeof(hashbuf), "%016" PRIx64,
                  config_hash(bundle.config_echo));
    j["config_hash"] = hashbuf;
    if (bundle.sweep) {
      const auto& op = bundle.sweep->chosen;
      j["operating_point"] = {{"tau", op.tau},
                              {"decision", op.decision},
                              {"fpr", op.fpr},
                              {"fnr", op.fnr},
                              {"fscore", op.fscore}};
      nlohmann::ordered_json lat = nlohmann::ordered_json::array();
      for (const auto& l : bundle.sweep->attack_latency_ms) {
        if (l)
          lat.push_back(*l);
        else
          lat.push_back(nullptr);
      }
      j["attack_latency_ms"] = lat;
    }
    if (!bundle.rocs.empty()) {
      nlohmann::ordered_json aucs = nlohmann::ordered_json::object();
      for (const auto& [name, curve] : bundle.rocs) aucs[name] = curve.auc;
      j["auc"] = aucs;
    }
    if (bundle.comparison) {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (const auto& r : bundle.comparison->rows) {
        rows.push_back({{"technique", r.name},
                        {"tp", r.tp},
                        {"fp", r.fp},
                        {"fn", r.fn},
                        {"fscore", r.fscore},
                        {"fpr", r.fpr},
                        {"fnr", r.fnr}});
      }
      j["comparison"] = rows;
    }
    atomic_write_file(out_dir / "summary.json-text", j.dump(2) + "\n");
    written.push_back("summary.json-text");
  }

  {
    std::ostringstream os;
    os << "fortune run report\n";
    os << "==================\n\n";
    char hashbuf[32];
    std::snprintf(hashbuf, sizeof(hashbuf), "%016" PRIx64,
                  config_hash(bundle.config_echo));
    os << "seed:        " << bundle.seed << "\n";
    os << "config hash: " << hashbuf << "\n\n";
    os << "configuration\n";
    os << "-------------\n";
    for (const auto& [k, v] : bundle.config_echo)
      os << k << " = " << v << "\n";
    os << "\nfiles\n";
    os << "-----\n";
    for (const auto& f : written) os << f << "\n";
    os << "README-run.txt\n";
    os << "\nRegenerating with the same seed and configuration reproduces "
          "every file byte for byte.\n";
    atomic_write_file(out_dir / "README-run.txt", os.str());
  }
}

}  // namespace fortune
