#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fortune/detector.hpp"
#include "fortune/mat.hpp"

namespace fortune {

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), fpr ascending
  double auc = 0.0;
};

// ROC over per-trace scores (higher = more attack-like): one point per
// distinct threshold, trapezoidal AUC. Equivalent to pair counting with
// half credit for ties.
RocCurve roc(const std::vector<double>& benign_scores,
             const std::vector<double>& attack_scores);

// Per-trace detection score at a fixed decision window: the largest tau
// that would still flag the stream, i.e. max over t of
// min(errors[t-D+1..t]).
double trace_score(const ErrorStream& stream, std::size_t decision);

double f_score(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

// Best achievable F over thresholds on per-trace scores, decision
// "score >= threshold means attack". Ties prefer the smallest threshold.
struct ThresholdChoice {
  double threshold = 0.0;
  double fscore = 0.0;
};
ThresholdChoice best_threshold_fscore(const std::vector<double>& benign_scores,
                                      const std::vector<double>& attack_scores);

// Alarm onsets per second of stream time, as a percentage (alarm onsets per
// 100 seconds). All streams must share the sample period.
double false_alarm_rate_per_second(const std::vector<FlagResult>& flags,
                                   double sample_period_ms);

struct TechniqueResult {
  std::string name;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double fscore = 0.0, fpr = 0.0, fnr = 0.0;
};

struct ComparisonTable {
  std::vector<TechniqueResult> rows;
};

struct ReportBundle {
  std::optional<SweepResult> sweep;
  std::vector<std::pair<std::string, RocCurve>> rocs;  // name -> curve
  std::optional<ComparisonTable> comparison;
  // Ordered config echo; hashed (FNV-1a over "key=value\n") into the run
  // README so reruns are attributable to an exact configuration.
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::uint64_t seed = 0;
};

std::uint64_t config_hash(
    const std::vector<std::pair<std::string, std::string>>& config_echo);

// Writes sweep.csv, roc_<name>.csv, comparison.csv, comparison.txt,
// summary.json-text and README-run.txt into out_dir (only the sections
// present in the bundle). Output is deterministic: no timestamps, fixed
// ordering, fixed formatting.
void render_report(const ReportBundle& bundle,
                   const std::filesystem::path& out_dir);

}  // namespace fortune
