#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fortune/mat.hpp"
#include "fortune/rnn.hpp"
#include "fortune/trace.hpp"

namespace fortune {

// Per-step prediction errors for one trace, in raw counter units. errors[k]
// scores the prediction of sample W+k, so trace offset = k + W.
struct ErrorStream {
  Vec errors;
  std::size_t window = 0;  // W used to produce the stream
  double sample_period_ms = 1.0;
  Label label = Label::kUnknown;
  std::string source_id;
};

struct DetectorConfig {
  double tau = 0.0;         // error threshold
  std::size_t decision = 1; // D: consecutive steps required
  void validate() const;
};

// Half-open [begin, end) run of consecutive flagged steps.
struct AlarmInterval {
  std::size_t begin = 0, end = 0;
};

struct FlagResult {
  // flags[t] = 1 iff errors[t-D+1 .. t] all reach tau. Empty (with
  // window_exceeds_stream set) when the stream is shorter than D.
  std::vector<std::uint8_t> flags;
  std::vector<AlarmInterval> alarms;
  bool window_exceeds_stream = false;
};

// Mean squared error over the channels: (1/m) sum_c (pred_c - obs_c)^2.
double prediction_error(std::span<const double> pred,
                        std::span<const double> obs);

ErrorStream error_stream(const PredictorModel& model, const TraceMatrix& raw);

// Per-channel squared errors, (T-W) x m; used for counter ranking.
Mat channel_sq_error_stream(const PredictorModel& model,
                            const TraceMatrix& raw);

FlagResult flag_stream(const ErrorStream& stream, const DetectorConfig& cfg);

std::optional<std::size_t> first_alarm(const FlagResult& flags);
double alarm_latency_ms(std::size_t index, double sample_period_ms);

// Largest tau that would still flag the stream at decision window d:
// max over t of min(errors[t-d+1..t]). -inf when the stream is shorter
// than d. This is the per-trace score used for ROC curves and sweeps.
double flag_score(const Vec& errors, std::size_t decision);

struct SweepCell {
  double tau = 0.0;
  std::size_t decision = 1;
  double fpr = 0.0, fnr = 0.0, tpr = 0.0, fscore = 0.0;
};

struct OperatingPoint {
  double tau = 0.0;
  std::size_t decision = 1;
  double fpr = 0.0, fnr = 0.0, fscore = 0.0;
};

struct SweepResult {
  // Grid in tau-major order: for each tau (ascending), each D (ascending).
  std::vector<SweepCell> grid;
  OperatingPoint chosen;
  // First-alarm latency per attack stream at the chosen point, in ms from
  // the stream start; unset where no alarm fired.
  std::vector<std::optional<double>> attack_latency_ms;
};

// Per-trace decision: a stream counts as flagged when any step is flagged.
// FPR = flagged benign / benign, FNR = missed attack / attack. The chosen
// operating point minimizes |FPR - FNR|, breaking ties toward lower FPR,
// then smaller D, then smaller tau.
SweepResult sweep(const std::vector<ErrorStream>& benign,
                  const std::vector<ErrorStream>& attack,
                  const std::vector<double>& tau_grid,
                  const std::vector<std::size_t>& d_grid);

}  // namespace fortune
