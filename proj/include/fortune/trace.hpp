#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fortune/mat.hpp"

namespace fortune {

enum class Label { kBenign, kAttack, kUnknown };

const char* to_string(Label l);

// An m-channel hardware-counter time series sampled at a fixed period.
// Row c of `values` holds channel c; column t is sample t. Counter values
// are stored as doubles but represent non-negative integer counts.
struct TraceMatrix {
  std::vector<std::string> channel_names;
  double sample_period_ms = 1.0;
  Mat values;  // m x T
  Label label = Label::kUnknown;
  std::string source_id;

  std::size_t channels() const { return values.rows(); }
  std::size_t samples() const { return values.cols(); }

  // Column t as a length-m vector.
  Vec sample(std::size_t t) const;

  // Invariants: m >= 1, T >= 1, unique channel names matching m, positive
  // period, all values finite and non-negative. Throws DataError.
  void validate() const;
};

// Per-channel [0,1] min-max normalization fitted on benign traces. A
// degenerate channel (max == min) stores max = min + 1 so the map stays
// invertible. Scaling never clamps: test-time values outside the fitted
// range land outside [0,1], which is exactly the signal the detector needs.
struct Scaler {
  Vec min;
  Vec max;
  std::size_t channels() const { return min.size(); }
};

Scaler fit_scaler(const std::vector<TraceMatrix>& traces);
TraceMatrix apply_scaler(const TraceMatrix& t, const Scaler& s);
TraceMatrix invert_scaler(const TraceMatrix& t, const Scaler& s);
void unscale_sample(const double* scaled, const Scaler& s, double* raw);

// Sliding next-step windows over one scaled trace. A trace of length T with
// window W yields N = T - W pairs: input i is samples [i, i+W), the target
// is sample i+W. Windows share one time-major buffer (row t = sample t), so
// input i is just a span over W*m contiguous doubles.
class WindowBatch {
 public:
  // Requires T >= W + 1 ("insufficient trace length") and W >= 1.
  WindowBatch(const TraceMatrix& scaled, std::size_t window);

  std::size_t count() const { return count_; }
  std::size_t window() const { return window_; }
  std::size_t channels() const { return channels_; }

  std::span<const double> input(std::size_t i) const;
  std::span<const double> target(std::size_t i) const;
  // Offset of window i's first sample in the source trace (= i).
  std::size_t origin(std::size_t i) const { return i; }

 private:
  std::size_t window_ = 0, channels_ = 0, count_ = 0;
  std::vector<double> time_major_;  // T x m
};

// trace-csv v1: a metadata line, a header row naming the channels, then one
// integer row per sample. Errors carry 1-based line numbers.
TraceMatrix load_trace(const std::filesystem::path& path);
void save_trace(const TraceMatrix& t, const std::filesystem::path& path);

// Drops leading and trailing samples where every channel is below
// `fraction` of its own maximum. An entirely idle trace is a DataError.
TraceMatrix trim_idle(const TraceMatrix& t, double fraction = 0.01);

// Keeps only the listed channel rows, in the given order. Indices must be
// in range and distinct.
TraceMatrix select_channels(const TraceMatrix& t,
                            const std::vector<std::size_t>& idx);

}  // namespace fortune
