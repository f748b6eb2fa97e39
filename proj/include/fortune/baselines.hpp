#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fortune/mat.hpp"
#include "fortune/trace.hpp"

namespace fortune {

// Streaming CUSUM change-point detector over one channel:
//   S_t = max(0, S_{t-1} + beta (x_t - (mu_b + mu_a)/2))
// flags when S_t > mu_a, then resets S. mu_b is the running mean of
// unflagged samples (initialized to x_0); mu_a is the configured
// post-change mean offset.
struct CpdConfig {
  std::size_t channel = 0;
  double mu_a = 100.0;
  double beta = 0.65;
  void validate() const;
};

struct CpdResult {
  std::vector<std::uint8_t> flags;    // per sample
  std::vector<double> statistic;      // S_t after processing sample t
  std::vector<std::size_t> change_points;
};

CpdResult cpd_detect(const TraceMatrix& trace, const CpdConfig& cfg);

// Classic dynamic-time-warping distance with squared-difference local cost
// and the usual {match, insert, delete} steps.
double dtw_distance(std::span<const double> a, std::span<const double> b);

// Signature matcher: slides the reference over the trace's signature
// channel; when a window comes within `arm_threshold` of the reference, the
// watcher arms and flags if any watched channel jumps by more than
// `jump_factor` times its recent level within the next `watch_window`
// samples (5 samples at 1 ms sampling by default).
struct DtwConfig {
  std::size_t signature_channel = 0;
  std::vector<double> reference;
  double arm_threshold = 0.0;
  std::vector<std::size_t> watch_channels;
  double jump_factor = 2.0;
  std::size_t watch_window = 5;
  void validate() const;
};

struct DtwDetectResult {
  std::vector<std::uint8_t> flags;  // per sample
  std::vector<std::size_t> armed_at;
};

DtwDetectResult dtw_detect(const TraceMatrix& trace, const DtwConfig& cfg);

// Per-channel independent Gaussian density fitted on attack traces; a
// sample is flagged when its density reaches epsilon.
struct PdfModel {
  std::vector<std::string> channel_names;
  Vec mean;
  Vec variance;  // sample variance (n-1)
};

PdfModel fit_pdf(const std::vector<TraceMatrix>& attack_traces);
double pdf_density(const PdfModel& model, const Vec& sample);

struct PdfDetectResult {
  std::vector<std::uint8_t> flags;
  std::vector<double> density;
};

PdfDetectResult pdf_detect(const TraceMatrix& trace, const PdfModel& model,
                           double epsilon);

}  // namespace fortune
