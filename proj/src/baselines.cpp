#include "fortune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fortune/errors.hpp"

namespace fortune {

void CpdConfig::validate() const {
  if (!(mu_a > 0.0) || !std::isfinite(mu_a))
    throw UsageError("cpd mu_a must be positive and finite");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw UsageError("cpd beta must be positive and finite");
}

CpdResult cpd_detect(const TraceMatrix& trace, const CpdConfig& cfg) {
  cfg.validate();
  trace.validate();
  if (cfg.channel >= trace.channels())
    throw DataError("cpd channel index out of range");

  const std::size_t n = trace.samples();
  CpdResult out;
  out.flags.assign(n, 0);
  out.statistic.resize(n);

  // mu_a is the expected post-change mean shift above the benign baseline,
  // so the post-change mean is mu_b + mu_a and the decision midpoint is
  // mu_b + mu_a/2. The baseline mu_b tracks the mean of unflagged samples.
  double s = 0.0;
  double mu_b = trace.values(cfg.channel, 0);
  double benign_sum = mu_b;
  std::size_t benign_n = 1;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = trace.values(cfg.channel, t);
    s = std::max(0.0, s + cfg.beta * (x - (mu_b + cfg.mu_a / 2.0)));
    out.statistic[t] = s;
    if (s > cfg.mu_a) {
      out.flags[t] = 1;
      out.change_points.push_back(t);
      s = 0.0;
    } else if (t > 0) {
      benign_sum += x;
      ++benign_n;
      mu_b = benign_sum / static_cast<double>(benign_n);
    }
  }
  return out;
}

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw DataError("dtw inputs must be non-empty");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double d = a[i - 1] - b[j - 1];
      cur[j] = d * d + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

void DtwConfig::validate() const {
  if (reference.empty()) throw DataError("dtw reference must be non-empty");
  if (!(arm_threshold >= 0.0) || !std::isfinite(arm_threshold))
    throw UsageError("dtw arm threshold must be non-negative and finite");
  if (!(jump_factor > 0.0) || !std::isfinite(jump_factor))
    throw UsageError("dtw jump factor must be positive and finite");
  if (watch_window == 0)
    throw UsageError("dtw watch window must be at least 1");
}

DtwDetectResult dtw_detect(const TraceMatrix& trace, const DtwConfig& cfg) {
  cfg.validate();
  trace.validate();
  if (cfg.signature_channel >= trace.channels())
    throw DataError("dtw signature channel index out of range");
  std::vector<std::size_t> watch = cfg.watch_channels;
  if (watch.empty()) {
    for (std::size_t c = 0; c < trace.channels(); ++c)
      if (c != cfg.signature_channel) watch.push_back(c);
  }
  for (const std::size_t c : watch)
    if (c >= trace.channels())
      throw DataError("dtw watch channel index out of range");

  const std::size_t T = trace.samples(), L = cfg.reference.size();
  DtwDetectResult out;
  out.flags.assign(T, 0);
  if (L > T) return out;

  std::vector<double> window(L);
  for (std::size_t s = 0; s + L <= T; ++s) {
    for (std::size_t i = 0; i < L; ++i)
      window[i] = trace.values(cfg.signature_channel, s + i);
    const double d = dtw_distance(window, cfg.reference);
    if (d > cfg.arm_threshold) continue;
    const std::size_t armed = s + L - 1;
    out.armed_at.push_back(armed);
    for (const std::size_t c : watch) {
      const double level = std::max(1.0, trace.values(c, armed));
      const std::size_t stop = std::min(T, armed + 1 + cfg.watch_window);
      for (std::size_t t = armed + 1; t < stop; ++t)
        if (trace.values(c, t) > cfg.jump_factor * level) out.flags[t] = 1;
    }
  }
  return out;
}

PdfModel fit_pdf(const std::vector<TraceMatrix>& attack_traces) {
  if (attack_traces.empty())
    throw DataError("cannot fit density on an empty trace set");
  const auto& names = attack_traces.front().channel_names;
  const std::size_t m = attack_traces.front().channels();
  std::size_t n = 0;
  for (const auto& t : attack_traces) {
    t.validate();
    if (t.channel_names != names)
      throw DataError("density input traces disagree on channels");
    n += t.samples();
  }
  if (n < 2) throw DataError("density fit needs at least 2 samples");

  PdfModel model;
  model.channel_names = names;
  model.mean.assign(m, 0.0);
  model.variance.assign(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    double sum = 0.0;
    for (const auto& t : attack_traces)
      for (std::size_t i = 0; i < t.samples(); ++i) sum += t.values(c, i);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& t : attack_traces)
      for (std::size_t i = 0; i < t.samples(); ++i) {
        const double d = t.values(c, i) - mean;
        ss += d * d;
      }
    const double var = ss / static_cast<double>(n - 1);
    if (!(var > 0.0))
      throw DataError("zero variance on channel '" + names[c] +
                      "'; density model is degenerate");
    model.mean[c] = mean;
    model.variance[c] = var;
  }
  return model;
}

double pdf_density(const PdfModel& model, const Vec& sample) {
  if (sample.size() != model.mean.size())
    throw DataError("sample size does not match density model");
  double density = 1.0;
  for (std::size_t c = 0; c < sample.size(); ++c) {
    const double v = model.variance[c];
    const double d = sample[c] - model.mean[c];
    density *= std::exp(-d * d / (2.0 * v)) / std::sqrt(2.0 * M_PI * v);
  }
  return density;
}

PdfDetectResult pdf_detect(const TraceMatrix& trace, const PdfModel& model,
                           double epsilon) {
  trace.validate();
  if (trace.channel_names != model.channel_names)
    throw DataError("trace channels do not match density model");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw UsageError("epsilon must be non-negative and finite");
  PdfDetectResult out;
  const std::size_t T = trace.samples();
  out.flags.assign(T, 0);
  out.density.resize(T);
  Vec sample(trace.channels());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < trace.channels(); ++c)
      sample[c] = trace.values(c, t);
    out.density[t] = pdf_density(model, sample);
    out.flags[t] = out.density[t] >= epsilon ? 1 : 0;
  }
  return out;
}

}  // namespace fortune
