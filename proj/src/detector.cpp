#include "fortune/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fortune/errors.hpp"
#include "fortune/kernels.hpp"

namespace fortune {

void DetectorConfig::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau))
    throw UsageError("tau must be a non-negative finite number");
  if (decision == 0) throw UsageError("decision window must be at least 1");
}

double prediction_error(std::span<const double> pred,
                        std::span<const double> obs) {
  if (pred.size() != obs.size() || pred.empty())
    throw DataError("prediction and observation sizes differ");
  return kernels::sum_sq_diff(pred.data(), obs.data(), pred.size()) /
         static_cast<double>(pred.size());
}

ErrorStream error_stream(const PredictorModel& model, const TraceMatrix& raw) {
  const Mat preds = predict_stream(model, raw);
  const std::size_t m = model.input, n = preds.rows(), w = model.window;
  ErrorStream out;
  out.errors.resize(n);
  out.window = w;
  out.sample_period_ms = raw.sample_period_ms;
  out.label = raw.label;
  out.source_id = raw.source_id;
  Vec obs(m);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t c = 0; c < m; ++c) obs[c] = raw.values(c, w + k);
    out.errors[k] =
        kernels::sum_sq_diff(preds.row(k), obs.data(), m) / double(m);
  }
  return out;
}

Mat channel_sq_error_stream(const PredictorModel& model,
                            const TraceMatrix& raw) {
  const Mat preds = predict_stream(model, raw);
  const std::size_t m = model.input, n = preds.rows(), w = model.window;
  Mat out(n, m);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < m; ++c) {
      const double d = preds(k, c) - raw.values(c, w + k);
      out(k, c) = d * d;
    }
  return out;
}

FlagResult flag_stream(const ErrorStream& stream, const DetectorConfig& cfg) {
  cfg.validate();
  FlagResult out;
  const std::size_t n = stream.errors.size();
  if (cfg.decision > n) {
    out.window_exceeds_stream = true;
    return out;
  }
  out.flags.assign(n, 0);
  std::size_t run = 0;
  for (std::size_t t = 0; t < n; ++t) {
    run = stream.errors[t] >= cfg.tau ? run + 1 : 0;
    out.flags[t] = run >= cfg.decision ? 1 : 0;
  }
  for (std::size_t t = 0; t < n;) {
    if (!out.flags[t]) {
      ++t;
      continue;
    }
    std::size_t e = t;
    while (e < n && out.flags[e]) ++e;
    out.alarms.push_back({t, e});
    t = e;
  }
  return out;
}

std::optional<std::size_t> first_alarm(const FlagResult& flags) {
  if (flags.alarms.empty()) return std::nullopt;
  return flags.alarms.front().begin;
}

double alarm_latency_ms(std::size_t index, double sample_period_ms) {
  return static_cast<double>(index) * sample_period_ms;
}

// Per-trace score at fixed D: max over t of min(errors[t-D+1..t]), i.e. the
// largest tau that would still flag the trace. -inf when the stream is
// shorter than D. Computed with a monotonic deque in O(n).
double flag_score(const Vec& errors, std::size_t d) {
  const std::size_t n = errors.size();
  if (d > n) return -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> dq(n);
  std::size_t head = 0, tail = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    while (tail > head && errors[dq[tail - 1]] >= errors[t]) --tail;
    dq[tail++] = t;
    if (dq[head] + d <= t) ++head;
    if (t + 1 >= d) best = std::max(best, errors[dq[head]]);
  }
  return best;
}

SweepResult sweep(const std::vector<ErrorStream>& benign,
                  const std::vector<ErrorStream>& attack,
                  const std::vector<double>& tau_grid,
                  const std::vector<std::size_t>& d_grid) {
  if (benign.empty() || attack.empty())
    throw DataError("sweep needs at least one benign and one attack stream");
  if (tau_grid.empty() || d_grid.empty())
    throw UsageError("sweep grids must be non-empty");
  for (std::size_t i = 1; i < tau_grid.size(); ++i)
    if (!(tau_grid[i] > tau_grid[i - 1]))
      throw UsageError("tau grid must be strictly increasing");
  for (std::size_t i = 1; i < d_grid.size(); ++i)
    if (!(d_grid[i] > d_grid[i - 1]))
      throw UsageError("decision grid must be strictly increasing");
  for (const auto& d : d_grid)
    if (d == 0) throw UsageError("decision window must be at least 1");
  for (const auto& t : tau_grid)
    if (!(t >= 0.0) || !std::isfinite(t))
      throw UsageError("tau grid values must be non-negative and finite");

  // A stream is flagged at (tau, D) iff its windowed-min score at D reaches
  // tau, so the per-stream scores depend only on D; compute them once.
  SweepResult out;
  const std::size_t nb = benign.size(), na = attack.size();
  std::vector<std::vector<double>> bscore(d_grid.size(), std::vector<double>(nb));
  std::vector<std::vector<double>> ascore(d_grid.size(), std::vector<double>(na));
  for (std::size_t di = 0; di < d_grid.size(); ++di) {
    for (std::size_t i = 0; i < nb; ++i)
      bscore[di][i] = flag_score(benign[i].errors, d_grid[di]);
    for (std::size_t i = 0; i < na; ++i)
      ascore[di][i] = flag_score(attack[i].errors, d_grid[di]);
  }
  bool have_point = false;

  for (const double tau : tau_grid) {
    for (std::size_t di = 0; di < d_grid.size(); ++di) {
      const std::size_t d = d_grid[di];
      SweepCell cell;
      cell.tau = tau;
      cell.decision = d;
      std::size_t fp = 0, fn = 0;
      for (std::size_t i = 0; i < nb; ++i)
        if (bscore[di][i] >= tau) ++fp;
      for (std::size_t i = 0; i < na; ++i)
        if (!(ascore[di][i] >= tau)) ++fn;
      const std::size_t tp = na - fn;
      cell.fpr = double(fp) / double(nb);
      cell.fnr = double(fn) / double(na);
      cell.tpr = double(tp) / double(na);
      const double denom = 2.0 * double(tp) + double(fp) + double(fn);
      cell.fscore = denom > 0.0 ? 2.0 * double(tp) / denom : 0.0;
      out.grid.push_back(cell);

      const double gap = std::abs(cell.fpr - cell.fnr);
      const double cur_gap = std::abs(out.chosen.fpr - out.chosen.fnr);
      bool better = false;
      if (!have_point) {
        better = true;
      } else if (gap != cur_gap) {
        better = gap < cur_gap;
      } else if (cell.fpr != out.chosen.fpr) {
        better = cell.fpr < out.chosen.fpr;
      } else if (d != out.chosen.decision) {
        better = d < out.chosen.decision;
      } else {
        better = tau < out.chosen.tau;
      }
      if (better) {
        out.chosen = {tau, d, cell.fpr, cell.fnr, cell.fscore};
        have_point = true;
      }
    }
  }

  DetectorConfig cfg{out.chosen.tau, out.chosen.decision};
  for (const auto& s : attack) {
    const FlagResult fr = flag_stream(s, cfg);
    const auto idx = first_alarm(fr);
    if (idx)
      out.attack_latency_ms.emplace_back(
          alarm_latency_ms(*idx, s.sample_period_ms));
    else
      out.attack_latency_ms.emplace_back(std::nullopt);
  }
  return out;
}

}  // namespace fortune
