#include "fortune/counter_select.hpp"

#include <algorithm>

#include "fortune/detector.hpp"
#include "fortune/errors.hpp"
#include "fortune/eval.hpp"
#include "fortune/rng.hpp"
#include "fortune/rnn.hpp"

namespace fortune {

namespace {

void check_registry(const std::vector<TraceMatrix>& traces,
                    const std::vector<std::string>& names) {
  for (const auto& t : traces) {
    if (t.channel_names != names)
      throw DataError("channel registry mismatch across traces (trace " +
                      t.source_id + ")");
  }
}

}  // namespace

std::vector<ChannelScore> evaluate_channels(
    const std::vector<TraceMatrix>& benign,
    const std::vector<TraceMatrix>& attacks, const SelectConfig& cfg) {
  if (cfg.subset_size < 1 || cfg.subset_size > 4)
    throw UsageError("subset size must be between 1 and 4");
  if (cfg.decision == 0) throw UsageError("decision window must be at least 1");
  if (benign.empty()) throw DataError("benign set empty");
  if (attacks.empty()) throw DataError("attack set empty");

  const std::vector<std::string>& names = benign.front().channel_names;
  check_registry(benign, names);
  check_registry(attacks, names);
  const std::size_t m = names.size();

  std::vector<ChannelScore> out;
  for (std::size_t lo = 0, subset = 0; lo < m; lo += cfg.subset_size, ++subset) {
    const std::size_t hi = std::min(lo + cfg.subset_size, m);
    std::vector<std::size_t> idx;
    for (std::size_t c = lo; c < hi; ++c) idx.push_back(c);

    std::vector<TraceMatrix> btrain;
    btrain.reserve(benign.size());
    for (const auto& t : benign) btrain.push_back(select_channels(t, idx));
    const Scaler scaler = fit_scaler(btrain);
    std::vector<TraceMatrix> bscaled;
    bscaled.reserve(btrain.size());
    for (const auto& t : btrain) bscaled.push_back(apply_scaler(t, scaler));

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.seed = Rng::derive(cfg.seed, 1000 + subset);
    const TrainResult trained = train_predictor(
        CellKind::kLstm, bscaled, scaler, cfg.window, cfg.hidden, tc);

    // Per-trace score on one channel: the largest tau a D-long run of that
    // channel's squared error would still clear.
    auto channel_scores = [&](const std::vector<TraceMatrix>& traces) {
      std::vector<std::vector<double>> per_channel(idx.size());
      for (const auto& t : traces) {
        const Mat errs = channel_sq_error_stream(trained.model, select_channels(t, idx));
        for (std::size_t c = 0; c < idx.size(); ++c) {
          Vec col(errs.rows());
          for (std::size_t r = 0; r < errs.rows(); ++r) col[r] = errs(r, c);
          per_channel[c].push_back(flag_score(col, cfg.decision));
        }
      }
      return per_channel;
    };
    const auto bscores = channel_scores(benign);
    const auto ascores = channel_scores(attacks);

    for (std::size_t c = 0; c < idx.size(); ++c) {
      const ThresholdChoice choice =
          best_threshold_fscore(bscores[c], ascores[c]);
      ChannelScore cs;
      cs.channel = names[idx[c]];
      cs.fscore = choice.fscore;
      cs.threshold = choice.threshold;
      cs.decision = cfg.decision;
      cs.subset_index = subset;
      cs.window = cfg.window;
      cs.hidden = cfg.hidden;
      out.push_back(cs);
    }
  }

  std::sort(out.begin(), out.end(), [](const ChannelScore& a,
                                       const ChannelScore& b) {
    if (a.fscore != b.fscore) return a.fscore > b.fscore;
    return a.channel < b.channel;
  });
  return out;
}

std::vector<std::string> select_top(const std::vector<ChannelScore>& scores,
                                    std::size_t k) {
  if (k > scores.size())
    throw DataError("cannot select " + std::to_string(k) + " of " +
                    std::to_string(scores.size()) + " channels");
  // Rank here as well so the result does not depend on input order.
  std::vector<ChannelScore> ranked = scores;
  std::sort(ranked.begin(), ranked.end(), [](const ChannelScore& a,
                                             const ChannelScore& b) {
    if (a.fscore != b.fscore) return a.fscore > b.fscore;
    return a.channel < b.channel;
  });
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].channel);
  return out;
}

}  // namespace fortune
