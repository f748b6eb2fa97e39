#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fortune/trace.hpp"

namespace fortune {

// Ranking of one counter channel by the best F it achieves with a
// single-channel error threshold on top of its subset's predictor.
struct ChannelScore {
  std::string channel;
  double fscore = 0.0;
  // Operating point and model metadata behind the score.
  double threshold = 0.0;
  std::size_t decision = 1;
  std::size_t subset_index = 0;
  std::size_t window = 0;
  std::size_t hidden = 0;
};

struct SelectConfig {
  std::size_t subset_size = 3;  // counters trained together, in [1, 4]
  std::size_t window = 100;
  std::size_t hidden = 32;
  std::size_t epochs = 4;
  std::size_t decision = 10;
  std::uint64_t seed = 1;
};

// Partitions the channel registry into subsets of at most subset_size (in
// registry order), trains one LSTM per subset on the benign projections,
// and scores every channel by the best per-trace F a threshold on that
// channel's squared prediction error can reach over benign vs attack.
// Result is sorted by F descending, ties by channel name ascending.
std::vector<ChannelScore> evaluate_channels(
    const std::vector<TraceMatrix>& benign,
    const std::vector<TraceMatrix>& attacks, const SelectConfig& cfg);

// Top-k channel names from a ranking, rank order preserved. k may be 0;
// k > |scores| is an error. select_top(k) is always a prefix of
// select_top(k+1), so the chosen sets are nested.
std::vector<std::string> select_top(const std::vector<ChannelScore>& scores,
                                    std::size_t k);

}  // namespace fortune
