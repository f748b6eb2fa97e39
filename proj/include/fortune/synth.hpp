#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fortune/trace.hpp"

namespace fortune {

// Seed-deterministic workload generator: counter traces for benign phases
// of activity plus attack-shaped elevations, used to exercise the whole
// pipeline without touching real hardware counters.

enum class WorkloadKind { kStationaryNoise, kPeriodicBurst, kRamp, kComposite };
enum class AttackKind { kFlushStorm, kEvictStorm, kTransientBurst };

const char* to_string(WorkloadKind k);
const char* to_string(AttackKind k);

struct ChannelParams {
  double base_rate = 0.0;        // counts per sample period
  double burst_amplitude = 0.0;  // added on top of base during bursts / ramp peak
  std::size_t burst_period = 0;  // samples between burst starts; 0 = none
  double noise_scale = 0.0;      // stddev of additive Gaussian noise
};

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kStationaryNoise;
  std::vector<std::string> channel_names;
  std::vector<ChannelParams> channel_params;
  std::size_t duration = 0;  // samples
  std::uint64_t seed = 0;
  std::string name = "workload";
  // kComposite only: up to 5 non-composite layers sharing the channel set;
  // the result is their pointwise sum.
  std::vector<WorkloadSpec> components;

  void validate() const;
};

struct AttackSpec {
  AttackKind kind = AttackKind::kFlushStorm;
  double intensity = 2.0;  // >= 1, multiplier on the targeted channels
  std::size_t duration = 0;
  std::uint64_t seed = 0;
  // Channels to elevate; empty selects by kind (flush-storm prefers a *HIT*
  // channel, evict-storm an *LLC* channel, transient-burst hits them all).
  std::vector<std::string> targets;
  std::string name = "attack";

  void validate() const;
};

TraceMatrix synth_benign(const WorkloadSpec& spec);

// Attack trace = background workload with the targeted channels elevated.
// background.duration must equal atk.duration. Flush/evict storms multiply
// the target by `intensity` for the whole duration; a transient burst
// pulses at 50% duty (period 20 samples), so over the attack the mean of a
// targeted channel is at least intensity/2 times its background mean.
TraceMatrix synth_attack(const AttackSpec& atk, const WorkloadSpec& background);

std::vector<std::size_t> resolve_attack_targets(
    const AttackSpec& atk, const std::vector<std::string>& channel_names);

struct InjectResult {
  TraceMatrix trace;  // benign + attack over [begin, end), labeled attack
  std::size_t begin = 0, end = 0;
};

// Adds the attack trace onto the benign one starting at `offset`. Requires
// identical channel sets and offset + attack length <= benign length.
InjectResult inject(const TraceMatrix& benign, const TraceMatrix& attack,
                    std::size_t offset);

// Spec files (key=value, see config.hpp) describe one synthesis job:
//   type = benign | attack | injected
// workload.* keys build the WorkloadSpec and attack.* keys the AttackSpec
// plus the attacker's own footprint workload (attack.base / attack.noise);
// inject.offset places the attack inside the benign background.
struct SynthJob {
  WorkloadSpec workload;
  std::optional<AttackSpec> attack;
  WorkloadSpec attack_background;
  std::size_t inject_offset = 0;
  bool injected = false;
};

SynthJob parse_synth_spec(const std::filesystem::path& path);
TraceMatrix materialize(const SynthJob& job);

}  // namespace fortune
