#include "fortune/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "fortune/config.hpp"
#include "fortune/errors.hpp"
#include "fortune/rng.hpp"

namespace fortune {
namespace {

constexpr std::size_t kMaxComposite = 5;
constexpr std::size_t kPulsePeriod = 20;  // transient-burst: 10 on, 10 off

std::string upper(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void check_channels(const std::vector<std::string>& names,
                    const std::vector<ChannelParams>& params) {
  if (names.empty()) throw DataError("workload names no channels");
  if (params.size() != names.size())
    throw DataError("workload channel parameter count does not match channels");
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size())
    throw DataError("duplicate channel names in workload");
  for (const auto& p : params) {
    if (!(p.base_rate >= 0.0) || !(p.burst_amplitude >= 0.0) ||
        !(p.noise_scale >= 0.0))
      throw DataError("workload channel parameters must be non-negative");
  }
}

double waveform(const WorkloadSpec& spec, const ChannelParams& p,
                std::size_t t) {
  switch (spec.kind) {
    case WorkloadKind::kStationaryNoise:
      return p.base_rate;
    case WorkloadKind::kPeriodicBurst: {
      const std::size_t burst_len = std::max<std::size_t>(1, p.burst_period / 5);
      const bool in_burst =
          p.burst_period > 0 && (t % p.burst_period) < burst_len;
      return p.base_rate + (in_burst ? p.burst_amplitude : 0.0);
    }
    case WorkloadKind::kRamp: {
      if (spec.duration <= 1) return p.base_rate;
      const double frac = static_cast<double>(t) /
                          static_cast<double>(spec.duration - 1);
      return p.base_rate + p.burst_amplitude * frac;
    }
    default:
      return p.base_rate;
  }
}

ChannelParams channel_params_from_kv(const KvFile& kv, const std::string& prefix,
                                     std::size_t m, std::size_t c) {
  auto per_channel = [&](const std::string& key, double def) {
    const std::string* v = kv.find(prefix + key);
    if (!v) return def;
    const std::vector<std::string> items = split_list(*v);
    if (items.size() == 1) return parse_double_value(prefix + key, items[0]);
    if (items.size() != m)
      throw DataError(kv.origin() + ": '" + prefix + key + "' must list 1 or " +
                      std::to_string(m) + " values");
    return parse_double_value(prefix + key, items[c]);
  };
  ChannelParams p;
  p.base_rate = per_channel("base", 0.0);
  p.burst_amplitude = per_channel("amplitude", 0.0);
  p.noise_scale = per_channel("noise", 0.0);
  p.burst_period = static_cast<std::size_t>(
      std::llround(per_channel("period", 0.0)));
  return p;
}

WorkloadKind workload_kind_from_string(const std::string& s,
                                       const std::string& origin) {
  if (s == "stationary" || s == "stationary-noise") return WorkloadKind::kStationaryNoise;
  if (s == "periodic-burst" || s == "periodic") return WorkloadKind::kPeriodicBurst;
  if (s == "ramp") return WorkloadKind::kRamp;
  if (s == "composite") return WorkloadKind::kComposite;
  throw DataError(origin + ": unknown workload kind '" + s + "'");
}

AttackKind attack_kind_from_string(const std::string& s,
                                   const std::string& origin) {
  if (s == "flush-storm") return AttackKind::kFlushStorm;
  if (s == "evict-storm") return AttackKind::kEvictStorm;
  if (s == "transient-burst") return AttackKind::kTransientBurst;
  throw DataError(origin + ": unknown attack kind '" + s + "'");
}

WorkloadSpec workload_from_kv(const KvFile& kv, const std::string& prefix,
                              const std::vector<std::string>& channels,
                              std::size_t duration, std::uint64_t seed,
                              const std::string& name, bool allow_composite);

std::vector<WorkloadSpec> components_from_kv(const KvFile& kv,
                                             const std::string& prefix,
                                             const WorkloadSpec& parent) {
  std::vector<WorkloadSpec> out;
  for (std::size_t i = 1;; ++i) {
    const std::string cp = prefix + "component" + std::to_string(i) + ".";
    if (!kv.has(cp + "kind")) break;
    WorkloadSpec comp = workload_from_kv(
        kv, cp, parent.channel_names, parent.duration,
        Rng::derive(parent.seed, 100 + i),
        parent.name + "-layer" + std::to_string(i), false);
    out.push_back(std::move(comp));
  }
  return out;
}

WorkloadSpec workload_from_kv(const KvFile& kv, const std::string& prefix,
                              const std::vector<std::string>& channels,
                              std::size_t duration, std::uint64_t seed,
                              const std::string& name, bool allow_composite) {
  WorkloadSpec w;
  w.kind = workload_kind_from_string(
      kv.get_string(prefix + "kind", "stationary"), kv.origin());
  if (w.kind == WorkloadKind::kComposite && !allow_composite)
    throw DataError(kv.origin() + ": composite layers cannot nest");
  w.channel_names = channels;
  w.duration = duration;
  w.seed = seed;
  w.name = name;
  const std::size_t m = channels.size();
  w.channel_params.reserve(m);
  for (std::size_t c = 0; c < m; ++c)
    w.channel_params.push_back(channel_params_from_kv(kv, prefix, m, c));
  if (w.kind == WorkloadKind::kComposite)
    w.components = components_from_kv(kv, prefix, w);
  return w;
}

}  // namespace

const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::kStationaryNoise: return "stationary";
    case WorkloadKind::kPeriodicBurst: return "periodic-burst";
    case WorkloadKind::kRamp: return "ramp";
    default: return "composite";
  }
}

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kFlushStorm: return "flush-storm";
    case AttackKind::kEvictStorm: return "evict-storm";
    default: return "transient-burst";
  }
}

void WorkloadSpec::validate() const {
  check_channels(channel_names, channel_params);
  if (duration == 0) throw DataError("workload duration must be at least 1");
  if (kind == WorkloadKind::kPeriodicBurst) {
    bool any = false;
    for (const auto& p : channel_params) any = any || p.burst_period > 0;
    if (!any)
      throw DataError("periodic-burst workload needs burst_period >= 1 somewhere");
  }
  if (kind == WorkloadKind::kComposite) {
    if (components.empty() || components.size() > kMaxComposite)
      throw DataError("composite workload needs 1-" +
                      std::to_string(kMaxComposite) + " components");
    for (const auto& c : components) {
      if (c.kind == WorkloadKind::kComposite)
        throw DataError("composite components must not nest");
      if (c.channel_names != channel_names)
        throw DataError("composite components must share the channel set");
      if (c.duration != duration)
        throw DataError("composite components must share the duration");
      c.validate();
    }
  } else if (!components.empty()) {
    throw DataError("only composite workloads may list components");
  }
}

void AttackSpec::validate() const {
  if (!(intensity >= 1.0))
    throw DataError("attack intensity must be at least 1");
  if (duration == 0) throw DataError("attack duration must be at least 1");
}

TraceMatrix synth_benign(const WorkloadSpec& spec) {
  spec.validate();
  TraceMatrix t;
  t.channel_names = spec.channel_names;
  t.sample_period_ms = 1.0;
  t.label = Label::kBenign;
  t.source_id = spec.name;
  const std::size_t m = spec.channel_names.size();
  t.values = Mat(m, spec.duration);

  if (spec.kind == WorkloadKind::kComposite) {
    for (const auto& comp : spec.components) {
      const TraceMatrix layer = synth_benign(comp);
      for (std::size_t c = 0; c < m; ++c)
        for (std::size_t i = 0; i < spec.duration; ++i)
          t.values(c, i) += layer.values(c, i);
    }
    return t;
  }

  for (std::size_t c = 0; c < m; ++c) {
    Rng rng(Rng::derive(spec.seed, c));
    const ChannelParams& p = spec.channel_params[c];
    for (std::size_t i = 0; i < spec.duration; ++i) {
      double v = waveform(spec, p, i);
      if (p.noise_scale > 0.0) v += p.noise_scale * rng.normal();
      t.values(c, i) = static_cast<double>(std::max<long long>(0, std::llround(v)));
    }
  }
  return t;
}

std::vector<std::size_t> resolve_attack_targets(
    const AttackSpec& atk, const std::vector<std::string>& channel_names) {
  const std::size_t m = channel_names.size();
  if (!atk.targets.empty()) {
    std::vector<std::size_t> out;
    for (const auto& name : atk.targets) {
      const auto it =
          std::find(channel_names.begin(), channel_names.end(), name);
      if (it == channel_names.end())
        throw DataError("unknown attack target channel '" + name + "'");
      out.push_back(static_cast<std::size_t>(it - channel_names.begin()));
    }
    return out;
  }
  auto first_containing = [&](const char* needle) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < m; ++c)
      if (upper(channel_names[c]).find(needle) != std::string::npos) return c;
    return std::nullopt;
  };
  switch (atk.kind) {
    case AttackKind::kFlushStorm:
      if (auto c = first_containing("HIT")) return {*c};
      return {std::min<std::size_t>(1, m - 1)};
    case AttackKind::kEvictStorm:
      if (auto c = first_containing("LLC")) return {*c};
      return {m - 1};
    default: {
      std::vector<std::size_t> all(m);
      for (std::size_t c = 0; c < m; ++c) all[c] = c;
      return all;
    }
  }
}

TraceMatrix synth_attack(const AttackSpec& atk, const WorkloadSpec& background) {
  atk.validate();
  if (background.duration != atk.duration)
    throw DataError("attack and background durations differ");
  TraceMatrix t = synth_benign(background);
  const std::vector<std::size_t> targets =
      resolve_attack_targets(atk, t.channel_names);
  for (const std::size_t c : targets) {
    for (std::size_t i = 0; i < t.samples(); ++i) {
      const bool on = atk.kind != AttackKind::kTransientBurst ||
                      (i % kPulsePeriod) < kPulsePeriod / 2;
      if (on)
        t.values(c, i) =
            static_cast<double>(std::llround(t.values(c, i) * atk.intensity));
    }
  }
  t.label = Label::kAttack;
  t.source_id = atk.name;
  return t;
}

InjectResult inject(const TraceMatrix& benign, const TraceMatrix& attack,
                    std::size_t offset) {
  benign.validate();
  attack.validate();
  if (benign.channel_names != attack.channel_names)
    throw DataError("channel mismatch between benign trace and attack trace");
  if (offset > benign.samples() ||
      attack.samples() > benign.samples() - offset)
    throw DataError("attack segment does not fit: offset " +
                    std::to_string(offset) + " + length " +
                    std::to_string(attack.samples()) + " exceeds trace length " +
                    std::to_string(benign.samples()));
  InjectResult r;
  r.trace = benign;
  r.begin = offset;
  r.end = offset + attack.samples();
  for (std::size_t c = 0; c < benign.channels(); ++c)
    for (std::size_t i = 0; i < attack.samples(); ++i)
      r.trace.values(c, offset + i) += attack.values(c, i);
  r.trace.label = Label::kAttack;
  r.trace.source_id = benign.source_id + "+" + attack.source_id;
  return r;
}

SynthJob parse_synth_spec(const std::filesystem::path& path) {
  const KvFile kv = KvFile::parse_file(path);
  const std::string type = kv.get_string("type", "benign");
  if (type != "benign" && type != "attack" && type != "injected")
    throw DataError(kv.origin() + ": type must be benign, attack or injected");

  const std::vector<std::string> channels =
      split_list(kv.need("workload.channels"));
  if (channels.empty())
    throw DataError(kv.origin() + ": workload.channels names no channels");
  const long long duration = kv.get_int("workload.duration", 0);
  if (duration < 1)
    throw DataError(kv.origin() + ": workload.duration must be at least 1");
  const std::uint64_t seed = kv.get_u64("seed", 0);

  SynthJob job;
  job.workload = workload_from_kv(
      kv, "workload.", channels, static_cast<std::size_t>(duration), seed,
      kv.get_string("workload.name", path.stem().string()), true);
  job.workload.validate();

  if (type == "benign") {
    for (const auto& [k, v] : kv.entries())
      if (k.rfind("attack.", 0) == 0 || k.rfind("inject.", 0) == 0)
        throw DataError(kv.origin() + ": key '" + k +
                        "' is not valid in a benign spec");
    return job;
  }

  AttackSpec atk;
  atk.kind = attack_kind_from_string(kv.need("attack.kind"), kv.origin());
  atk.intensity = kv.get_double("attack.intensity", 2.0);
  const long long adur = kv.get_int("attack.duration", duration);
  if (adur < 1)
    throw DataError(kv.origin() + ": attack.duration must be at least 1");
  atk.duration = static_cast<std::size_t>(adur);
  atk.seed = Rng::derive(seed, 0xA77AC0DEULL);
  if (kv.has("attack.targets")) atk.targets = split_list(kv.need("attack.targets"));
  atk.name = kv.get_string("attack.name", "attack");
  atk.validate();

  // Attacker footprint: stationary load described by attack.base/attack.noise.
  WorkloadSpec bg;
  bg.kind = WorkloadKind::kStationaryNoise;
  bg.channel_names = channels;
  bg.duration = atk.duration;
  bg.seed = atk.seed;
  bg.name = atk.name + "-footprint";
  for (std::size_t c = 0; c < channels.size(); ++c)
    bg.channel_params.push_back(
        channel_params_from_kv(kv, "attack.", channels.size(), c));
  bg.validate();

  job.attack = atk;
  job.attack_background = bg;

  if (type == "injected") {
    job.injected = true;
    const long long off = kv.get_int("inject.offset", 0);
    if (off < 0) throw DataError(kv.origin() + ": inject.offset must be >= 0");
    job.inject_offset = static_cast<std::size_t>(off);
    if (job.inject_offset + atk.duration >
        static_cast<std::size_t>(duration))
      throw DataError(kv.origin() + ": injected attack does not fit workload");
  } else if (atk.duration != static_cast<std::size_t>(duration)) {
    throw DataError(kv.origin() +
                    ": standalone attack duration must match workload.duration");
  }
  return job;
}

TraceMatrix materialize(const SynthJob& job) {
  if (!job.attack) return synth_benign(job.workload);
  const TraceMatrix attack = synth_attack(*job.attack, job.attack_background);
  if (!job.injected) return attack;
  const TraceMatrix benign = synth_benign(job.workload);
  return inject(benign, attack, job.inject_offset).trace;
}

}  // namespace fortune
