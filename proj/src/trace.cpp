#include "fortune/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fortune/errors.hpp"
#include "fsio.hpp"

namespace fortune {
namespace {

constexpr const char* kMagic = "# fortune-trace v1";

[[noreturn]] void fail(const std::filesystem::path& p, std::size_t line,
                       const std::string& what) {
  throw DataError(p.string() + ": line " + std::to_string(line) + ": " + what);
}

bool parse_ll(const std::string& tok, long long& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && !tok.empty();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

Label parse_label(const std::string& s, const std::filesystem::path& p) {
  if (s == "benign") return Label::kBenign;
  if (s == "attack") return Label::kAttack;
  if (s == "unknown") return Label::kUnknown;
  fail(p, 1, "unknown label '" + s + "'");
}

}  // namespace

const char* to_string(Label l) {
  switch (l) {
    case Label::kBenign: return "benign";
    case Label::kAttack: return "attack";
    default: return "unknown";
  }
}

Vec TraceMatrix::sample(std::size_t t) const {
  Vec v(channels());
  for (std::size_t c = 0; c < channels(); ++c) v[c] = values(c, t);
  return v;
}

void TraceMatrix::validate() const {
  if (channels() == 0) throw DataError("trace has no channels");
  if (samples() == 0) throw DataError("trace has no samples");
  if (channel_names.size() != channels())
    throw DataError("channel name count does not match channel count");
  std::set<std::string> seen(channel_names.begin(), channel_names.end());
  if (seen.size() != channel_names.size())
    throw DataError("duplicate channel names");
  if (!(sample_period_ms > 0.0))
    throw DataError("sample period must be positive");
  for (std::size_t c = 0; c < channels(); ++c)
    for (std::size_t t = 0; t < samples(); ++t) {
      const double v = values(c, t);
      if (!std::isfinite(v)) throw DataError("non-finite counter value");
      if (v < 0.0) throw DataError("negative counter value");
    }
}

Scaler fit_scaler(const std::vector<TraceMatrix>& traces) {
  if (traces.empty()) throw DataError("cannot fit scaler on an empty trace set");
  const auto& names = traces.front().channel_names;
  const std::size_t m = traces.front().channels();
  Scaler s;
  s.min.assign(m, std::numeric_limits<double>::infinity());
  s.max.assign(m, -std::numeric_limits<double>::infinity());
  for (const auto& t : traces) {
    if (t.channel_names != names)
      throw DataError("scaler input traces disagree on channels");
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t i = 0; i < t.samples(); ++i) {
        const double v = t.values(c, i);
        s.min[c] = std::min(s.min[c], v);
        s.max[c] = std::max(s.max[c], v);
      }
  }
  for (std::size_t c = 0; c < m; ++c)
    if (s.max[c] == s.min[c]) s.max[c] = s.min[c] + 1.0;
  return s;
}

TraceMatrix apply_scaler(const TraceMatrix& t, const Scaler& s) {
  if (t.channels() != s.channels())
    throw DataError("channel-count mismatch between trace and scaler");
  TraceMatrix out = t;
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const double lo = s.min[c], span = s.max[c] - s.min[c];
    for (std::size_t i = 0; i < t.samples(); ++i)
      out.values(c, i) = (t.values(c, i) - lo) / span;
  }
  return out;
}

TraceMatrix invert_scaler(const TraceMatrix& t, const Scaler& s) {
  if (t.channels() != s.channels())
    throw DataError("channel-count mismatch between trace and scaler");
  TraceMatrix out = t;
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const double lo = s.min[c], span = s.max[c] - s.min[c];
    for (std::size_t i = 0; i < t.samples(); ++i)
      out.values(c, i) = t.values(c, i) * span + lo;
  }
  return out;
}

void unscale_sample(const double* scaled, const Scaler& s, double* raw) {
  for (std::size_t c = 0; c < s.channels(); ++c)
    raw[c] = scaled[c] * (s.max[c] - s.min[c]) + s.min[c];
}

WindowBatch::WindowBatch(const TraceMatrix& scaled, std::size_t window) {
  if (window == 0) throw DataError("window length must be at least 1");
  if (scaled.samples() < window + 1)
    throw DataError("insufficient trace length: need at least W+1 = " +
                    std::to_string(window + 1) + " samples, trace has " +
                    std::to_string(scaled.samples()));
  window_ = window;
  channels_ = scaled.channels();
  count_ = scaled.samples() - window;
  time_major_.resize(scaled.samples() * channels_);
  for (std::size_t t = 0; t < scaled.samples(); ++t)
    for (std::size_t c = 0; c < channels_; ++c)
      time_major_[t * channels_ + c] = scaled.values(c, t);
}

std::span<const double> WindowBatch::input(std::size_t i) const {
  return {time_major_.data() + i * channels_, window_ * channels_};
}

std::span<const double> WindowBatch::target(std::size_t i) const {
  return {time_major_.data() + (i + window_) * channels_, channels_};
}

TraceMatrix load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace file " + path.string());
  std::string line;

  if (!std::getline(in, line)) fail(path, 1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::istringstream meta(line);
  std::string hash, name, ver;
  meta >> hash >> name >> ver;
  if (hash != "#" || name != "fortune-trace" || ver != "v1")
    fail(path, 1, "not a fortune-trace v1 file");
  TraceMatrix t;
  long long period = 1;
  std::string kv;
  while (meta >> kv) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) fail(path, 1, "malformed metadata '" + kv + "'");
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "label") {
      t.label = parse_label(val, path);
    } else if (key == "period_ms") {
      if (!parse_ll(val, period) || period <= 0)
        fail(path, 1, "period_ms must be a positive integer");
    } else {
      fail(path, 1, "unknown metadata key '" + key + "'");
    }
  }
  t.sample_period_ms = static_cast<double>(period);

  if (!std::getline(in, line)) fail(path, 2, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split(line, ',');
  if (header.empty() || header[0] != "t")
    fail(path, 2, "header row must start with 't'");
  if (header.size() < 2) fail(path, 2, "header row names no channels");
  t.channel_names.assign(header.begin() + 1, header.end());
  const std::size_t m = t.channel_names.size();
  {
    std::set<std::string> seen(t.channel_names.begin(), t.channel_names.end());
    if (seen.size() != m) fail(path, 2, "duplicate channel names");
    for (const auto& n : t.channel_names)
      if (n.empty()) fail(path, 2, "empty channel name");
  }

  std::vector<long long> data;
  std::size_t rows = 0, lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != m + 1)
      fail(path, lineno, "expected " + std::to_string(m + 1) + " fields, got " +
                             std::to_string(cells.size()));
    long long v;
    if (!parse_ll(cells[0], v))
      fail(path, lineno, "non-numeric value '" + cells[0] + "'");
    if (v != static_cast<long long>(rows))
      fail(path, lineno, "time index " + std::to_string(v) + ", expected " +
                             std::to_string(rows));
    for (std::size_t c = 0; c < m; ++c) {
      if (!parse_ll(cells[c + 1], v))
        fail(path, lineno, "non-numeric value '" + cells[c + 1] + "'");
      if (v < 0) fail(path, lineno, "negative count " + std::to_string(v));
      data.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) fail(path, lineno + 1, "no data rows");

  t.values = Mat(m, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < m; ++c)
      t.values(c, r) = static_cast<double>(data[r * m + c]);
  t.source_id = path.stem().string();
  t.validate();
  return t;
}

void save_trace(const TraceMatrix& t, const std::filesystem::path& path) {
  t.validate();
  std::string out;
  out.reserve(t.samples() * (t.channels() + 1) * 8 + 64);
  out += kMagic;
  out += " label=";
  out += to_string(t.label);
  out += " period_ms=";
  out += std::to_string(static_cast<long long>(std::llround(t.sample_period_ms)));
  out += '\n';
  out += 't';
  for (const auto& n : t.channel_names) {
    out += ',';
    out += n;
  }
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < t.samples(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu", i);
    out += buf;
    for (std::size_t c = 0; c < t.channels(); ++c) {
      std::snprintf(buf, sizeof buf, ",%lld",
                    static_cast<long long>(std::llround(t.values(c, i))));
      out += buf;
    }
    out += '\n';
  }
  atomic_write_file(path, out);
}

TraceMatrix trim_idle(const TraceMatrix& t, double fraction) {
  t.validate();
  if (!(fraction >= 0.0) || !(fraction <= 1.0))
    throw DataError("idle fraction must lie in [0,1]");
  const std::size_t m = t.channels(), n = t.samples();
  Vec cutoff(m);
  for (std::size_t c = 0; c < m; ++c) {
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, t.values(c, i));
    cutoff[c] = fraction * mx;
  }
  auto active = [&](std::size_t i) {
    for (std::size_t c = 0; c < m; ++c)
      if (t.values(c, i) >= cutoff[c] && t.values(c, i) > 0.0) return true;
    return false;
  };
  std::size_t first = 0;
  while (first < n && !active(first)) ++first;
  if (first == n) throw DataError("trace is entirely idle");
  std::size_t last = n - 1;
  while (last > first && !active(last)) --last;

  TraceMatrix out = t;
  out.values = Mat(m, last - first + 1);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t i = first; i <= last; ++i)
      out.values(c, i - first) = t.values(c, i);
  return out;
}

TraceMatrix select_channels(const TraceMatrix& t,
                            const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw DataError("channel selection must keep a channel");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= t.channels())
      throw DataError("channel index " + std::to_string(idx[i]) +
                      " out of range for " + std::to_string(t.channels()) +
                      " channels");
    for (std::size_t j = 0; j < i; ++j)
      if (idx[j] == idx[i])
        throw DataError("channel selection repeats index " +
                        std::to_string(idx[i]));
  }
  TraceMatrix out;
  out.sample_period_ms = t.sample_period_ms;
  out.label = t.label;
  out.source_id = t.source_id;
  out.values = Mat(idx.size(), t.samples());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.channel_names.push_back(t.channel_names[idx[r]]);
    for (std::size_t c = 0; c < t.samples(); ++c)
      out.values(r, c) = t.values(idx[r], c);
  }
  return out;
}

}  // namespace fortune
