#include "fortune/config.hpp"

#include <charconv>
#include <cmath>

#include "fortune/errors.hpp"
#include "fsio.hpp"

namespace fortune {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

}  // namespace

bool KvFile::has(const std::string& key) const { return find(key) != nullptr; }

const std::string* KvFile::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

std::string KvFile::get_string(const std::string& key,
                               const std::string& def) const {
  const std::string* v = find(key);
  return v ? *v : def;
}

long long KvFile::get_int(const std::string& key, long long def) const {
  const std::string* v = find(key);
  return v ? parse_int_value(key, *v) : def;
}

double KvFile::get_double(const std::string& key, double def) const {
  const std::string* v = find(key);
  return v ? parse_double_value(key, *v) : def;
}

std::uint64_t KvFile::get_u64(const std::string& key, std::uint64_t def) const {
  const std::string* v = find(key);
  if (!v) return def;
  std::uint64_t out = 0;
  const char* b = v->data();
  const char* e = b + v->size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e)
    throw UsageError("value for '" + key + "' is not an unsigned integer: '" +
                     *v + "'");
  return out;
}

const std::string& KvFile::need(const std::string& key) const {
  const std::string* v = find(key);
  if (!v)
    throw DataError(origin_ + ": missing required key '" + key + "'");
  return *v;
}

void KvFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

KvFile KvFile::parse_text(const std::string& text, const std::string& origin) {
  KvFile out;
  out.origin_ = origin;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line =
        text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError(origin + ": line " + std::to_string(lineno) +
                      ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw DataError(origin + ": line " + std::to_string(lineno) +
                      ": empty key");
    if (out.has(key))
      throw DataError(origin + ": line " + std::to_string(lineno) +
                      ": duplicate key '" + key + "'");
    out.entries_.emplace_back(key, value);
  }
  return out;
}

KvFile KvFile::parse_file(const std::filesystem::path& path) {
  return parse_text(read_file(path), path.string());
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = csv.find(',', start);
    const std::string item =
        trim(csv.substr(start, pos == std::string::npos ? std::string::npos
                                                        : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

long long parse_int_value(const std::string& key, const std::string& value) {
  long long out = 0;
  const char* b = value.data();
  const char* e = b + value.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e || value.empty())
    throw UsageError("value for '" + key + "' is not an integer: '" + value +
                     "'");
  return out;
}

double parse_double_value(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* b = value.data();
  const char* e = b + value.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e || value.empty() || !std::isfinite(out))
    throw UsageError("value for '" + key + "' is not a finite number: '" +
                     value + "'");
  return out;
}

std::vector<double> parse_log_grid(const std::string& text) {
  const std::vector<std::string> parts = split_list(
      [&] {
        std::string s = text;
        for (char& c : s)
          if (c == ':') c = ',';
        return s;
      }());
  if (parts.size() != 3)
    throw UsageError("grid must look like lo:hi:n, got '" + text + "'");
  const double lo = parse_double_value("grid lo", parts[0]);
  const double hi = parse_double_value("grid hi", parts[1]);
  const long long n = parse_int_value("grid n", parts[2]);
  if (!(lo > 0.0)) throw UsageError("log grid lo must be positive");
  if (hi < lo) throw UsageError("grid hi must be >= lo");
  if (n < 1) throw UsageError("grid n must be >= 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  if (n == 1) {
    out.push_back(lo);
    return out;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  for (long long i = 0; i < n; ++i)
    out.push_back(std::exp(llo + (lhi - llo) * static_cast<double>(i) /
                                     static_cast<double>(n - 1)));
  return out;
}

std::vector<std::size_t> parse_step_grid(const std::string& text) {
  const std::vector<std::string> parts = split_list(
      [&] {
        std::string s = text;
        for (char& c : s)
          if (c == ':') c = ',';
        return s;
      }());
  if (parts.size() != 3)
    throw UsageError("grid must look like lo:hi:step, got '" + text + "'");
  const long long lo = parse_int_value("grid lo", parts[0]);
  const long long hi = parse_int_value("grid hi", parts[1]);
  const long long step = parse_int_value("grid step", parts[2]);
  if (lo < 1) throw UsageError("grid lo must be >= 1");
  if (hi < lo) throw UsageError("grid hi must be >= lo");
  if (step < 1) throw UsageError("grid step must be >= 1");
  std::vector<std::size_t> out;
  for (long long v = lo; v <= hi; v += step)
    out.push_back(static_cast<std::size_t>(v));
  return out;
}

}  // namespace fortune
