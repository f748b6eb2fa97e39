#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fortune {

// Line-oriented key=value files used for configs and synthesis specs.
// '#' starts a comment, blank lines are skipped, keys may not repeat.
// Parse problems are DataErrors naming the line; typed getters raise
// UsageError naming the key when a value does not parse or is out of range.
class KvFile {
 public:
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }
  bool has(const std::string& key) const;
  const std::string* find(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& def) const;
  long long get_int(const std::string& key, long long def) const;
  double get_double(const std::string& key, double def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;

  // For required keys.
  const std::string& need(const std::string& key) const;

  void set(const std::string& key, const std::string& value);  // upsert
  std::string origin() const { return origin_; }

  static KvFile parse_text(const std::string& text, const std::string& origin);
  static KvFile parse_file(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_;
};

std::vector<std::string> split_list(const std::string& csv);

// "lo:hi:n" -> n thresholds spaced logarithmically from lo to hi inclusive
// (lo > 0, hi >= lo, n >= 1; n == 1 yields {lo}).
std::vector<double> parse_log_grid(const std::string& text);
// "lo:hi:step" -> {lo, lo+step, ...} up to hi inclusive.
std::vector<std::size_t> parse_step_grid(const std::string& text);

long long parse_int_value(const std::string& key, const std::string& value);
double parse_double_value(const std::string& key, const std::string& value);

}  // namespace fortune
