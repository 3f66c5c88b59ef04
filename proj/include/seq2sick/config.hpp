#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace seq2sick {

/// `key=value` settings, one per line; `#` starts a comment. Later values
/// override earlier ones, so layering file then command-line flags gives the
/// usual precedence.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma- or whitespace-separated list; empty when absent.
  std::vector<std::string> get_list(const std::string& key) const;
  /// Throws ConfigError when `key` is absent.
  std::string require(const std::string& key) const;

  /// Throws ConfigError listing every key not in `allowed`.
  void reject_unknown(const std::vector<std::string>& allowed) const;

  /// Sorted `key=value` lines.
  std::string dump() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace seq2sick
