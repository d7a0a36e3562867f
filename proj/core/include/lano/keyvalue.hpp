#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lano {

/// Ordered `key=value` text document used for manifests, configs and
/// config echoes. Lines starting with '#' and blank lines are ignored.
class KeyValue {
 public:
  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  void merge(const KeyValue& other);

  std::string to_text() const;
  static KeyValue parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static KeyValue load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Exact decimal rendering of a double (round-trips through strtod).
std::string format_double(double v);

/// 64-bit FNV-1a hash of a string, rendered as 16 hex digits.
std::string fingerprint(const std::string& text);

}  // namespace lano
