#pragma once

// Key-value configuration files.  Grammar:
//   key = value            (top-level)
//   [section]              (subsequent keys become section.key)
//   # comment              (also allowed after a value)
// Keys are case-sensitive; later assignments override earlier ones.  The
// canonical text (sorted "key = value" lines) feeds a stable 64-bit hash so
// every result row can name the exact configuration that produced it.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bcd {

class ConfigMap {
 public:
  ConfigMap() = default;

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) > 0; }

  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
  // Comma- or whitespace-separated lists.
  [[nodiscard]] std::vector<double> get_double_list(const std::string& key) const;
  [[nodiscard]] std::vector<std::int64_t> get_int_list(const std::string& key) const;

  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return entries_; }

  // Sorted "key = value" lines; two configs hash equal iff these coincide.
  [[nodiscard]] std::string canonical_text() const;
  [[nodiscard]] std::uint64_t hash() const;
  [[nodiscard]] std::string hash_hex() const;

 private:
  std::map<std::string, std::string> entries_;
};

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

// FNV-1a over an arbitrary byte string (exposed for tests).
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace bcd
