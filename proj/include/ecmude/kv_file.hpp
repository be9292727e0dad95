// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ecmude {

/// Flat `key = value` text store used for parameter files, checkpoints
/// headers and run configs. Lines starting with '#' are comments. A line
/// `include = <path>` pulls in another file (path relative to the including
/// file); keys read later override earlier ones.
class KvFile {
 public:
  static KvFile read(const std::filesystem::path& path);
  static KvFile parse(const std::string& text, const std::filesystem::path& base_dir = {});

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value, int significant_digits);
  void set_int(const std::string& key, long long value);

  bool contains(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  /// Merge `other` on top of this (other wins).
  void overlay(const KvFile& other);

  /// Keys in insertion order, one `key = value` per line.
  std::string to_string() const;
  void write(const std::filesystem::path& path) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  void parse_into(const std::string& text, const std::filesystem::path& base_dir, int depth);

  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// printf-style `%.{digits}g` formatting.
std::string format_double(double value, int significant_digits);

/// Strict decimal parse; throws DataError on trailing garbage or empty input.
double parse_double(const std::string& text);

}  // namespace ecmude
