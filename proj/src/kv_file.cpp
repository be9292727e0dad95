// SPDX-License-Identifier: Apache-2.0
#include "ecmude/kv_file.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ecmude/errors.hpp"

namespace ecmude {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

constexpr int kMaxIncludeDepth = 8;

}  // namespace

std::string format_double(double value, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant_digits, value);
  return buf;
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw DataError("empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw DataError("non-numeric value '" + t + "'");
  }
  return v;
}

KvFile KvFile::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  KvFile kv;
  kv.parse_into(ss.str(), path.parent_path(), 0);
  return kv;
}

KvFile KvFile::parse(const std::string& text, const std::filesystem::path& base_dir) {
  KvFile kv;
  kv.parse_into(text, base_dir, 0);
  return kv;
}

void KvFile::parse_into(const std::string& text, const std::filesystem::path& base_dir, int depth) {
  if (depth > kMaxIncludeDepth) throw ConfigError("include nesting too deep");
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (key == "include") {
      std::filesystem::path p(value);
      if (p.is_relative()) p = base_dir / p;
      std::ifstream inc(p);
      if (!inc) throw ConfigError("cannot open included file '" + p.string() + "'");
      std::stringstream ss;
      ss << inc.rdbuf();
      parse_into(ss.str(), p.parent_path(), depth + 1);
      continue;
    }
    set(key, value);
  }
}

void KvFile::set(const std::string& key, const std::string& value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].second = value;
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.emplace_back(key, value);
}

void KvFile::set(const std::string& key, double value, int significant_digits) {
  set(key, format_double(value, significant_digits));
}

void KvFile::set_int(const std::string& key, long long value) { set(key, std::to_string(value)); }

bool KvFile::contains(const std::string& key) const { return index_.count(key) != 0; }

std::optional<std::string> KvFile::find(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return entries_[it->second].second;
}

const std::string& KvFile::get(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw ConfigError("missing key '" + key + "'");
  return entries_[it->second].second;
}

double KvFile::get_double(const std::string& key) const {
  try {
    return parse_double(get(key));
  } catch (const DataError&) {
    throw ConfigError("key '" + key + "' is not a number");
  }
}

long long KvFile::get_int(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError("key '" + key + "' is not an integer");
  }
  return out;
}

double KvFile::get_double_or(const std::string& key, double fallback) const {
  return contains(key) ? get_double(key) : fallback;
}

long long KvFile::get_int_or(const std::string& key, long long fallback) const {
  return contains(key) ? get_int(key) : fallback;
}

std::string KvFile::get_or(const std::string& key, const std::string& fallback) const {
  auto v = find(key);
  return v ? *v : fallback;
}

void KvFile::overlay(const KvFile& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

std::string KvFile::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void KvFile::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << to_string();
}

}  // namespace ecmude
