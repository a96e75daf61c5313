#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "cepn/error.hpp"

namespace cepn {

// Flat `key = value` config file. '#' starts a comment. Every key must be
// consumed by the subcommand that loads the file; leftovers are errors.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw config_error(origin + ":" + std::to_string(line_no) +
                           ": expected 'key = value', got '" + line + "'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw config_error(origin + ":" + std::to_string(line_no) + ": empty key");
      if (cfg.kv_.count(key))
        throw config_error(origin + ":" + std::to_string(line_no) + ": duplicate key '" +
                           key + "'");
      cfg.kv_[key] = value;
      if (pos > text.size()) break;
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error(path + ": cannot open config file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text, path);
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end())
      throw config_error(origin_ + ": missing required key '" + key + "'");
    return it->second;
  }

  long get_int(const std::string& key, long fallback) const {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return to_int(key, it->second);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t consumed = 0;
      std::uint64_t v = std::stoull(it->second, &consumed);
      if (consumed != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw config_error(origin_ + ": key '" + key + "' is not an unsigned integer: '" +
                         it->second + "'");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t consumed = 0;
      double v = std::stod(it->second, &consumed);
      if (consumed != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw config_error(origin_ + ": key '" + key + "' is not a number: '" + it->second +
                         "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw config_error(origin_ + ": key '" + key + "' must be true/false, got '" +
                       it->second + "'");
  }

  // Call after all reads: any key never requested is unknown.
  void reject_unknown() const {
    std::string unknown;
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty())
      throw config_error(origin_ + ": unknown config keys: " + unknown);
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  long to_int(const std::string& key, const std::string& value) const {
    try {
      std::size_t consumed = 0;
      long v = std::stol(value, &consumed);
      if (consumed != value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw config_error(origin_ + ": key '" + key + "' is not an integer: '" + value + "'");
    }
  }

  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> used_;
  std::string origin_ = "<config>";
};

}  // namespace cepn
