#pragma once

// Flat "key = value" text config, used for run configs and for the config
// section embedded in checkpoints. Serialization is canonical (sorted keys)
// so identical settings always produce identical bytes.

#include <map>
#include <sstream>
#include <string>

#include "ps4pro/common.hpp"

namespace ps4pro {

class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      PS4_REQUIRE(eq != std::string::npos,
                  "config line " + std::to_string(lineno) + " is not key = value");
      kv.set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
    }
    return kv;
  }

  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
    return out.str();
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void set_int(const std::string& key, long long v) { entries_[key] = std::to_string(v); }
  void set_double(const std::string& key, double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    entries_[key] = s.str();
  }

  std::string get(const std::string& key) const {
    auto it = entries_.find(key);
    PS4_REQUIRE(it != entries_.end(), "missing config key: " + key);
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
  }

  long long get_int(const std::string& key) const { return std::stoll(get(key)); }
  long long get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  double get_double(const std::string& key) const { return std::stod(get(key)); }
  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> entries_;
};

}  // namespace ps4pro
