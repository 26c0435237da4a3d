#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "carplan/model/config.hpp"

namespace carplan {

/// Key-value run configuration. Keys must be declared; later sources
/// (file, then flags) override earlier ones.
class RunConfig {
 public:
  void declare(const std::string& key, const std::string& default_value) { values_[key] = default_value; }
  bool declared(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    if (!declared(key)) throw ConfigError("unknown config key: " + key);
    values_[key] = value;
  }

  /// `key=value` lines; `#` starts a comment; blank lines are skipped.
  void merge_text(const std::string& text, const std::string& origin = "config") {
    std::istringstream is(text);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    merge_text(ss.str(), path);
  }

  /// Parses `key=value` as given on the command line.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got: " + kv);
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("undeclared config key: " + key);
    return it->second;
  }

  long long integer(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t pos = 0;
      const long long x = std::stoll(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid integer for " + key + ": " + v);
  }

  std::size_t count(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) throw ConfigError(key + " must be non-negative");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t pos = 0;
      const unsigned long long x = std::stoull(v, &pos);
      if (pos == v.size() && v.find('-') == std::string::npos) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid seed for " + key + ": " + v);
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid number for " + key + ": " + v);
  }

  bool flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("invalid boolean for " + key + ": " + v);
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Sorted `key=value` lines; re-reading them reproduces this config.
  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

/// Declares the preset and every model key. An empty model key means
/// "as in the preset".
inline void declare_model_keys(RunConfig& rc, const std::string& preset = "desk") {
  rc.declare("preset", preset);
  for (const auto& kv : ModelConfig{}.to_kv()) rc.declare(kv.first, "");
}

/// Model configuration from the preset plus any non-empty model keys. The
/// resolved values are written back so the saved config is complete.
inline ModelConfig resolve_model(RunConfig& rc) {
  const std::string& preset = rc.str("preset");
  ModelConfig c;
  if (preset == "tiny") c = ModelConfig::tiny();
  else if (preset != "desk") throw ConfigError("unknown preset: " + preset);
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : c.to_kv())
    if (!rc.str(k).empty()) kv[k] = rc.str(k);
  c.apply(kv);
  c.validate();
  for (const auto& [k, v] : c.to_kv()) rc.set(k, v);
  return c;
}

}  // namespace carplan
