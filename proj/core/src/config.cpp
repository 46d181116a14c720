#include "vdyn/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vdyn/errors.hpp"

namespace vdyn {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) a++;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) b--;
  return s.substr(a, b - a);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": expected 'key = value', got: " + t);
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.kv_[key] = value;
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw config_error("config set: empty key");
  kv_[key] = value;
}

void Config::apply_override(const std::string& key_eq_value) {
  std::size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw config_error("override must be key=value, got: " + key_eq_value);
  }
  std::string key = trim(key_eq_value.substr(0, eq));
  std::string value = trim(key_eq_value.substr(eq + 1));
  if (key.empty()) throw config_error("override must be key=value, got: " + key_eq_value);
  kv_[key] = value;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

std::string Config::require_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw config_error("missing required config key: " + key);
  return it->second;
}

double Config::get_num(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw config_error("config key " + key + ": not a number: " + v);
  }
  return x;
}

int Config::get_int(const std::string& key, int def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  char* end = nullptr;
  long x = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw config_error("config key " + key + ": not an integer: " + v);
  }
  return static_cast<int>(x);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  char* end = nullptr;
  unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw config_error("config key " + key + ": not an unsigned integer: " + v);
  }
  return static_cast<std::uint64_t>(x);
}

bool Config::get_flag(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw config_error("config key " + key + ": not a flag (use 0/1): " + v);
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::string& def) const {
  std::string v = get_str(key, def);
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      std::string t = trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string t = trim(cur);
  if (!t.empty()) out.push_back(t);
  return out;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  out.reserve(kv_.size());
  for (const auto& [k, v] : kv_) out.push_back(k);
  return out;
}

std::string Config::canonical_echo() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

}  // namespace vdyn
