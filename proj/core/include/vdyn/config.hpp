#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vdyn {

// Flat "key = value" configuration. Lines starting with '#' and blank lines
// are skipped; keys are dotted (data.samples, model.hidden_dim, ...). Later
// assignments win, which is how command-line --set overrides work.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text,
                            const std::string& origin = "<config>");

  void set(const std::string& key, const std::string& value);
  void apply_override(const std::string& key_eq_value);  // "key=value"
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& def) const;
  std::string require_str(const std::string& key) const;
  double get_num(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  bool get_flag(const std::string& key, bool def) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::string& def) const;  // comma-split

  std::vector<std::string> keys() const;

  // Key-sorted "key = value" lines; the canonical form embedded in artifacts
  // and checkpoints.
  std::string canonical_echo() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace vdyn
