#pragma once

#include <map>
#include <string>
#include <vector>

namespace marl {

// Flat key=value configuration with dotted sections. Lines starting with
// '#' are comments; whitespace around keys and values is trimmed.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const;
  int get_int(const std::string& key, int def) const;
  long get_long(const std::string& key, long def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  // comma-separated list of reals
  std::vector<double> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string to_string() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace marl
