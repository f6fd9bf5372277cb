#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tvpgo/errors.hpp"

namespace tvpgo {

// Flat key-value configuration text:
//
//   # comment
//   key = value        # trailing comments allowed
//
// Keys are [A-Za-z0-9_]+ and may appear once. Typed getters record which
// keys were consumed so require_all_consumed() can reject typos: any key a
// loader never asked about is a schema violation.
class Config {
 public:
  static Config parse(std::istream& in);
  static Config parse_string(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint64(const std::string& key,
                           std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Also marks the key consumed even when absent, so optional keys work.
  std::vector<std::string> unconsumed_keys() const;
  void require_all_consumed() const;

  // Overrides (used by CLI flags like --seed); counts as not yet consumed.
  void set(const std::string& key, const std::string& value);

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace tvpgo
