#include "tvpgo/config.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <fstream>
#include <sstream>

namespace tvpgo {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return s.substr(begin, end - begin);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

}  // namespace

Config Config::parse(std::istream& in) {
  Config config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fail = [&](const std::string& what) {
      throw IoError("config line " + std::to_string(line_no) + ": " + what);
    };
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!valid_key(key)) fail("invalid key '" + key + "'");
    if (value.empty()) fail("empty value for '" + key + "'");
    if (!config.values_.emplace(key, value).second) {
      fail("duplicate key '" + key + "'");
    }
  }
  return config;
}

Config Config::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse(in);
}

bool Config::has(const std::string& key) const {
  return values_.count(key) > 0;
}

const std::string* Config::find(const std::string& key) const {
  consumed_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  double parsed = 0.0;
  try {
    parsed = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size()) {
    throw ParameterError("config key '" + key + "': '" + *v +
                         "' is not a number");
  }
  return parsed;
}

int Config::get_int(const std::string& key, int fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  long long parsed = 0;
  try {
    parsed = std::stoll(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size() || parsed < INT_MIN || parsed > INT_MAX) {
    throw ParameterError("config key '" + key + "': '" + *v +
                         "' is not an integer");
  }
  return static_cast<int>(parsed);
}

std::uint64_t Config::get_uint64(const std::string& key,
                                 std::uint64_t fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  unsigned long long parsed = 0;
  try {
    parsed = std::stoull(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size()) {
    throw ParameterError("config key '" + key + "': '" + *v +
                         "' is not an unsigned integer");
  }
  return parsed;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ParameterError("config key '" + key + "': '" + *v +
                       "' is not a boolean (use true/false)");
}

std::vector<std::string> Config::unconsumed_keys() const {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : values_) {
    if (consumed_.count(key) == 0) unknown.push_back(key);
  }
  return unknown;
}

void Config::require_all_consumed() const {
  const std::vector<std::string> unknown = unconsumed_keys();
  if (unknown.empty()) return;
  std::string joined;
  for (const std::string& key : unknown) {
    if (!joined.empty()) joined += ", ";
    joined += key;
  }
  throw ParameterError("unknown config keys: " + joined);
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) {
    throw ParameterError("invalid config key '" + key + "'");
  }
  values_[key] = value;
  consumed_.erase(key);
}

}  // namespace tvpgo
