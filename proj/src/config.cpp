#include "siammcvae/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace siammcvae {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap ConfigMap::parse(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected `key = value`");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    cfg.set(key, value);
  }
  return cfg;
}

ConfigMap ConfigMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

int ConfigMap::find(const std::string& key) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first == key) return static_cast<int>(i);
  return -1;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  int i = find(key);
  if (i >= 0)
    entries_[static_cast<size_t>(i)].second = value;
  else
    entries_.emplace_back(key, value);
}

void ConfigMap::set_int(const std::string& key, int64_t v) { set(key, std::to_string(v)); }

void ConfigMap::set_double(const std::string& key, double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  set(key, os.str());
}

void ConfigMap::set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }

bool ConfigMap::has(const std::string& key) const { return find(key) >= 0; }

const std::string& ConfigMap::get(const std::string& key) const {
  int i = find(key);
  if (i < 0) throw ValueError("config: missing key '" + key + "'");
  return entries_[static_cast<size_t>(i)].second;
}

std::string ConfigMap::get_or(const std::string& key, const std::string& fallback) const {
  int i = find(key);
  return i < 0 ? fallback : entries_[static_cast<size_t>(i)].second;
}

int64_t ConfigMap::get_int(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  long long r = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ValueError("config: key '" + key + "' is not an integer: " + v);
  return r;
}

double ConfigMap::get_double(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  double r = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ValueError("config: key '" + key + "' is not a number: " + v);
  return r;
}

bool ConfigMap::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ValueError("config: key '" + key + "' is not a boolean: " + v);
}

std::string ConfigMap::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
  return os.str();
}

void ConfigMap::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("config: cannot write " + path);
  out << to_text();
}

void ConfigMap::require_known(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : entries_)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ValueError("config: unknown key '" + k + "'");
}

}  // namespace siammcvae
