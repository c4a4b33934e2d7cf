#pragma once

#include <string>
#include <vector>

#include "siammcvae/common.hpp"

namespace siammcvae {

// Line-oriented `key = value` config text. Keys keep their first-seen order
// so that serialization is stable; later assignments overwrite.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text);
  static ConfigMap load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, int64_t v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::string to_text() const;
  void save(const std::string& path) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // Throws ValueError when a key outside `known` is present (typo guard).
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  int find(const std::string& key) const;
};

}  // namespace siammcvae
