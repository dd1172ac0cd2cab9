#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace genrec {

// Flat key=value run configuration. Every knob has a default; unknown keys
// are rejected by name; the fully-resolved set is written next to run
// outputs so a run is reproducible from its artifacts alone.
struct RunConfig {
  std::map<std::string, std::string> values;

  static const std::map<std::string, std::string>& defaults();
  static RunConfig make_default();
  // Defaults overlaid with the file; `#` starts a comment, blank lines skipped.
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);  // rejects unknown keys

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;        // comma-separated
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  // All keys, sorted, one per line.
  void write_resolved(const std::string& path) const;
};

}  // namespace genrec
