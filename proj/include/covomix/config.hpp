#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace covomix::cfg {

// Flat key = value run configuration. Keys are free-form strings; values are
// stored verbatim and parsed on access. dump() is normalized (sorted keys,
// single "key = value" lines) so dump(parse(f)) == normalize(f).
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key) const;                  // required
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_f64(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Existing regular file, or UsageError naming the key.
  std::string get_path(const std::string& key) const;
  // Existing directory, or UsageError naming the key.
  std::string get_dir(const std::string& key) const;

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_string(const std::string& text);
  void dump_file(const std::string& path) const;
  std::string dump_string() const;

  const std::map<std::string, std::string>& all() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Thread count resolution: explicit "threads" key, else COVOMIX_THREADS,
// else 1.
int resolve_threads(const RunConfig& config);

}  // namespace covomix::cfg
