#include "covomix/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "covomix/errors.hpp"

namespace covomix::cfg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw UsageError("config: empty key");
  values_[key] = value;
}

std::string RunConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("config: missing required key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_f64(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: '" + key + "' is not a number: " + it->second);
  }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const long v = std::stol(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw UsageError("config: '" + key + "' is not an integer: " + it->second);
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw UsageError("config: '" + key + "' is not an unsigned integer: " + it->second);
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw UsageError("config: '" + key + "' is not a boolean: " + v);
}

std::string RunConfig::get_path(const std::string& key) const {
  const std::string p = get_str(key);
  if (!std::filesystem::is_regular_file(p)) {
    throw UsageError("config: '" + key + "' does not name an existing file: " + p);
  }
  return p;
}

std::string RunConfig::get_dir(const std::string& key) const {
  const std::string p = get_str(key);
  if (!std::filesystem::is_directory(p)) {
    throw UsageError("config: '" + key + "' does not name an existing directory: " + p);
  }
  return p;
}

RunConfig RunConfig::parse_string(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    }
    c.values_[key] = value;
  }
  return c;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("config: cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str());
}

std::string RunConfig::dump_string() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

void RunConfig::dump_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("config: cannot write " + path);
  os << dump_string();
}

int resolve_threads(const RunConfig& config) {
  if (config.has("threads")) {
    const int t = config.get_int("threads", 1);
    if (t < 1) throw UsageError("config: threads must be >= 1");
    return t;
  }
  if (const char* env = std::getenv("COVOMIX_THREADS")) {
    const int t = std::atoi(env);
    if (t >= 1) return t;
  }
  return 1;
}

}  // namespace covomix::cfg
