#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace dana {

/// Error raised by every module. The module name is kept separately so the
/// CLI can print the stable `dana: <module>: <message>` prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Dimension list of a DSL value; empty means scalar.
using Dims = std::vector<int>;

inline std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string dims_to_string(const Dims& dims) {
  if (dims.empty()) return "scalar";
  std::string out;
  for (int d : dims) out += "[" + std::to_string(d) + "]";
  return out;
}

/// Rounds a value to the datapath width (4 = IEEE binary32, 8 = binary64).
inline double round_to_width(double value, int width) {
  return width == 4 ? static_cast<double>(static_cast<float>(value)) : value;
}

inline int ceil_log2(std::size_t n) {
  int depth = 0;
  std::size_t span = 1;
  while (span < n) {
    span <<= 1;
    ++depth;
  }
  return depth;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

/// 64-bit FNV-1a; used for layout fingerprints and determinism checks.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_file(const std::filesystem::path& path, const std::string& module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(module, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data,
                       const std::string& module) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(module, "cannot write '" + path.string() + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(module, "write failed for '" + path.string() + "'");
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

inline bool parse_int64(std::string_view text, std::int64_t& out) {
  text = trim(text);
  if (text.empty()) return false;
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

/// `key = value` text with `#` comments. Used for layouts, FPGA specs,
/// manifests, engine configs and reports.
class KeyValueFile {
 public:
  KeyValueFile() = default;
  explicit KeyValueFile(std::string module) : module_(std::move(module)) {}

  static KeyValueFile parse(std::string_view text, const std::string& module) {
    KeyValueFile kv(module);
    std::size_t line_no = 0;
    while (!text.empty()) {
      auto nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw Error(module, "line " + std::to_string(line_no) + ": expected 'key = value'");
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) throw Error(module, "line " + std::to_string(line_no) + ": empty key");
      kv.entries_[key] = value;
    }
    return kv;
  }

  static KeyValueFile load(const std::filesystem::path& path, const std::string& module) {
    return parse(read_file(path, module), module);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error(module_, "missing key '" + key + "'");
    return it->second;
  }

  std::int64_t get_int(const std::string& key) const {
    std::int64_t v = 0;
    if (!parse_int64(get(key), v)) throw Error(module_, "key '" + key + "' is not an integer");
    return v;
  }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  double get_double(const std::string& key) const {
    double v = 0;
    if (!parse_double(get(key), v)) throw Error(module_, "key '" + key + "' is not a number");
    return v;
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  void set(const std::string& key, std::int64_t value) { entries_[key] = std::to_string(value); }
  void set_double(const std::string& key, double value) { entries_[key] = format_double(value); }

  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Keys in sorted order; output is byte-stable.
  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  std::string module_ = "config";
  std::map<std::string, std::string> entries_;
};

}  // namespace dana
