#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ionaddr::cli {

/// Bad or missing configuration; the process exits with status 2.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what) : std::runtime_error(key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class ValueKind { real, integer, text, real_list };

struct KeySpec {
  const char* key;
  ValueKind kind;
  /// Empty means the key has no default and must be supplied.
  const char* default_value;
  const char* help;
};

const std::vector<KeySpec>& key_specs();

/// Dotted-key scenario configuration with defaults for every known key.
class Config {
 public:
  Config();

  /// `key = value` lines; `[section]` headers prefix later keys; '#' comments.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  /// `key=value`.
  void assign(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  double real(const std::string& key) const;
  int integer(const std::string& key) const;
  std::string text(const std::string& key) const;
  std::vector<double> real_list(const std::string& key) const;
  bool has_value(const std::string& key) const;

  /// Parses every value and checks unit-suffixed keys (_um, _us, _rad) are >= 0.
  void validate() const;
  /// Sorted `key = value` lines.
  std::string resolved() const;
  /// FNV-1a of resolved().
  std::uint64_t digest() const;

 private:
  const KeySpec& spec(const std::string& key) const;
  const std::string& raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace ionaddr::cli
