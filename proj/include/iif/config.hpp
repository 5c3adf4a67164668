#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace iif {

enum class ValueType { Int, Real, Bool, Text, IntList, TextList };

struct KeySpec {
  std::string key;
  ValueType type;
  std::string fallback;
  std::string help;
  std::vector<std::string> choices;  // Text only; empty = free text
};

/// Every accepted key with its default.
const std::vector<KeySpec>& config_schema();

/// Flat dotted key/value configuration. Lines are `key = value`; `#` starts
/// a comment; blank lines are ignored. Unknown keys, duplicate keys and
/// malformed values raise ConfigError.
class Config {
 public:
  Config();  // all defaults

  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  /// Applies one `key=value` override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  [[nodiscard]] std::string text(const std::string& key) const;
  [[nodiscard]] long long integer(const std::string& key) const;
  [[nodiscard]] int int32(const std::string& key) const;
  [[nodiscard]] std::uint64_t u64(const std::string& key) const;
  [[nodiscard]] double real(const std::string& key) const;
  [[nodiscard]] bool flag(const std::string& key) const;
  [[nodiscard]] std::vector<int> ints(const std::string& key) const;
  [[nodiscard]] std::vector<std::string> texts(const std::string& key) const;

  /// Every key, sorted, defaults filled in. Parsing it yields an equal Config.
  [[nodiscard]] std::string resolved() const;

  bool operator==(const Config& other) const { return values_ == other.values_; }

 private:
  const KeySpec& spec(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace iif
