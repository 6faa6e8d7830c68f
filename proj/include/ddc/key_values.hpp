#pragma once

#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ddc {

/// Flat `key = value` text with `#` comments; keys may carry dotted prefixes.
using KeyValues = std::map<std::string, std::string>;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& kv);

/// Typed reads over a KeyValues map that remember which keys were consumed,
/// so leftovers can be reported as unknown keys.
class KeyReader {
 public:
  explicit KeyReader(const KeyValues& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    return convert<T>(key, it->second);
  }

  template <typename T>
  T require(const std::string& key) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing key '" + key + "'");
    used_.insert(key);
    return convert<T>(key, it->second);
  }

  /// Throws ConfigError listing every key that was never read.
  void reject_unknown() const;

 private:
  template <typename T>
  static T convert(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("key '" + key + "': expected boolean, got '" + text + "'");
    } else {
      std::istringstream in(text);
      T value{};
      in >> value;
      if (in.fail() || !(in >> std::ws).eof())
        throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
      return value;
    }
  }

  const KeyValues& kv_;
  std::set<std::string> used_;
};

}  // namespace ddc
