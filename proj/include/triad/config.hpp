#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "triad/error.hpp"

namespace triad {

// Flat "key = value" text. Blank lines and '#' comments are ignored.
// Consumers pull the keys they understand; finish() rejects leftovers.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      const std::string key = trim(line.substr(0, eq));
      if (key.empty() && eq == std::string::npos) continue;
      if (eq == std::string::npos || key.empty())
        throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
      if (!kv.values_.emplace(key, trim(line.substr(eq + 1))).second)
        throw UsageError("config line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    return kv;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  template <typename T>
  void read(const std::string& key, T& target) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    used_.insert(key);
    target = convert<T>(key, it->second);
  }

  void read_list(const std::string& key, std::vector<std::size_t>& target) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    used_.insert(key);
    target.clear();
    std::istringstream in(replace_commas(it->second));
    std::string item;
    while (in >> item) target.push_back(convert<std::size_t>(key, item));
  }

  void finish() const {
    for (const auto& [k, _] : values_)
      if (!used_.count(k)) throw UsageError("unknown config key '" + k + "'");
  }

  std::string raw(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? std::string() : it->second;
  }
  void mark_used(const std::string& key) { used_.insert(key); }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static std::string replace_commas(std::string s) {
    for (char& c : s)
      if (c == ',') c = ' ';
    return s;
  }

  template <typename T>
  static T convert(const std::string& key, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "on") return true;
      if (v == "false" || v == "0" || v == "off") return false;
      throw UsageError("config key " + key + ": expected a boolean, got '" + v + "'");
    } else if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<T>(d);
      } catch (const std::exception&) {
        throw UsageError("config key " + key + ": expected a number, got '" + v + "'");
      }
    } else {
      T out{};
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size())
        throw UsageError("config key " + key + ": expected an integer, got '" + v + "'");
      return out;
    }
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

// Shortest round-trip text for a double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace triad
