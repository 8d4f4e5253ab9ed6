#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ssvep/errors.hpp"

namespace ssvep {

// Minimal TOML subset reader: [section] headers, key = value lines,
// strings, integers, floats, booleans, and flat arrays. Covers manifest
// and run-config files; not a general TOML implementation.
class TomlTable {
public:
  static TomlTable parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("MissingFile", "cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  static TomlTable parse(const std::string& text,
                         const std::string& origin = "<string>") {
    TomlTable t;
    t.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#') continue;
      if (s.front() == '[') {
        auto close = s.find(']');
        if (close == std::string::npos)
          throw ConfigError("ConfigParse", origin + ":" + std::to_string(lineno) +
                                               ": unterminated section header");
        section = strip(s.substr(1, close - 1));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("ConfigParse", origin + ":" + std::to_string(lineno) +
                                             ": expected key = value");
      std::string key = strip(s.substr(0, eq));
      std::string value = strip(s.substr(eq + 1));
      if (key.empty() || value.empty())
        throw ConfigError("ConfigParse", origin + ":" + std::to_string(lineno) +
                                             ": empty key or value");
      std::string full = section.empty() ? key : section + "." + key;
      t.values_[full] = value;
    }
    return t;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  /// Keys under a section prefix ("synth." -> true if any synth.* key).
  bool has_section(const std::string& section) const {
    auto it = values_.lower_bound(section + ".");
    return it != values_.end() && it->first.rfind(section + ".", 0) == 0;
  }

  std::string get_string(const std::string& key) const {
    std::string raw = raw_value(key);
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
      return unescape(raw.substr(1, raw.size() - 2), key);
    throw ConfigError("ConfigType", origin_ + ": field '" + key +
                                        "' is not a string");
  }

  double get_double(const std::string& key) const {
    return to_double(raw_value(key), key);
  }

  std::int64_t get_int(const std::string& key) const {
    return to_int(raw_value(key), key);
  }

  bool get_bool(const std::string& key) const {
    std::string raw = raw_value(key);
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw ConfigError("ConfigType",
                      origin_ + ": field '" + key + "' is not a boolean");
  }

  std::vector<std::string> get_string_array(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& item : split_array(raw_value(key), key)) {
      if (item.size() >= 2 && item.front() == '"' && item.back() == '"')
        out.push_back(unescape(item.substr(1, item.size() - 2), key));
      else
        throw ConfigError("ConfigType", origin_ + ": field '" + key +
                                            "' must be an array of strings");
    }
    return out;
  }

  std::vector<double> get_double_array(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_array(raw_value(key), key))
      out.push_back(to_double(item, key));
    return out;
  }

  std::vector<int> get_int_array(const std::string& key) const {
    std::vector<int> out;
    for (const auto& item : split_array(raw_value(key), key))
      out.push_back(static_cast<int>(to_int(item, key)));
    return out;
  }

  // Typed getters with defaults.
  std::string get_string_or(const std::string& key, std::string dflt) const {
    return has(key) ? get_string(key) : dflt;
  }
  double get_double_or(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
  }
  std::int64_t get_int_or(const std::string& key, std::int64_t dflt) const {
    return has(key) ? get_int(key) : dflt;
  }
  bool get_bool_or(const std::string& key, bool dflt) const {
    return has(key) ? get_bool(key) : dflt;
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

private:
  std::string raw_value(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw ConfigError("ConfigMissing",
                        origin_ + ": missing required field '" + key + "'");
    return it->second;
  }

  static std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    // Trailing comment outside a string literal.
    bool in_str = false;
    for (std::size_t i = b; i < e; ++i) {
      if (s[i] == '"') in_str = !in_str;
      if (s[i] == '#' && !in_str) {
        e = i;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        break;
      }
    }
    return s.substr(b, e - b);
  }

  std::string unescape(const std::string& s, const std::string& key) const {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != '\\') {
        out.push_back(s[i]);
        continue;
      }
      if (++i == s.size())
        throw ConfigError("ConfigParse", origin_ + ": field '" + key +
                                             "': dangling escape");
      switch (s[i]) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default:
          throw ConfigError("ConfigParse", origin_ + ": field '" + key +
                                               "': unknown escape");
      }
    }
    return out;
  }

  std::vector<std::string> split_array(const std::string& raw,
                                       const std::string& key) const {
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
      throw ConfigError("ConfigType",
                        origin_ + ": field '" + key + "' is not an array");
    std::vector<std::string> items;
    std::string body = raw.substr(1, raw.size() - 2);
    std::string cur;
    bool in_str = false;
    for (char ch : body) {
      if (ch == '"') in_str = !in_str;
      if (ch == ',' && !in_str) {
        items.push_back(strip(cur));
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    std::string last = strip(cur);
    if (!last.empty()) items.push_back(last);
    return items;
  }

  double to_double(const std::string& raw, const std::string& key) const {
    try {
      std::size_t pos = 0;
      double v = std::stod(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("ConfigType",
                        origin_ + ": field '" + key + "' is not a number");
    }
  }

  std::int64_t to_int(const std::string& raw, const std::string& key) const {
    try {
      std::size_t pos = 0;
      long long v = std::stoll(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("ConfigType",
                        origin_ + ": field '" + key + "' is not an integer");
    }
  }

  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace ssvep
