#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dre/errors.hpp"

namespace dre {

// Line-oriented config format: "[section]" headers and "key = value" pairs.
// Values are numbers, booleans, quoted or bare strings, or bracketed arrays
// of those. Keys a command never reads are reported as errors with their
// line numbers, so typos cannot silently fall back to defaults.
class ConfigFile {
 public:
  static ConfigFile parse_string(const std::string& text,
                                 const std::string& origin = "<config>") {
    ConfigFile cf;
    cf.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']' || t.size() < 3)
          throw config_error(cf.where(lineno) + ": malformed section header '" + t + "'");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw config_error(cf.where(lineno) + ": empty section name");
        continue;
      }
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw config_error(cf.where(lineno) + ": expected 'key = value', got '" + t + "'");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty()) throw config_error(cf.where(lineno) + ": empty key");
      if (value.empty()) throw config_error(cf.where(lineno) + ": empty value for '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cf.entries_.count(full))
        throw config_error(cf.where(lineno) + ": duplicate key '" + full + "'");
      cf.entries_[full] = Entry{value, lineno, false};
    }
    return cf;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  double get_double(const std::string& key, double fallback) const {
    const Entry* e = lookup(key);
    if (!e) return fallback;
    return parse_number(e->raw, key, e->line);
  }

  long get_long(const std::string& key, long fallback) const {
    const double v = get_double(key, static_cast<double>(fallback));
    const long r = static_cast<long>(v);
    if (static_cast<double>(r) != v) {
      const Entry* e = lookup_done(key);
      throw config_error(where(e->line) + ": '" + key + "' must be an integer");
    }
    return r;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const Entry* e = lookup(key);
    if (!e) return fallback;
    if (e->raw == "true") return true;
    if (e->raw == "false") return false;
    throw config_error(where(e->line) + ": '" + key + "' must be true or false");
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = lookup(key);
    if (!e) return fallback;
    return unquote(e->raw, key, e->line);
  }

  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const {
    const Entry* e = lookup(key);
    if (!e) return fallback;
    std::vector<double> out;
    for (const std::string& item : split_array(e->raw, key, e->line))
      out.push_back(parse_number(item, key, e->line));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const {
    const Entry* e = lookup(key);
    if (!e) return fallback;
    std::vector<std::string> out;
    for (const std::string& item : split_array(e->raw, key, e->line))
      out.push_back(unquote(item, key, e->line));
    return out;
  }

  // Call after every known key has been read.
  void require_all_consumed() const {
    std::string bad;
    for (const auto& [key, e] : entries_)
      if (!e.consumed)
        bad += "\n  " + where(e.line) + ": unknown key '" + key + "'";
    if (!bad.empty()) throw config_error("unrecognized config keys:" + bad);
  }

 private:
  struct Entry {
    std::string raw;
    int line = 0;
    mutable bool consumed = false;
  };

  std::map<std::string, Entry> entries_;
  std::string origin_;

  std::string where(int line) const { return origin_ + ":" + std::to_string(line); }

  const Entry* lookup(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.consumed = true;
    return &it->second;
  }

  const Entry* lookup_done(const std::string& key) const {
    return &entries_.at(key);
  }

  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  double parse_number(const std::string& s, const std::string& key, int line) const {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw config_error(where(line) + ": '" + key + "' has non-numeric value '" + s + "'");
    }
  }

  std::string unquote(const std::string& s, const std::string& key, int line) const {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
      const std::string body = s.substr(1, s.size() - 2);
      if (body.find('"') != std::string::npos)
        throw config_error(where(line) + ": '" + key + "' has a stray quote");
      return body;
    }
    if (s.find('"') != std::string::npos)
      throw config_error(where(line) + ": '" + key + "' has unbalanced quotes");
    return s;
  }

  std::vector<std::string> split_array(const std::string& s, const std::string& key,
                                       int line) const {
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
      throw config_error(where(line) + ": '" + key + "' must be a [..] array");
    std::vector<std::string> out;
    std::string body = s.substr(1, s.size() - 2);
    std::string cur;
    for (char c : body) {
      if (c == ',') {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    const std::string last = trim(cur);
    if (!last.empty()) out.push_back(last);
    for (const std::string& item : out)
      if (item.empty())
        throw config_error(where(line) + ": '" + key + "' has an empty array element");
    return out;
  }
};

}  // namespace dre
