#include "tddsync/config_file.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <locale>
#include <sstream>

#include "tddsync/error.hpp"

namespace tddsync {

namespace {

[[noreturn]] void parse_error(int line, const std::string& what) {
  throw Error(ErrorKind::config_parse, "line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

ConfigScalar parse_scalar(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.empty()) parse_error(line, "missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') parse_error(line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char n = s[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += s[i];
      }
    }
    return out;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  std::string digits;
  for (char c : s)
    if (c != '_') digits += c;
  const char* first = digits.data();
  const char* last = digits.data() + digits.size();
  if (*first == '+') ++first;
  const bool looks_float = digits.find_first_of(".eE") != std::string::npos ||
                           digits == "inf" || digits == "-inf" || digits == "+inf";
  if (!looks_float) {
    std::int64_t v = 0;
    const auto r = std::from_chars(first, last, v);
    if (r.ec == std::errc() && r.ptr == last) return v;
  }
  if (digits == "inf" || digits == "+inf") return std::numeric_limits<double>::infinity();
  if (digits == "-inf") return -std::numeric_limits<double>::infinity();
  std::istringstream in(std::string(first, last));
  in.imbue(std::locale::classic());
  double d = 0.0;
  in >> d;
  if (in.fail() || !in.eof()) parse_error(line, "cannot parse value '" + s + "'");
  return d;
}

std::vector<std::string> split_array(const std::string& body, int line) {
  std::vector<std::string> parts;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) quoted = !quoted;
    if (c == ',' && !quoted) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) parse_error(line, "unterminated string in array");
  if (!trim(cur).empty()) parts.push_back(cur);
  for (const auto& p : parts)
    if (trim(p).empty()) parse_error(line, "empty array element");
  return parts;
}

const ConfigValue& lookup(const ConfigDocument& doc, const std::string& key) {
  const auto it = doc.entries.find(key);
  if (it == doc.entries.end()) throw Error(ErrorKind::invalid_config, key + ": missing");
  return it->second;
}

const ConfigScalar& scalar(const ConfigDocument& doc, const std::string& key) {
  const ConfigValue& v = lookup(doc, key);
  if (v.is_array()) throw Error(ErrorKind::invalid_config, key + ": expected a scalar, got an array");
  return std::get<ConfigScalar>(v.value);
}

double as_double(const ConfigScalar& s, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&s)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&s)) return *d;
  throw Error(ErrorKind::invalid_config, key + ": expected a number");
}

std::int64_t as_int(const ConfigScalar& s, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&s)) return *i;
  throw Error(ErrorKind::invalid_config, key + ": expected an integer");
}

std::string as_string(const ConfigScalar& s, const std::string& key) {
  if (const auto* str = std::get_if<std::string>(&s)) return *str;
  throw Error(ErrorKind::invalid_config, key + ": expected a string");
}

std::vector<ConfigScalar> array_or_scalar(const ConfigDocument& doc, const std::string& key) {
  const ConfigValue& v = lookup(doc, key);
  if (v.is_array()) return std::get<std::vector<ConfigScalar>>(v.value);
  return {std::get<ConfigScalar>(v.value)};
}

}  // namespace

double ConfigDocument::get_double(const std::string& key) const { return as_double(scalar(*this, key), key); }

std::int64_t ConfigDocument::get_int(const std::string& key) const { return as_int(scalar(*this, key), key); }

bool ConfigDocument::get_bool(const std::string& key) const {
  const ConfigScalar& s = scalar(*this, key);
  if (const auto* b = std::get_if<bool>(&s)) return *b;
  throw Error(ErrorKind::invalid_config, key + ": expected true or false");
}

std::string ConfigDocument::get_string(const std::string& key) const {
  return as_string(scalar(*this, key), key);
}

std::vector<double> ConfigDocument::get_double_array(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : array_or_scalar(*this, key)) out.push_back(as_double(s, key));
  return out;
}

std::vector<std::int64_t> ConfigDocument::get_int_array(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& s : array_or_scalar(*this, key)) out.push_back(as_int(s, key));
  return out;
}

std::vector<std::string> ConfigDocument::get_string_array(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& s : array_or_scalar(*this, key)) out.push_back(as_string(s, key));
  return out;
}

ConfigDocument parse_config(const std::string& text) {
  ConfigDocument doc;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) parse_error(line, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_key(section)) parse_error(line, "invalid section name '" + section + "'");
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) parse_error(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) parse_error(line, "invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (doc.entries.count(full)) parse_error(line, "duplicate key '" + full + "'");
    const std::string rhs = trim(s.substr(eq + 1));
    ConfigValue v;
    v.line = line;
    if (!rhs.empty() && rhs.front() == '[') {
      if (rhs.back() != ']') parse_error(line, "arrays must close on the same line");
      std::vector<ConfigScalar> items;
      for (const auto& part : split_array(rhs.substr(1, rhs.size() - 2), line))
        items.push_back(parse_scalar(part, line));
      v.value = std::move(items);
    } else {
      v.value = parse_scalar(rhs, line);
    }
    doc.entries.emplace(full, std::move(v));
  }
  return doc;
}

ConfigDocument load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::config_parse, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

}  // namespace tddsync
