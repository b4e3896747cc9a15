#include "bsde/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace bsde {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_list(const std::string& raw, const std::string& key) {
  const std::string t = trim(raw);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']')
    throw ConfigError(key + ": expected a list, got \"" + raw + "\"");
  std::vector<std::string> items;
  std::string cur;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    if (t[i] == ',') {
      if (!trim(cur).empty()) items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += t[i];
    }
  }
  if (!trim(cur).empty()) items.push_back(trim(cur));
  return items;
}

double parse_number(const std::string& raw, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError(key + ": expected a number, got \"" + raw + "\"");
  }
}

std::int64_t parse_integer(const std::string& raw, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError(key + ": expected an integer, got \"" + raw + "\"");
  }
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str());
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& raw_value) {
  values_[key] = raw_value;
}

double Config::number(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number(it->second, key);
}

std::int64_t Config::integer(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_integer(it->second, key);
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : unquote(it->second);
}

bool Config::boolean(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError(key + ": expected true or false, got \"" + it->second + "\"");
}

std::vector<double> Config::number_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<double> out;
  for (const std::string& item : split_list(it->second, key)) out.push_back(parse_number(item, key));
  return out;
}

std::vector<std::int64_t> Config::int_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<std::int64_t> out;
  for (const std::string& item : split_list(it->second, key))
    out.push_back(parse_integer(item, key));
  return out;
}

std::vector<std::string> Config::str_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<std::string> out;
  for (const std::string& item : split_list(it->second, key)) out.push_back(unquote(item));
  return out;
}

double Config::number(const std::string& key) const {
  if (!has(key)) throw ConfigError(key + ": required value is missing");
  return number(key, 0.0);
}

std::int64_t Config::integer(const std::string& key) const {
  if (!has(key)) throw ConfigError(key + ": required value is missing");
  return integer(key, 0);
}

std::string Config::str(const std::string& key) const {
  if (!has(key)) throw ConfigError(key + ": required value is missing");
  return str(key, "");
}

std::string Config::serialize() const {
  // std::map keeps keys sorted; group consecutive keys by section prefix
  std::ostringstream os;
  std::string section;
  bool first = true;
  for (const auto& [key, value] : values_) {
    const std::size_t dot = key.rfind('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (sec != section || first) {
      if (!first) os << "\n";
      if (!sec.empty()) os << "[" << sec << "]\n";
      section = sec;
      first = false;
    }
    os << name << " = " << value << "\n";
  }
  return os.str();
}

}  // namespace bsde
