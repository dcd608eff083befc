#include "dsde/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dsde::toml {

namespace {

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Removes a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

Value parse_scalar(const std::string& tok, int line_no) {
  Value v;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    v.kind = Value::Kind::string;
    v.str = tok.substr(1, tok.size() - 2);
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.kind = Value::Kind::boolean;
    v.b = tok == "true";
    return v;
  }
  try {
    std::size_t used = 0;
    v.num = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    v.kind = Value::Kind::number;
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                             ": bad value '" + tok + "'");
  }
}

Value parse_value(const std::string& raw, int line_no) {
  const std::string s = strip(raw);
  if (s.empty())
    throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                             ": empty value");
  if (s.front() == '[') {
    if (s.back() != ']')
      throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                               ": unterminated array");
    Value v;
    v.kind = Value::Kind::array;
    const std::string body = s.substr(1, s.size() - 2);
    std::string tok;
    bool in_str = false;
    for (char c : body) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        v.arr.push_back(parse_scalar(strip(tok), line_no));
        tok.clear();
      } else {
        tok += c;
      }
    }
    if (!strip(tok).empty()) v.arr.push_back(parse_scalar(strip(tok), line_no));
    return v;
  }
  return parse_scalar(s, line_no);
}

}  // namespace

Table Table::parse(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line, prefix;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                                 ": unterminated table header");
      prefix = strip(line.substr(1, line.size() - 2));
      if (prefix.empty())
        throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                                 ": empty table name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                               ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    if (key.empty())
      throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                               ": empty key");
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (t.values_.count(full))
      throw std::runtime_error("config parse error at line " + std::to_string(line_no) +
                               ": duplicate key '" + full + "'");
    t.values_[full] = parse_value(line.substr(eq + 1), line_no);
  }
  return t;
}

Table Table::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const Value& Table::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
  return it->second;
}

std::string Table::get_string(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind != Value::Kind::string)
    throw std::runtime_error("config: key '" + key + "' must be a string");
  return v.str;
}

std::string Table::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double Table::get_number(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind != Value::Kind::number)
    throw std::runtime_error("config: key '" + key + "' must be a number");
  return v.num;
}

double Table::get_number(const std::string& key, double fallback) const {
  return has(key) ? get_number(key) : fallback;
}

bool Table::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const Value& v = at(key);
  if (v.kind != Value::Kind::boolean)
    throw std::runtime_error("config: key '" + key + "' must be a boolean");
  return v.b;
}

std::vector<double> Table::get_numbers(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind == Value::Kind::number) return {v.num};
  if (v.kind != Value::Kind::array)
    throw std::runtime_error("config: key '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v.arr) {
    if (e.kind != Value::Kind::number)
      throw std::runtime_error("config: key '" + key + "' must be an array of numbers");
    out.push_back(e.num);
  }
  return out;
}

std::vector<std::string> Table::get_strings(const std::string& key) const {
  const Value& v = at(key);
  if (v.kind == Value::Kind::string) return {v.str};
  if (v.kind != Value::Kind::array)
    throw std::runtime_error("config: key '" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v.arr) {
    if (e.kind != Value::Kind::string)
      throw std::runtime_error("config: key '" + key + "' must be an array of strings");
    out.push_back(e.str);
  }
  return out;
}

}  // namespace dsde::toml
