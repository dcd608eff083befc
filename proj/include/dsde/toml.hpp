#pragma once

#include <map>
#include <string>
#include <vector>

namespace dsde::toml {

// Minimal TOML reader covering the subset used by experiment configs:
// [table] / [a.b] headers, key = value with strings, numbers, booleans and
// flat arrays, and # comments. Keys are exposed flattened ("table.key").
struct Value {
  enum class Kind { string, number, boolean, array };
  Kind kind = Kind::number;
  std::string str;
  double num = 0.0;
  bool b = false;
  std::vector<Value> arr;
};

class Table {
 public:
  static Table parse(const std::string& text);
  static Table parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const Value& at(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_number(const std::string& key) const;
  double get_number(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_numbers(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  // All flattened keys, insertion-ordered by the map (lexicographic).
  const std::map<std::string, Value>& entries() const { return values_; }

 private:
  std::map<std::string, Value> values_;
};

}  // namespace dsde::toml
