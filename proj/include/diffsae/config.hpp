#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace diffsae {

// Sectioned key = value configuration with a fixed schema. Unknown keys are
// rejected with their full path; the canonical serialization round-trips.
class ExperimentConfig {
 public:
  using Value = std::variant<int64_t, double, bool, std::string>;

  static ExperimentConfig defaults();
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig parse_file(const std::string& path);

  std::string serialize() const;

  int64_t get_int(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  const std::string& get_str(const std::string& section, const std::string& key) const;

  // "section.key" paths; the string value is parsed per the schema type.
  void set_from_string(const std::string& path, const std::string& value);

  bool operator==(const ExperimentConfig& other) const { return values_ == other.values_; }

 private:
  const Value& lookup(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, Value>> values_;
};

}  // namespace diffsae
