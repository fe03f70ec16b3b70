#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "interflow/data.hpp"
#include "interflow/model.hpp"
#include "interflow/schedule.hpp"
#include "interflow/synthetic.hpp"

namespace interflow {

// Flat key/value configuration with dotted keys ("pretrain.lr"). Layers:
// built-in defaults, then a YAML file (nested maps are flattened), then
// command-line overrides. Unknown keys are rejected.
class Config {
 public:
  static Config defaults();

  void merge_file(const std::filesystem::path& file);
  void merge_yaml(const std::string& text, const std::string& origin = "<string>");
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  // YAML with one "key: value" line per entry, sorted by key.
  std::string dump() const;
  void save(const std::filesystem::path& file) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string& raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

// Typed views. `section` is "pretrain" or "finetune".
TrainingSchedule schedule_from_config(const Config& cfg, const std::string& section);
NetworkSpec network_spec_from_config(const Config& cfg);
SyntheticConfig synthetic_from_config(const Config& cfg);
AugmentConfig augment_from_config(const Config& cfg);
SplitConfig split_from_config(const Config& cfg);

// Value of the data-root environment variable, or empty.
std::filesystem::path default_data_root();
inline constexpr const char* kDataRootEnv = "INTERFLOW_DATA_ROOT";

}  // namespace interflow
