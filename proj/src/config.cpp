#include "interflow/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace interflow {
namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> v{
      {"seed", "0"},
      {"workers", "1"},
      {"device", "cpu"},
      {"data.root", ""},
      {"data.manifest", ""},
      {"data.val_manifest", ""},
      {"data.split_policy", "frame"},
      {"data.val_fraction", "0.01"},
      {"synthetic.width", "64"},
      {"synthetic.height", "32"},
      {"synthetic.length", "16"},
      {"synthetic.layers", "3"},
      {"synthetic.sequences", "100"},
      {"synthetic.speed_min", "0"},
      {"synthetic.speed_max", "4"},
      {"synthetic.accel_max", "0"},
      {"synthetic.velocity", ""},
      {"synthetic.corpus", "synthetic"},
      {"model.width_divisor", "1"},
      {"model.input_frames", "4"},
      {"model.leaky_slope", "0.1"},
      {"model.checkpoint", ""},
      {"augment.width", "384"},
      {"augment.height", "192"},
      {"augment.random_crop", "true"},
      {"augment.hflip", "true"},
      {"augment.vflip", "true"},
      {"augment.temporal_reversal", "true"},
      {"adam.beta1", "0.9"},
      {"adam.beta2", "0.999"},
      {"adam.epsilon", "1e-8"},
      {"pretrain.lr", "1e-4"},
      {"pretrain.batch_size", "8"},
      {"pretrain.epochs", "12"},
      {"pretrain.lr_policy", "milestones"},
      {"pretrain.milestones", "3,6,8,10"},
      {"pretrain.factor", "0.5"},
      {"pretrain.patience", "20"},
      {"finetune.lr", "1e-4"},
      {"finetune.batch_size", "8"},
      {"finetune.epochs", "200"},
      {"finetune.lr_policy", "plateau"},
      {"finetune.milestones", ""},
      {"finetune.factor", "0.5"},
      {"finetune.patience", "20"},
      {"finetune.val_fraction", "0.1"},
      {"finetune.frames", "0"},
      {"sweep.sizes", "25,50,100,200"},
      {"sweep.repeats", "3"},
  };
  return v;
}

void flatten(const YAML::Node& node, const std::string& prefix, std::map<std::string, std::string>& out,
             const std::string& origin) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out, origin);
    }
  } else if (node.IsSequence()) {
    std::string joined;
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (i > 0) joined += ",";
      joined += node[i].as<std::string>();
    }
    out[prefix] = joined;
  } else if (node.IsNull()) {
    out[prefix] = "";
  } else {
    out[prefix] = node.as<std::string>();
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

Config Config::defaults() {
  Config c;
  c.values_ = default_values();
  c.values_["data.root"] = default_data_root().string();
  return c;
}

void Config::merge_yaml(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (root.IsNull()) return;
  if (!root.IsMap()) throw ConfigError(origin + ": top level must be a mapping");
  std::map<std::string, std::string> flat;
  try {
    flatten(root, "", flat, origin);
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  std::string unknown;
  for (const auto& [k, v] : flat) {
    if (!values_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError(origin + ": unknown config keys: " + unknown);
  for (const auto& [k, v] : flat) values_[k] = v;
}

void Config::merge_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_yaml(ss.str(), file.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) throw ConfigError("unknown config keys: " + key);
  values_[key] = value;
}

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config keys: " + key);
  return it->second;
}

std::string Config::get_string(const std::string& key) const { return raw(key); }

int Config::get_int(const std::string& key) const {
  const std::string& s = raw(key);
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + s + "'");
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& s = raw(key);
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos == s.size() && !s.empty() && s[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
}

double Config::get_double(const std::string& key) const {
  const std::string& s = raw(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + s + "'");
}

bool Config::get_bool(const std::string& key) const {
  const std::string& s = raw(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + s + "'");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(raw(key))) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError(key + ": bad list element '" + item + "'");
    }
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(raw(key))) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(key + ": bad list element '" + item + "'");
    }
  }
  return out;
}

std::string Config::dump() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  for (const auto& [k, v] : values_) out << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << v;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void Config::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << dump();
}

TrainingSchedule schedule_from_config(const Config& cfg, const std::string& section) {
  TrainingSchedule s = section == "finetune" ? TrainingSchedule::finetune_default() : TrainingSchedule::pretrain_default();
  s.total_epochs = cfg.get_int(section + ".epochs");
  const std::string policy = cfg.get_string(section + ".lr_policy");
  if (policy == "s_short") {
    const LossKind loss = s.loss;
    s = TrainingSchedule::s_short(s.total_epochs);
    s.loss = loss;
  } else {
    s.policy = lr_policy_from_string(policy);
    s.milestones = cfg.get_int_list(section + ".milestones");
  }
  s.initial_lr = cfg.get_double(section + ".lr");
  s.batch_size = cfg.get_int(section + ".batch_size");
  s.factor = cfg.get_double(section + ".factor");
  s.patience = cfg.get_int(section + ".patience");
  s.beta1 = cfg.get_double("adam.beta1");
  s.beta2 = cfg.get_double("adam.beta2");
  s.epsilon = cfg.get_double("adam.epsilon");
  s.validate();
  return s;
}

NetworkSpec network_spec_from_config(const Config& cfg) {
  const int divisor = cfg.get_int("model.width_divisor");
  NetworkSpec spec = NetworkSpec::reference().scaled(divisor);
  spec.n_input_frames = cfg.get_int("model.input_frames");
  spec.leaky_relu_slope = static_cast<float>(cfg.get_double("model.leaky_slope"));
  spec.width = cfg.get_int("augment.width");
  spec.height = cfg.get_int("augment.height");
  spec.validate();
  return spec;
}

SyntheticConfig synthetic_from_config(const Config& cfg) {
  SyntheticConfig s;
  s.width = cfg.get_int("synthetic.width");
  s.height = cfg.get_int("synthetic.height");
  s.length = cfg.get_int("synthetic.length");
  s.layers = cfg.get_int("synthetic.layers");
  s.sequences = cfg.get_int("synthetic.sequences");
  s.speed_min = cfg.get_double("synthetic.speed_min");
  s.speed_max = cfg.get_double("synthetic.speed_max");
  s.accel_max = cfg.get_double("synthetic.accel_max");
  s.corpus = cfg.get_string("synthetic.corpus");
  const auto vel = cfg.get_double_list("synthetic.velocity");
  if (vel.size() == 2) {
    s.fixed_velocity = std::array<double, 2>{vel[0], vel[1]};
  } else if (!vel.empty()) {
    throw ConfigError("synthetic.velocity: expected 'u,v'");
  }
  s.validate();
  return s;
}

AugmentConfig augment_from_config(const Config& cfg) {
  AugmentConfig a;
  a.out_width = cfg.get_int("augment.width");
  a.out_height = cfg.get_int("augment.height");
  a.random_crop = cfg.get_bool("augment.random_crop");
  a.hflip = cfg.get_bool("augment.hflip");
  a.vflip = cfg.get_bool("augment.vflip");
  a.temporal_reversal = cfg.get_bool("augment.temporal_reversal");
  validate_resolution(a.out_width, a.out_height);
  return a;
}

SplitConfig split_from_config(const Config& cfg) {
  SplitConfig s;
  s.policy = split_policy_from_string(cfg.get_string("data.split_policy"));
  s.fraction = cfg.get_double("data.val_fraction");
  s.seed = cfg.get_u64("seed");
  return s;
}

std::filesystem::path default_data_root() {
  const char* v = std::getenv(kDataRootEnv);
  return v ? std::filesystem::path(v) : std::filesystem::path();
}

}  // namespace interflow
