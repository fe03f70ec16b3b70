#include "interflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace interflow {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'I', 'F', 'L', 'O', 'W', 'C', 'K', 'P'};
constexpr std::size_t kPreamble = 8 + 4 + 8;

json spec_json(const NetworkSpec& s) {
  json skips = json::array();
  for (const auto& l : s.skip_plan) skips.push_back({l.encoder_block, l.decoder_block, l.channels});
  return {{"n_input_frames", s.n_input_frames},
          {"conv_block_channels", s.conv_block_channels},
          {"bottleneck_channels", s.bottleneck_channels},
          {"upsample_channels", s.upsample_channels},
          {"decoder_input_channels", s.decoder_input_channels},
          {"decoder_conv_channels", s.decoder_conv_channels},
          {"skip_plan", skips},
          {"head", std::string(to_string(s.head))},
          {"leaky_relu_slope", static_cast<double>(s.leaky_relu_slope)},
          {"width", s.width},
          {"height", s.height}};
}

NetworkSpec spec_from(const json& j) {
  NetworkSpec s;
  s.n_input_frames = j.at("n_input_frames").get<int>();
  s.conv_block_channels = j.at("conv_block_channels").get<std::array<int, 5>>();
  s.bottleneck_channels = j.at("bottleneck_channels").get<int>();
  s.upsample_channels = j.at("upsample_channels").get<std::array<int, 5>>();
  s.decoder_input_channels = j.at("decoder_input_channels").get<std::array<int, 5>>();
  s.decoder_conv_channels = j.at("decoder_conv_channels").get<std::array<int, 5>>();
  s.skip_plan.clear();
  for (const auto& l : j.at("skip_plan")) s.skip_plan.push_back({l.at(0).get<int>(), l.at(1).get<int>(), l.at(2).get<int>()});
  s.head = head_from_string(j.at("head").get<std::string>());
  s.leaky_relu_slope = static_cast<float>(j.at("leaky_relu_slope").get<double>());
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  return s;
}

json schedule_json(const TrainingSchedule& s) {
  return {{"initial_lr", s.initial_lr}, {"beta1", s.beta1},
          {"beta2", s.beta2},           {"epsilon", s.epsilon},
          {"batch_size", s.batch_size}, {"policy", std::string(to_string(s.policy))},
          {"milestones", s.milestones}, {"factor", s.factor},
          {"patience", s.patience},     {"total_epochs", s.total_epochs},
          {"loss", std::string(to_string(s.loss))}};
}

TrainingSchedule schedule_from(const json& j) {
  TrainingSchedule s;
  s.initial_lr = j.at("initial_lr").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.batch_size = j.at("batch_size").get<int>();
  s.policy = lr_policy_from_string(j.at("policy").get<std::string>());
  s.milestones = j.at("milestones").get<std::vector<int>>();
  s.factor = j.at("factor").get<double>();
  s.patience = j.at("patience").get<int>();
  s.total_epochs = j.at("total_epochs").get<int>();
  s.loss = j.at("loss").get<std::string>() == "epe" ? LossKind::Epe : LossKind::Interpolation;
  return s;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json history_json(const History& h) {
  json epochs = json::array();
  for (const auto& r : h.epochs) {
    epochs.push_back({{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"val_loss", opt(r.val_loss)},
                      {"lr", r.lr},
                      {"lr_reduced", r.lr_reduced},
                      {"seconds", r.seconds}});
  }
  return {{"epochs", epochs}, {"best_val", opt(h.best_val)}, {"best_epoch", h.best_epoch}, {"lr_reductions", h.lr_reductions}};
}

History history_from(const json& j) {
  History h;
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.train_loss = e.at("train_loss").get<double>();
    r.val_loss = opt_from(e.at("val_loss"));
    r.lr = e.at("lr").get<double>();
    r.lr_reduced = e.at("lr_reduced").get<bool>();
    r.seconds = e.at("seconds").get<double>();
    h.epochs.push_back(r);
  }
  h.best_val = opt_from(j.at("best_val"));
  h.best_epoch = j.at("best_epoch").get<int>();
  h.lr_reductions = j.at("lr_reductions").get<std::vector<int>>();
  return h;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(2); }

NetworkSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed network spec: ") + e.what());
  }
}

Checkpoint capture_checkpoint(const Network& net, const Adam* adam) {
  Checkpoint c;
  c.spec = net.spec();
  std::vector<const nn::Parameter*> trainable;
  for (const nn::Parameter* p : net.parameters()) {
    c.parameters.push_back({p->name, p->value});
    if (p->trainable) trainable.push_back(p);
  }
  if (adam != nullptr && adam->steps() > 0) {
    c.adam_steps = adam->steps();
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      c.adam_m.push_back({trainable[i]->name, adam->first_moments().at(i)});
      c.adam_v.push_back({trainable[i]->name, adam->second_moments().at(i)});
    }
  }
  return c;
}

void restore_parameters(Network& net, const Checkpoint& ckpt) {
  auto params = net.parameters();
  if (params.size() != ckpt.parameters.size()) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.parameters.size()) + " tensors, network expects " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.parameters[i];
    if (src.name != params[i]->name || !(src.tensor.shape() == params[i]->value.shape())) {
      throw DataError("checkpoint tensor '" + src.name + "' " + src.tensor.shape().str() + " does not match '" +
                      params[i]->name + "' " + params[i]->value.shape().str());
    }
    params[i]->value = src.tensor;
  }
}

void restore_adam(Adam& adam, const Checkpoint& ckpt) {
  adam.set_steps(ckpt.adam_steps);
  adam.first_moments().clear();
  adam.second_moments().clear();
  for (const auto& t : ckpt.adam_m) adam.first_moments().push_back(t.tensor);
  for (const auto& t : ckpt.adam_v) adam.second_moments().push_back(t.tensor);
}

Network network_from_checkpoint(const Checkpoint& ckpt) {
  Network net(ckpt.spec, 0);
  restore_parameters(net, ckpt);
  return net;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  json header;
  header["spec"] = spec_json(c.spec);
  header["schedule"] = schedule_json(c.schedule);
  header["scheduler"] = {{"lr", c.scheduler.lr},
                         {"best", c.scheduler.best},
                         {"has_best", c.scheduler.has_best},
                         {"since_improvement", c.scheduler.since_improvement},
                         {"epochs_done", c.scheduler.epochs_done}};
  header["epoch"] = c.epoch;
  header["best_metric"] = opt(c.best_metric);
  header["best_epoch"] = c.best_epoch;
  header["seed"] = c.seed;
  header["tag"] = c.tag;
  header["adam_steps"] = c.adam_steps;
  header["history"] = history_json(c.history);
  json tensors = json::array();
  std::uint64_t offset = 0;
  auto add = [&](const char* group, const std::vector<NamedTensor>& list) {
    for (const auto& t : list) {
      const Shape& s = t.tensor.shape();
      tensors.push_back({{"group", group}, {"name", t.name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
      offset += t.tensor.numel() * sizeof(float);
    }
  };
  add("param", c.parameters);
  add("adam_m", c.adam_m);
  add("adam_v", c.adam_v);
  header["tensors"] = tensors;
  header["payload_bytes"] = offset;

  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  auto emit = [&](const std::vector<NamedTensor>& list) {
    for (const auto& t : list) {
      for (float f : t.tensor.vec()) put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  };
  emit(c.parameters);
  emit(c.adam_m);
  emit(c.adam_v);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreamble) throw FormatError("checkpoint: truncated preamble", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("checkpoint: bad magic", 0);
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), 8);
  }
  const std::uint64_t header_len = get_le(bytes, 12, 8);
  if (header_len > bytes.size() - kPreamble) throw FormatError("checkpoint: header exceeds file", 12);
  const std::size_t payload_start = kPreamble + header_len;
  Checkpoint c;
  try {
    const json h = json::parse(bytes.begin() + kPreamble, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    c.spec = spec_from(h.at("spec"));
    c.schedule = schedule_from(h.at("schedule"));
    const auto& s = h.at("scheduler");
    c.scheduler.lr = s.at("lr").get<double>();
    c.scheduler.best = s.at("best").get<double>();
    c.scheduler.has_best = s.at("has_best").get<bool>();
    c.scheduler.since_improvement = s.at("since_improvement").get<int>();
    c.scheduler.epochs_done = s.at("epochs_done").get<int>();
    c.epoch = h.at("epoch").get<int>();
    c.best_metric = opt_from(h.at("best_metric"));
    c.best_epoch = h.at("best_epoch").get<int>();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.tag = h.at("tag").get<std::string>();
    c.adam_steps = h.at("adam_steps").get<std::int64_t>();
    c.history = history_from(h.at("history"));
    const auto payload = h.at("payload_bytes").get<std::uint64_t>();
    if (payload != bytes.size() - payload_start) {
      throw FormatError("checkpoint: payload is " + std::to_string(bytes.size() - payload_start) + " bytes, header declares " +
                            std::to_string(payload),
                        payload_start);
    }
    for (const auto& t : h.at("tensors")) {
      const auto shape = t.at("shape").get<std::array<int, 4>>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const Shape sh{shape[0], shape[1], shape[2], shape[3]};
      if (shape[0] < 0 || shape[1] < 0 || shape[2] < 0 || shape[3] < 0 || offset > payload ||
          sh.numel() * sizeof(float) > payload - offset) {
        throw FormatError("checkpoint: tensor '" + t.at("name").get<std::string>() + "' exceeds payload", payload_start);
      }
      NamedTensor nt{t.at("name").get<std::string>(), Tensor(sh)};
      const std::size_t base = payload_start + offset;
      for (std::size_t i = 0; i < nt.tensor.numel(); ++i) {
        nt.tensor.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, base + 4 * i, 4)));
      }
      const std::string group = t.at("group").get<std::string>();
      if (group == "param") {
        c.parameters.push_back(std::move(nt));
      } else if (group == "adam_m") {
        c.adam_m.push_back(std::move(nt));
      } else if (group == "adam_v") {
        c.adam_v.push_back(std::move(nt));
      } else {
        throw FormatError("checkpoint: unknown tensor group '" + group + "'", kPreamble);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what(), kPreamble);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace interflow
