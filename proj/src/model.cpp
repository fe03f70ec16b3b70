#include "interflow/model.hpp"

#include <cstring>
#include <random>

#include "interflow/normalize.hpp"

namespace interflow {

std::string_view to_string(Head head) { return head == Head::Flow ? "flow" : "interpolation"; }

Head head_from_string(std::string_view s) {
  if (s == "flow") return Head::Flow;
  if (s == "interpolation") return Head::Interpolation;
  throw ConfigError("unknown head '" + std::string(s) + "'");
}

NetworkSpec NetworkSpec::reference() { return NetworkSpec{}; }

NetworkSpec NetworkSpec::scaled(int divisor) const {
  if (divisor < 1) throw ConfigError("width divisor must be >= 1");
  auto div = [divisor](int c) {
    if (c % divisor != 0) {
      throw ConfigError("channel count " + std::to_string(c) + " not divisible by " + std::to_string(divisor));
    }
    return c / divisor;
  };
  NetworkSpec s = *this;
  for (int& c : s.conv_block_channels) c = div(c);
  s.bottleneck_channels = div(s.bottleneck_channels);
  for (int& c : s.upsample_channels) c = div(c);
  for (int& c : s.decoder_input_channels) c = div(c);
  for (int& c : s.decoder_conv_channels) c = div(c);
  for (SkipLink& l : s.skip_plan) l.channels = div(l.channels);
  return s;
}

std::vector<int> NetworkSpec::block_input_channels() const {
  std::vector<int> out;
  out.push_back(n_input_frames);
  for (int k = 0; k < 4; ++k) out.push_back(conv_block_channels[k]);
  out.push_back(conv_block_channels[4]);
  for (int c : decoder_input_channels) out.push_back(c);
  return out;
}

void validate_resolution(int width, int height) {
  if (width <= 0 || height <= 0 || width % 32 != 0 || height % 32 != 0) {
    throw ShapeError("resolution " + std::to_string(width) + "x" + std::to_string(height) +
                     " must be positive multiples of 32");
  }
}

void NetworkSpec::validate() const {
  if (n_input_frames < 1) throw ShapeError("n_input_frames must be >= 1");
  validate_resolution(width, height);
  auto positive = [](int c, const std::string& where) {
    if (c < 1) throw ShapeError(where + ": channel count must be positive");
  };
  for (int k = 0; k < 5; ++k) {
    positive(conv_block_channels[k], "Conv" + std::to_string(k + 1));
    positive(upsample_channels[k], "upsample " + std::to_string(k));
    positive(decoder_input_channels[k], "Dec" + std::to_string(5 - k) + " input");
    positive(decoder_conv_channels[k], "Dec" + std::to_string(5 - k));
  }
  positive(bottleneck_channels, "Bottleneck");
  if (!(leaky_relu_slope > 0.0f && leaky_relu_slope < 1.0f)) {
    throw ShapeError("leaky ReLU slope must lie in (0, 1)");
  }

  std::array<int, 6> skip_for_decoder{};  // indexed by decoder block number
  for (const SkipLink& l : skip_plan) {
    if (l.decoder_block < 1 || l.decoder_block > 5 || l.encoder_block < 1 || l.encoder_block > 5) {
      throw ShapeError("skip link Conv" + std::to_string(l.encoder_block) + "->Dec" +
                       std::to_string(l.decoder_block) + ": block index out of range");
    }
    if (l.encoder_block != l.decoder_block) {
      throw ShapeError("skip link Conv" + std::to_string(l.encoder_block) + "->Dec" +
                       std::to_string(l.decoder_block) + ": resolutions do not match");
    }
    if (skip_for_decoder[l.decoder_block] != 0) {
      throw ShapeError("Dec" + std::to_string(l.decoder_block) + ": more than one skip link");
    }
    const int produced = conv_block_channels[l.encoder_block - 1];
    if (l.channels != produced) {
      throw ShapeError("skip link Conv" + std::to_string(l.encoder_block) + "->Dec" +
                       std::to_string(l.decoder_block) + ": declares " + std::to_string(l.channels) +
                       " channels but Conv" + std::to_string(l.encoder_block) + " emits " +
                       std::to_string(produced));
    }
    skip_for_decoder[l.decoder_block] = l.channels;
  }

  static const char* kUpstream[5] = {"Bottleneck", "Dec5", "Dec4", "Dec3", "Dec2"};
  for (int j = 0; j < 5; ++j) {
    const int block = 5 - j;
    const int arriving = upsample_channels[j] + skip_for_decoder[block];
    if (arriving != decoder_input_channels[j]) {
      throw ShapeError(std::string("boundary ") + kUpstream[j] + "->Dec" + std::to_string(block) + ": " +
                       std::to_string(upsample_channels[j]) + " upsampled + " +
                       std::to_string(skip_for_decoder[block]) + " skip channels != declared input " +
                       std::to_string(decoder_input_channels[j]));
    }
  }
}

// ---------------------------------------------------------------------------

Network::Network(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  const float slope = spec_.leaky_relu_slope;
  for (int k = 0; k < 5; ++k) {
    const int in = k == 0 ? spec_.n_input_frames : spec_.conv_block_channels[k - 1];
    const int out = spec_.conv_block_channels[k];
    const std::string base = "conv" + std::to_string(k + 1);
    auto& units = encoders_[k].units;
    units.emplace_back(base + ".0", in, out, slope);
    units.emplace_back(base + ".1", out, out, slope);
    units.emplace_back(base + ".2", out, out, slope);
  }
  bottleneck_.emplace_back("bottleneck.0", spec_.conv_block_channels[4], spec_.bottleneck_channels, slope);
  bottleneck_.emplace_back("bottleneck.1", spec_.bottleneck_channels, spec_.bottleneck_channels, slope);
  bottleneck_up_ = nn::UpUnit("bottleneck.up", spec_.bottleneck_channels, spec_.upsample_channels[0], slope);

  for (int j = 0; j < 5; ++j) {
    const int block = 5 - j;
    const std::string base = "dec" + std::to_string(block);
    Decoder& d = decoders_[j];
    const int width = spec_.decoder_conv_channels[j];
    d.skip_channels = spec_.decoder_input_channels[j] - spec_.upsample_channels[j];
    d.units.emplace_back(base + ".0", spec_.decoder_input_channels[j], width, slope);
    if (j < 4) {
      d.units.emplace_back(base + ".1", width, width, slope);
      d.up = nn::UpUnit(base + ".up", width, spec_.upsample_channels[j + 1], slope);
    }
  }
  head_ = nn::Conv2d("dec1.head", spec_.decoder_conv_channels[4], spec_.head_channels(), 3, 1);

  std::mt19937_64 rng(seed);
  for (auto& e : encoders_) {
    for (auto& u : e.units) u.init(rng);
  }
  for (auto& u : bottleneck_) u.init(rng);
  bottleneck_up_.init(rng);
  for (int j = 0; j < 5; ++j) {
    for (auto& u : decoders_[j].units) u.init(rng);
    if (j < 4) decoders_[j].up.init(rng);
  }
  head_.init(rng, 1.0f);
}

void Network::set_mode(Mode mode) {
  mode_ = mode;
  if (mode == Mode::Eval) clear_cache();
}

void Network::clear_cache() {
  for (auto& e : encoders_) {
    for (auto& u : e.units) u.clear_cache();
    e.pool.clear_cache();
  }
  for (auto& u : bottleneck_) u.clear_cache();
  bottleneck_up_.clear_cache();
  for (auto& d : decoders_) {
    for (auto& u : d.units) u.clear_cache();
    d.up.clear_cache();
  }
  head_.clear_cache();
  cached_ = false;
}

Tensor Network::forward(const Tensor& x) {
  if (x.c() != spec_.n_input_frames) {
    throw ShapeError("network expects " + std::to_string(spec_.n_input_frames) + " input frames, got " +
                     std::to_string(x.c()));
  }
  validate_resolution(x.w(), x.h());
  const bool training = mode_ == Mode::Train;
  trace_.clear();

  std::array<Tensor, 5> skips;
  Tensor cur = x;
  for (int k = 0; k < 5; ++k) {
    const Shape in = cur.shape();
    for (auto& u : encoders_[k].units) cur = u.forward(cur, training);
    skips[k] = cur;
    cur = encoders_[k].pool.forward(cur, training);
    trace_.push_back({"Conv" + std::to_string(k + 1), in, cur.shape()});
  }
  {
    const Shape in = cur.shape();
    for (auto& u : bottleneck_) cur = u.forward(cur, training);
    cur = bottleneck_up_.forward(cur, training);
    trace_.push_back({"Bottleneck", in, cur.shape()});
  }
  for (int j = 0; j < 5; ++j) {
    const int block = 5 - j;
    cur = nn::concat_channels(cur, skips[block - 1]);
    const Shape in = cur.shape();
    for (auto& u : decoders_[j].units) cur = u.forward(cur, training);
    if (j < 4) {
      cur = decoders_[j].up.forward(cur, training);
    } else {
      cur = head_.forward(cur, training);
    }
    trace_.push_back({"Dec" + std::to_string(block), in, cur.shape()});
  }
  cached_ = training;
  return cur;
}

void Network::backward(const Tensor& grad_output) {
  if (!cached_) throw StateError("backward requires a preceding train-mode forward");
  std::array<Tensor, 5> skip_grads;
  Tensor g = head_.backward(grad_output);
  for (int j = 4; j >= 0; --j) {
    if (j < 4) g = decoders_[j].up.backward(g);
    auto& units = decoders_[j].units;
    for (auto it = units.rbegin(); it != units.rend(); ++it) g = it->backward(g);
    Tensor up_grad;
    nn::split_channels(g, spec_.upsample_channels[j], up_grad, skip_grads[4 - j]);
    g = std::move(up_grad);
  }
  g = bottleneck_up_.backward(g);
  for (auto it = bottleneck_.rbegin(); it != bottleneck_.rend(); ++it) g = it->backward(g);
  for (int k = 4; k >= 0; --k) {
    g = encoders_[k].pool.backward(g);
    const Tensor& s = skip_grads[k];
    for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] += s.data()[i];
    auto& units = encoders_[k].units;
    for (int u = static_cast<int>(units.size()) - 1; u >= 0; --u) {
      const bool need_input = !(k == 0 && u == 0);
      g = units[u].backward(g, need_input);
    }
  }
}

void Network::zero_grad() {
  for (nn::Parameter* p : parameters()) {
    if (p->trainable) p->grad.fill(0.0f);
  }
}

std::vector<nn::Parameter*> Network::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& e : encoders_) {
    for (auto& u : e.units) u.collect(out);
  }
  for (auto& u : bottleneck_) u.collect(out);
  bottleneck_up_.collect(out);
  for (int j = 0; j < 5; ++j) {
    for (auto& u : decoders_[j].units) u.collect(out);
    if (j < 4) decoders_[j].up.collect(out);
  }
  head_.collect(out);
  return out;
}

std::vector<const nn::Parameter*> Network::parameters() const {
  auto params = const_cast<Network*>(this)->parameters();
  return {params.begin(), params.end()};
}

std::size_t Network::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const nn::Parameter* p : parameters()) {
    if (!trainable_only || p->trainable) n += p->value.numel();
  }
  return n;
}

void Network::replace_head(Head head, std::uint64_t seed) {
  spec_.head = head;
  head_ = nn::Conv2d("dec1.head", spec_.decoder_conv_channels[4], spec_.head_channels(), 3, 1);
  std::mt19937_64 rng(seed);
  head_.init(rng, 1.0f);
  cached_ = false;
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) { return Network(spec, seed); }

Network swap_head(const Network& net, std::uint64_t seed) {
  if (net.head() != Head::Interpolation) throw StateError("swap_head: network already has a flow head");
  Network out = net;
  out.clear_cache();
  out.replace_head(Head::Flow, seed);
  return out;
}

std::uint64_t parameter_checksum(const Network& net, bool include_head) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const nn::Parameter* p : net.parameters()) {
    if (!include_head && p->name.rfind("dec1.head.", 0) == 0) continue;
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), p->value.numel() * sizeof(float));
  }
  return h;
}

Image interpolate_color(Network& net, std::span<const Image> frames) {
  if (net.head() != Head::Interpolation) throw StateError("interpolate_color requires an interpolation head");
  if (static_cast<int>(frames.size()) != net.spec().n_input_frames) {
    throw ShapeError("interpolate_color: expected " + std::to_string(net.spec().n_input_frames) + " frames");
  }
  const Image& first = frames.front();
  for (const Image& f : frames) {
    if (!f.same_shape(first)) throw ShapeError("interpolate_color: frames differ in shape");
  }
  const Mode previous = net.mode();
  net.set_mode(Mode::Eval);
  Image out(first.channels, first.height, first.width);
  for (int c = 0; c < first.channels; ++c) {
    std::vector<Image> planes;
    planes.reserve(frames.size());
    for (const Image& f : frames) planes.push_back(f.channel(c));
    const NormalizedFrames norm = normalize_sample(planes);
    const int pw = (first.width + 31) / 32 * 32;
    const int ph = (first.height + 31) / 32 * 32;
    Tensor x(1, static_cast<int>(planes.size()), ph, pw);
    for (std::size_t i = 0; i < norm.frames.size(); ++i) {
      const Image padded = pad_to(norm.frames[i], pw, ph);
      std::memcpy(x.plane(0, static_cast<int>(i)), padded.data.data(), padded.plane_size() * sizeof(float));
    }
    const Tensor y = net.forward(x);
    float* dst = out.plane(c);
    for (int yy = 0; yy < first.height; ++yy) {
      for (int xx = 0; xx < first.width; ++xx) {
        dst[static_cast<std::size_t>(yy) * first.width + xx] =
            static_cast<float>(y.at(0, 0, yy, xx) * norm.stats.std + norm.stats.mean);
      }
    }
  }
  net.set_mode(previous);
  return out;
}

}  // namespace interflow
