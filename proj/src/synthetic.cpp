#include "interflow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace interflow {

void SyntheticConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("synthetic: resolution must be positive");
  if (length < 2) throw ConfigError("synthetic: sequences need at least two frames");
  if (layers < 0) throw ConfigError("synthetic: negative layer count");
  if (sequences < 1) throw ConfigError("synthetic: need at least one sequence");
  if (speed_min < 0.0 || speed_max < speed_min) throw ConfigError("synthetic: invalid speed range");
  if (accel_max < 0.0) throw ConfigError("synthetic: negative acceleration bound");
}

std::array<double, 2> SyntheticLayer::position(double t) const {
  return {origin[0] + velocity[0] * t + 0.5 * acceleration[0] * t * t,
          origin[1] + velocity[1] * t + 0.5 * acceleration[1] * t * t};
}

bool SyntheticLayer::covers(double x, double y, double t) const {
  if (shape == Shape::Full) return true;
  const auto p = position(t);
  const double dx = (x - p[0]) / half_width;
  const double dy = (y - p[1]) / half_height;
  if (shape == Shape::Ellipse) return dx * dx + dy * dy <= 1.0;
  return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
}

double SyntheticLayer::texture(double lx, double ly) const {
  double v = base;
  for (const auto& w : waves) v += w.amplitude * std::sin(2.0 * std::numbers::pi * (w.fx * lx + w.fy * ly) + w.phase);
  auto it = std::lower_bound(blobs.begin(), blobs.end(), lx - kBlobReach,
                             [](const Blob& b, double x) { return b.x < x; });
  for (; it != blobs.end() && it->x <= lx + kBlobReach; ++it) {
    const double dx = lx - it->x, dy = ly - it->y;
    const double e = (dx * dx + dy * dy) * it->inv_two_sigma2;
    if (e < 8.0) v += it->amplitude * std::exp(-e);
  }
  return std::clamp(v, 0.0, 1.0);
}

namespace {

// Largest distance a layer can travel within one sequence.
double reach_of(const SyntheticConfig& cfg) {
  const double n = cfg.length;
  double speed = cfg.speed_max;
  if (cfg.fixed_velocity) speed = std::max(speed, std::hypot((*cfg.fixed_velocity)[0], (*cfg.fixed_velocity)[1]));
  return speed * n + 0.5 * cfg.accel_max * n * n + 8.0;
}

}  // namespace

SyntheticLayer random_layer(bool full_frame, const SyntheticConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  SyntheticLayer layer;
  const double w = cfg.width, h = cfg.height;
  if (full_frame) {
    layer.shape = SyntheticLayer::Shape::Full;
  } else {
    layer.shape = u01(rng) < 0.5 ? SyntheticLayer::Shape::Ellipse : SyntheticLayer::Shape::Rectangle;
    const double s = std::min(w, h);
    layer.half_width = uniform(0.15, 0.4) * s;
    layer.half_height = uniform(0.15, 0.4) * s;
    layer.origin = {uniform(0.0, w), uniform(0.0, h)};
  }
  if (cfg.fixed_velocity) {
    layer.velocity = *cfg.fixed_velocity;
  } else {
    const double angle = uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = uniform(cfg.speed_min, cfg.speed_max);
    layer.velocity = {speed * std::cos(angle), speed * std::sin(angle)};
  }
  if (cfg.accel_max > 0.0) {
    const double angle = uniform(0.0, 2.0 * std::numbers::pi);
    const double mag = uniform(0.0, cfg.accel_max);
    layer.acceleration = {mag * std::cos(angle), mag * std::sin(angle)};
  }
  layer.base = uniform(0.25, 0.75);
  const int n_waves = 6;
  for (int i = 0; i < n_waves; ++i) {
    const double f = uniform(0.02, 0.14);
    const double a = uniform(0.0, 2.0 * std::numbers::pi);
    layer.waves.push_back({f * std::cos(a), f * std::sin(a), uniform(0.0, 2.0 * std::numbers::pi), uniform(0.02, 0.08)});
  }
  double x0 = -reach_of(cfg), x1 = w + reach_of(cfg), y0 = -reach_of(cfg), y1 = h + reach_of(cfg);
  if (!full_frame) {
    x0 = -layer.half_width;
    x1 = layer.half_width;
    y0 = -layer.half_height;
    y1 = layer.half_height;
  }
  const int n_blobs = std::max(4, static_cast<int>(std::ceil((x1 - x0) * (y1 - y0) / 40.0)));
  for (int i = 0; i < n_blobs; ++i) {
    Blob b;
    b.x = uniform(x0, x1);
    b.y = uniform(y0, y1);
    const double sigma = uniform(1.0, 3.0);
    b.inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    b.amplitude = uniform(-0.3, 0.3);
    layer.blobs.push_back(b);
  }
  std::sort(layer.blobs.begin(), layer.blobs.end(), [](const Blob& a, const Blob& b) { return a.x < b.x; });
  return layer;
}

Sequence render_layers(const std::vector<SyntheticLayer>& layers, int width, int height, int length) {
  Sequence seq;
  const int n = static_cast<int>(layers.size());
  auto top = [&](double x, double y, double t) {
    for (int k = n - 1; k >= 0; --k) {
      if (layers[k].covers(x, y, t)) return k;
    }
    return -1;
  };
  for (int t = 0; t < length; ++t) {
    Image frame(1, height, width, 0.5f);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const int k = top(x, y, t);
        if (k < 0) continue;
        const auto p = layers[k].position(t);
        frame.at(0, y, x) = static_cast<float>(layers[k].texture(x - p[0], y - p[1]));
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  for (int t = 0; t + 1 < length; ++t) {
    FlowField flow(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        const int k = top(x, y, t);
        if (k < 0) continue;
        const auto p0 = layers[k].position(t);
        const auto p1 = layers[k].position(t + 1);
        const double du = p1[0] - p0[0], dv = p1[1] - p0[1];
        flow.u[i] = static_cast<float>(du);
        flow.v[i] = static_cast<float>(dv);
        flow.valid[i] = top(x + du, y + dv, t + 1) == k ? 1 : 0;
      }
    }
    seq.flows.push_back(std::move(flow));
  }
  return seq;
}

Sequence generate_synthetic_sequence(const SyntheticConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::vector<SyntheticLayer> layers;
  for (int k = 0; k < cfg.layers; ++k) layers.push_back(random_layer(k == 0, cfg, rng));
  Sequence seq = render_layers(layers, cfg.width, cfg.height, cfg.length);
  seq.corpus = cfg.corpus;
  return seq;
}

std::vector<Sequence> generate_synthetic_corpus(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<Sequence> out;
  for (int s = 0; s < cfg.sequences; ++s) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(s)));
    Sequence seq = generate_synthetic_sequence(cfg, rng);
    char id[32];
    std::snprintf(id, sizeof id, "seq_%04d", s);
    seq.id = id;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace interflow
