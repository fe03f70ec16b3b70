#include <algorithm>
#include <atomic>
#include <cmath>

#include <spdlog/spdlog.h>

#include "interflow/data.hpp"

namespace interflow {
namespace {

struct Geometry {
  double prescale = 1.0;
  int width = 0;   // source size after prescaling
  int height = 0;
  int max_crop = 0;
};

Geometry geometry(int src_width, int src_height, const AugmentConfig& cfg) {
  if (src_width <= 0 || src_height <= 0) throw ShapeError("augmentation: empty source frame");
  if (cfg.out_width <= 0 || cfg.out_height <= 0) throw ConfigError("augmentation: output size must be positive");
  Geometry g;
  g.width = src_width;
  g.height = src_height;
  auto max_crop = [&](int w, int h) {
    return std::min<long>(w, static_cast<long>(h) * cfg.out_width / cfg.out_height);
  };
  g.max_crop = static_cast<int>(max_crop(src_width, src_height));
  if (g.max_crop < cfg.out_width) {
    g.prescale = static_cast<double>(cfg.out_width) / g.max_crop;
    g.width = static_cast<int>(std::ceil(src_width * g.prescale - 1e-9));
    g.height = static_cast<int>(std::ceil(src_height * g.prescale - 1e-9));
    g.max_crop = std::max<int>(cfg.out_width, static_cast<int>(max_crop(g.width, g.height)));
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      spdlog::warn("source {}x{} is smaller than the {}x{} crop; upscaling by {:.3f} before cropping", src_width,
                   src_height, cfg.out_width, cfg.out_height, g.prescale);
    }
  }
  return g;
}

int crop_height_for(int crop_width, const AugmentConfig& cfg, int limit) {
  const int h = static_cast<int>(std::lround(static_cast<double>(crop_width) * cfg.out_height / cfg.out_width));
  return std::clamp(h, 1, limit);
}

Image prescaled(const Image& img, const AugmentRecord& rec) {
  if (rec.prescale == 1.0) return img;
  return resize_bilinear(img, static_cast<int>(std::ceil(img.width * rec.prescale - 1e-9)),
                         static_cast<int>(std::ceil(img.height * rec.prescale - 1e-9)));
}

}  // namespace

AugmentRecord identity_augmentation(int src_width, int src_height, const AugmentConfig& cfg) {
  const Geometry g = geometry(src_width, src_height, cfg);
  AugmentRecord rec;
  rec.prescale = g.prescale;
  rec.crop_width = g.max_crop;
  rec.crop_height = crop_height_for(g.max_crop, cfg, g.height);
  rec.crop_x = (g.width - rec.crop_width) / 2;
  rec.crop_y = (g.height - rec.crop_height) / 2;
  return rec;
}

AugmentRecord sample_augmentation(int src_width, int src_height, SampleKind kind, const AugmentConfig& cfg,
                                  std::mt19937_64& rng) {
  const Geometry g = geometry(src_width, src_height, cfg);
  AugmentRecord rec;
  rec.prescale = g.prescale;
  rec.crop_width = g.max_crop;
  if (cfg.random_crop) {
    std::uniform_int_distribution<int> w(cfg.out_width, g.max_crop);
    rec.crop_width = w(rng);
  }
  rec.crop_height = crop_height_for(rec.crop_width, cfg, g.height);
  if (cfg.random_crop) {
    rec.crop_x = std::uniform_int_distribution<int>(0, g.width - rec.crop_width)(rng);
    rec.crop_y = std::uniform_int_distribution<int>(0, g.height - rec.crop_height)(rng);
  } else {
    rec.crop_x = (g.width - rec.crop_width) / 2;
    rec.crop_y = (g.height - rec.crop_height) / 2;
  }
  std::bernoulli_distribution coin(0.5);
  rec.hflip = cfg.hflip && coin(rng);
  rec.vflip = cfg.vflip && coin(rng);
  rec.reversed = kind == SampleKind::Interpolation && cfg.temporal_reversal && coin(rng);
  return rec;
}

Image apply_augmentation(const Image& frame, const AugmentRecord& rec, const AugmentConfig& cfg) {
  Image out = crop(prescaled(frame, rec), rec.crop_x, rec.crop_y, rec.crop_width, rec.crop_height);
  out = resize_bilinear(out, cfg.out_width, cfg.out_height);
  if (rec.hflip) out = flip_horizontal(out);
  if (rec.vflip) out = flip_vertical(out);
  return out;
}

std::vector<Image> apply_augmentation(const std::vector<Image>& frames, const AugmentRecord& rec,
                                      const AugmentConfig& cfg) {
  std::vector<Image> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(apply_augmentation(f, rec, cfg));
  if (rec.reversed) std::reverse(out.begin(), out.end());
  return out;
}

FlowField apply_augmentation(const FlowField& flow, const AugmentRecord& rec, const AugmentConfig& cfg) {
  FlowField f = flow;
  if (rec.prescale != 1.0) {
    f = resize_flow(f, static_cast<int>(std::ceil(flow.width * rec.prescale - 1e-9)),
                    static_cast<int>(std::ceil(flow.height * rec.prescale - 1e-9)));
  }
  f = crop_flow(f, rec.crop_x, rec.crop_y, rec.crop_width, rec.crop_height);
  f = resize_flow(f, cfg.out_width, cfg.out_height);
  if (rec.hflip) f = flip_flow_horizontal(f);
  if (rec.vflip) f = flip_flow_vertical(f);
  return f;
}

TrainingSample make_sample(const Sequence& seq, const SampleSpec& spec, const AugmentRecord& rec,
                           const AugmentConfig& cfg) {
  const int len = seq.length();
  const auto idx = spec.input_frames(len);
  for (int i : idx) {
    if (i < 0 || i >= len) {
      throw DataError("sample at t=" + std::to_string(spec.center) + " reads frame " + std::to_string(i) +
                      " outside sequence '" + seq.id + "' of length " + std::to_string(len));
    }
  }
  TrainingSample s;
  s.spec = spec;
  s.augmentation = rec;
  std::vector<Image> raw;
  for (int i : idx) raw.push_back(seq.frames[i]);
  if (spec.kind == SampleKind::Flow) s.augmentation.reversed = false;
  auto frames = apply_augmentation(raw, s.augmentation, cfg);
  auto norm = normalize_sample(frames);
  s.inputs = std::move(norm.frames);
  s.stats = norm.stats;
  if (spec.kind == SampleKind::Interpolation) {
    s.target = apply_normalization(apply_augmentation(seq.frames.at(spec.center), s.augmentation, cfg), s.stats);
  } else {
    if (spec.center + 1 >= len || static_cast<std::size_t>(spec.center) >= seq.flows.size()) {
      throw DataError("no ground-truth flow for pair " + std::to_string(spec.center) + " of '" + seq.id + "'");
    }
    s.flow = apply_augmentation(seq.flows[spec.center], s.augmentation, cfg);
  }
  return s;
}

TrainingSample augment_interpolation(const Sequence& seq, const SampleSpec& spec, const AugmentConfig& cfg,
                                     std::mt19937_64& rng) {
  if (spec.kind != SampleKind::Interpolation) throw StateError("augment_interpolation on a flow sample");
  const Image& f = seq.frames.at(spec.center);
  return make_sample(seq, spec, sample_augmentation(f.width, f.height, spec.kind, cfg, rng), cfg);
}

TrainingSample augment_flow(const Sequence& seq, const SampleSpec& spec, const AugmentConfig& cfg,
                            std::mt19937_64& rng) {
  if (spec.kind != SampleKind::Flow) throw StateError("augment_flow on an interpolation sample");
  const Image& f = seq.frames.at(spec.center);
  return make_sample(seq, spec, sample_augmentation(f.width, f.height, spec.kind, cfg, rng), cfg);
}

}  // namespace interflow
