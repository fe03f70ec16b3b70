#include "interflow/normalize.hpp"

#include <cmath>

namespace interflow {

NormStats compute_stats(std::span<const Image> frames) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const Image& f : frames) {
    for (float v : f.data) sum += v;
    count += f.data.size();
  }
  if (count == 0) throw ShapeError("normalize: no pixels");
  NormStats s;
  s.mean = sum / static_cast<double>(count);
  // Two-pass variance.
  double var = 0.0;
  for (const Image& f : frames) {
    for (float v : f.data) {
      const double d = v - s.mean;
      var += d * d;
    }
  }
  s.std = std::sqrt(var / static_cast<double>(count));
  if (!(s.std >= kNormEpsilon)) {
    s.std = kNormEpsilon;
    s.degenerate = true;
  }
  return s;
}

Image apply_normalization(const Image& img, const NormStats& stats) {
  Image out = img;
  for (float& v : out.data) v = static_cast<float>((v - stats.mean) / stats.std);
  return out;
}

Image denormalize(const Image& img, const NormStats& stats) {
  Image out = img;
  for (float& v : out.data) v = static_cast<float>(v * stats.std + stats.mean);
  return out;
}

NormalizedFrames normalize_sample(std::span<const Image> frames) {
  NormalizedFrames out;
  out.stats = compute_stats(frames);
  out.frames.reserve(frames.size());
  for (const Image& f : frames) out.frames.push_back(apply_normalization(f, out.stats));
  return out;
}

}  // namespace interflow
