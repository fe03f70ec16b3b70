#pragma once

#include <span>
#include <vector>

#include "interflow/image.hpp"

namespace interflow {

// Standard deviation floor, in intensity units.
inline constexpr double kNormEpsilon = 1e-6;

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  bool degenerate = false;  // std fell below kNormEpsilon and was clamped
};

struct NormalizedFrames {
  std::vector<Image> frames;
  NormStats stats;
};

// Joint zero-mean / unit-std normalization over all pixels of all frames.
NormStats compute_stats(std::span<const Image> frames);
NormalizedFrames normalize_sample(std::span<const Image> frames);
Image apply_normalization(const Image& img, const NormStats& stats);
Image denormalize(const Image& img, const NormStats& stats);

}  // namespace interflow
