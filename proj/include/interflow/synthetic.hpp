#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "interflow/data.hpp"

namespace interflow {

// Moving textured layers with exact ground-truth flow. Layer 0 covers the
// whole frame; later layers are ellipses or rectangles drawn on top.
struct SyntheticConfig {
  int width = 64;
  int height = 32;
  int length = 16;
  int layers = 3;
  int sequences = 1;
  // Speed range in px/frame; directions are uniform.
  double speed_min = 0.0;
  double speed_max = 4.0;
  // Maximum constant acceleration magnitude in px/frame^2.
  double accel_max = 0.0;
  // Overrides the sampled velocity of every layer when set.
  std::optional<std::array<double, 2>> fixed_velocity;
  std::string corpus = "synthetic";

  void validate() const;
};

// Blob sigma is at most 3 px; contributions beyond 4 sigma are dropped.
inline constexpr double kBlobReach = 12.0;

struct Blob {
  double x = 0.0;
  double y = 0.0;
  double inv_two_sigma2 = 1.0;
  double amplitude = 0.0;
};

struct Wave {
  double fx = 0.0;
  double fy = 0.0;
  double phase = 0.0;
  double amplitude = 0.0;
};

struct SyntheticLayer {
  enum class Shape { Full, Ellipse, Rectangle };
  Shape shape = Shape::Full;
  double half_width = 0.0;
  double half_height = 0.0;
  // Position at frame 0, velocity (px/frame), acceleration (px/frame^2).
  std::array<double, 2> origin{0.0, 0.0};
  std::array<double, 2> velocity{0.0, 0.0};
  std::array<double, 2> acceleration{0.0, 0.0};
  double base = 0.5;
  std::vector<Wave> waves;
  std::vector<Blob> blobs;  // sorted by x

  std::array<double, 2> position(double t) const;
  bool covers(double x, double y, double t) const;
  // Intensity at layer-local coordinates.
  double texture(double lx, double ly) const;
};

SyntheticLayer random_layer(bool full_frame, const SyntheticConfig& cfg, std::mt19937_64& rng);

// Renders frames 0..length-1 and flows for each consecutive pair. A flow
// pixel is invalid when its layer is hidden by a higher layer in the next
// frame.
Sequence render_layers(const std::vector<SyntheticLayer>& layers, int width, int height, int length);

Sequence generate_synthetic_sequence(const SyntheticConfig& cfg, std::mt19937_64& rng);
std::vector<Sequence> generate_synthetic_corpus(const SyntheticConfig& cfg, std::uint64_t seed);

}  // namespace interflow
