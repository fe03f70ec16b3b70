#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "interflow/image.hpp"

namespace interflow::flowio {

// Middlebury .flo: float32 tag 202021.25 ("PIEH"), int32 width, int32
// height, then row-major interleaved float32 (u, v). Little-endian.
inline constexpr float kFloTag = 202021.25f;
inline constexpr std::size_t kFloHeaderBytes = 12;

std::vector<std::uint8_t> encode_flo(const FlowField& flow);
// The returned field is valid everywhere (the format carries no mask).
FlowField decode_flo(std::span<const std::uint8_t> bytes);
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

// KITTI 16-bit PNG: channel value = component * 64 + 2^15, third channel
// is the validity flag. Representable range is (-512, 512) px.
std::uint16_t kitti_encode(float component, bool* clamped = nullptr);
float kitti_decode(std::uint16_t stored);
// Returns the number of clamped components.
std::size_t write_kitti_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_kitti_flow(const std::filesystem::path& path);

// Color-wheel rendering: hue = direction, saturation = magnitude / max.
// max_magnitude <= 0 selects the 99th percentile of valid magnitudes.
// Invalid pixels are black. Output is RGB in [0, 1].
Image flow_to_color(const FlowField& flow, double max_magnitude = 0.0);

// 8/16-bit images to float in [0, 1]; 3-channel results are RGB.
Image read_image(const std::filesystem::path& path);
// Writes an 8-bit PNG/JPEG (by extension) from a 1- or 3-channel image.
void write_image(const std::filesystem::path& path, const Image& img);
// Validity mask as an 8-bit image (255 = valid).
void write_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& valid, int width, int height);
std::vector<std::uint8_t> read_mask(const std::filesystem::path& path, int width, int height);

}  // namespace interflow::flowio
