#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "interflow/errors.hpp"

namespace interflow {

// Planar float image (channels x height x width). Frames are grayscale
// (one channel) with intensities in [0, 1] unless stated otherwise.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  float* plane(int c) { return data.data() + c * plane_size(); }
  const float* plane(int c) const { return data.data() + c * plane_size(); }
  float& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[c * plane_size() + static_cast<std::size_t>(y) * width + x];
  }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  Image channel(int c) const;
};

// Dense displacement field in pixels. u is horizontal (+x right), v vertical
// (+y down). Pixel p in the first frame corresponds to p + (u, v) in the
// second.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> u;
  std::vector<float> v;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int h, int w, float fu = 0.0f, float fv = 0.0f)
      : height(h),
        width(w),
        u(static_cast<std::size_t>(h) * w, fu),
        v(static_cast<std::size_t>(h) * w, fv),
        valid(static_cast<std::size_t>(h) * w, 1) {}

  std::size_t size() const { return u.size(); }
  std::size_t valid_count() const;
  bool same_shape(const FlowField& o) const { return height == o.height && width == o.width; }
};

// ITU-R BT.601 luma of a 3-channel RGB image; 1-channel images are copied.
Image to_gray(const Image& rgb);

// Bilinear resize (pixel-center aligned).
Image resize_bilinear(const Image& img, int width, int height);
Image crop(const Image& img, int x0, int y0, int width, int height);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

// Flow variants: resizing rescales the vectors by the size ratios, flips
// negate the mirrored component. The validity mask uses nearest sampling.
FlowField resize_flow(const FlowField& f, int width, int height);
FlowField crop_flow(const FlowField& f, int x0, int y0, int width, int height);
FlowField flip_flow_horizontal(const FlowField& f);
FlowField flip_flow_vertical(const FlowField& f);

// Edge-replicating pad on the right/bottom.
Image pad_to(const Image& img, int width, int height);

}  // namespace interflow
