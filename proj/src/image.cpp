#include "interflow/image.hpp"

#include <algorithm>
#include <cstring>

#include <opencv2/imgproc.hpp>

namespace interflow {
namespace {

cv::Mat wrap(const float* data, int height, int width) {
  return cv::Mat(height, width, CV_32F, const_cast<float*>(data));
}

void resize_plane(const float* src, int sh, int sw, float* dst, int dh, int dw) {
  cv::Mat out(dh, dw, CV_32F, dst);
  cv::resize(wrap(src, sh, sw), out, cv::Size(dw, dh), 0, 0, cv::INTER_LINEAR);
}

void check_crop(int x0, int y0, int width, int height, int src_w, int src_h) {
  if (x0 < 0 || y0 < 0 || width <= 0 || height <= 0 || x0 + width > src_w || y0 + height > src_h) {
    throw ShapeError("crop window outside source");
  }
}

}  // namespace

Image Image::channel(int c) const {
  Image out(1, height, width);
  std::memcpy(out.data.data(), plane(c), plane_size() * sizeof(float));
  return out;
}

std::size_t FlowField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

Image to_gray(const Image& rgb) {
  if (rgb.channels == 1) return rgb;
  if (rgb.channels != 3) throw ShapeError("to_gray: expected 1 or 3 channels");
  Image out(1, rgb.height, rgb.width);
  const float* r = rgb.plane(0);
  const float* g = rgb.plane(1);
  const float* b = rgb.plane(2);
  for (std::size_t i = 0; i < out.plane_size(); ++i) out.data[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (img.width == width && img.height == height) return img;
  Image out(img.channels, height, width);
  for (int c = 0; c < img.channels; ++c) resize_plane(img.plane(c), img.height, img.width, out.plane(c), height, width);
  return out;
}

Image crop(const Image& img, int x0, int y0, int width, int height) {
  check_crop(x0, y0, width, height, img.width, img.height);
  Image out(img.channels, height, width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      std::memcpy(&out.at(c, y, 0), img.plane(c) + static_cast<std::size_t>(y0 + y) * img.width + x0, sizeof(float) * width);
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      float* row = &out.at(c, y, 0);
      std::reverse(row, row + img.width);
    }
  }
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      std::memcpy(&out.at(c, y, 0), img.plane(c) + static_cast<std::size_t>(img.height - 1 - y) * img.width, sizeof(float) * img.width);
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& f, int width, int height) {
  if (f.width == width && f.height == height) return f;
  FlowField out(height, width);
  resize_plane(f.u.data(), f.height, f.width, out.u.data(), height, width);
  resize_plane(f.v.data(), f.height, f.width, out.v.data(), height, width);
  const float sx = static_cast<float>(width) / f.width;
  const float sy = static_cast<float>(height) / f.height;
  for (float& u : out.u) u *= sx;
  for (float& v : out.v) v *= sy;
  cv::Mat mask_in(f.height, f.width, CV_8U, const_cast<std::uint8_t*>(f.valid.data()));
  cv::Mat mask_out(height, width, CV_8U, out.valid.data());
  cv::resize(mask_in, mask_out, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  return out;
}

FlowField crop_flow(const FlowField& f, int x0, int y0, int width, int height) {
  check_crop(x0, y0, width, height, f.width, f.height);
  FlowField out(height, width);
  for (int y = 0; y < height; ++y) {
    const std::size_t s = static_cast<std::size_t>(y0 + y) * f.width + x0;
    const std::size_t d = static_cast<std::size_t>(y) * width;
    std::memcpy(&out.u[d], &f.u[s], sizeof(float) * width);
    std::memcpy(&out.v[d], &f.v[s], sizeof(float) * width);
    std::memcpy(&out.valid[d], &f.valid[s], width);
  }
  return out;
}

FlowField flip_flow_horizontal(const FlowField& f) {
  FlowField out = f;
  for (int y = 0; y < f.height; ++y) {
    const std::size_t r = static_cast<std::size_t>(y) * f.width;
    std::reverse(out.u.begin() + r, out.u.begin() + r + f.width);
    std::reverse(out.v.begin() + r, out.v.begin() + r + f.width);
    std::reverse(out.valid.begin() + r, out.valid.begin() + r + f.width);
  }
  for (float& u : out.u) u = -u;
  return out;
}

FlowField flip_flow_vertical(const FlowField& f) {
  FlowField out(f.height, f.width);
  for (int y = 0; y < f.height; ++y) {
    const std::size_t s = static_cast<std::size_t>(f.height - 1 - y) * f.width;
    const std::size_t d = static_cast<std::size_t>(y) * f.width;
    std::memcpy(&out.u[d], &f.u[s], sizeof(float) * f.width);
    std::memcpy(&out.v[d], &f.v[s], sizeof(float) * f.width);
    std::memcpy(&out.valid[d], &f.valid[s], f.width);
  }
  for (float& v : out.v) v = -v;
  return out;
}

Image pad_to(const Image& img, int width, int height) {
  if (width < img.width || height < img.height) throw ShapeError("pad_to: target smaller than image");
  if (width == img.width && height == img.height) return img;
  Image out(img.channels, height, width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = std::min(y, img.height - 1);
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, sy, std::min(x, img.width - 1));
    }
  }
  return out;
}

}  // namespace interflow
