#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "interflow/errors.hpp"

namespace interflow {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * static_cast<std::size_t>(h) * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

// Dense float32 tensor in NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(int n, int c, int h, int w, float fill = 0.0f) : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  // Start of channel plane (n, c).
  float* plane(int n, int c) { return data_.data() + offset(n, c); }
  const float* plane(int n, int c) const { return data_.data() + offset(n, c); }
  // Start of sample n.
  float* sample(int n) { return plane(n, 0); }
  const float* sample(int n) const { return plane(n, 0); }

  float& at(int n, int c, int y, int x) {
    return data_[offset(n, c) + static_cast<std::size_t>(y) * shape_.w + x];
  }
  float at(int n, int c, int y, int x) const {
    return data_[offset(n, c) + static_cast<std::size_t>(y) * shape_.w + x];
  }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape s) {
    if (s.numel() != data_.size()) throw ShapeError("reshape " + shape_.str() + " -> " + s.str());
    shape_ = s;
  }

 private:
  std::size_t offset(int n, int c) const {
    return (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  Shape shape_{};
  std::vector<float> data_;
};

}  // namespace interflow
