#pragma once

// Trainable building blocks of the hourglass network. Each layer caches what
// it needs during a training-mode forward pass and accumulates parameter
// gradients in backward().

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "interflow/tensor.hpp"

namespace interflow::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // empty for non-trainable buffers
  bool trainable = true;
};

// 3x3 (or k x k) convolution, stride 1, implemented as im2col + GEMM.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int pad);

  // He-style fan-in initialization for a leaky ReLU with the given slope.
  void init(std::mt19937_64& rng, float negative_slope);
  Tensor forward(const Tensor& x, bool keep_input);
  // Returns dL/dx unless input_grad is false (then an empty tensor).
  Tensor backward(const Tensor& dy, bool input_grad = true);
  void clear_cache() { input_ = Tensor(); }
  void collect(std::vector<Parameter*>& out);

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int kernel() const { return k_; }

  Parameter weight;  // cout x cin x k x k
  Parameter bias;    // cout

 private:
  int cin_ = 0;
  int cout_ = 0;
  int k_ = 3;
  int pad_ = 1;
  Tensor input_;
};

// 2x upsampling transposed convolution: 4x4 kernel, stride 2, padding 1.
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, int in_channels, int out_channels);

  void init(std::mt19937_64& rng, float negative_slope);
  Tensor forward(const Tensor& x, bool keep_input);
  Tensor backward(const Tensor& dy);
  void clear_cache() { input_ = Tensor(); }
  void collect(std::vector<Parameter*>& out);

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

  Parameter weight;  // cin x cout x 4 x 4
  Parameter bias;    // cout

 private:
  int cin_ = 0;
  int cout_ = 0;
  Tensor input_;
};

class BatchNorm2d {
 public:
  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.1f;

  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels);

  // Training mode normalizes with batch statistics and updates the running
  // estimates; eval mode uses the running estimates only.
  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);
  void clear_cache() {
    xhat_ = Tensor();
    inv_std_.clear();
  }
  void collect(std::vector<Parameter*>& out);

  Parameter gamma;
  Parameter beta;
  Parameter running_mean;
  Parameter running_var;

 private:
  int channels_ = 0;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class MaxPool2 {
 public:
  Tensor forward(const Tensor& x, bool keep_indices);
  Tensor backward(const Tensor& dy) const;
  void clear_cache() { argmax_.clear(); }

 private:
  Shape input_shape_{};
  std::vector<std::uint8_t> argmax_;
};

// conv -> batch norm -> leaky ReLU
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(const std::string& name, int in_channels, int out_channels, float slope);

  void init(std::mt19937_64& rng) { conv.init(rng, slope_); }
  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy, bool input_grad = true);
  void clear_cache();
  void collect(std::vector<Parameter*>& out);

  Conv2d conv;
  BatchNorm2d bn;

 private:
  float slope_ = 0.1f;
  Tensor output_;
};

// transposed conv -> batch norm -> leaky ReLU
class UpUnit {
 public:
  UpUnit() = default;
  UpUnit(const std::string& name, int in_channels, int out_channels, float slope);

  void init(std::mt19937_64& rng) { up.init(rng, slope_); }
  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);
  void clear_cache();
  void collect(std::vector<Parameter*>& out);

  ConvTranspose2d up;
  BatchNorm2d bn;

 private:
  float slope_ = 0.1f;
  Tensor output_;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a gradient of concat_channels(a, b) back into its two parts.
void split_channels(const Tensor& g, int channels_a, Tensor& ga, Tensor& gb);

// Exposed for tests. `cols` is (channels*k*k) x ((row_end-row_begin)*out_w).
void im2col(const float* image, int channels, int height, int width, int kernel, int stride,
            int pad, int out_w, int row_begin, int row_end, float* cols);
// Scatter-adds columns back into `image` (inverse access pattern of im2col).
void col2im(const float* cols, int channels, int height, int width, int kernel, int stride,
            int pad, int out_w, int row_begin, int row_end, float* image);

}  // namespace interflow::nn
