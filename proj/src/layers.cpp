#include "interflow/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "interflow/kernels.hpp"

namespace interflow::nn {
namespace {

// Upper bound on the im2col scratch buffer (floats) before splitting the
// output into row chunks.
constexpr std::size_t kColsBudget = 1u << 18;

int rows_per_chunk(int rows, int out_w, int col_rows) {
  const std::size_t per_row = static_cast<std::size_t>(out_w) * col_rows;
  const int r = static_cast<int>(std::max<std::size_t>(1, kColsBudget / std::max<std::size_t>(1, per_row)));
  return std::min(rows, r);
}

void transpose(const float* src, int rows, int cols, int ld_src, float* dst) {
  for (int r = 0; r < rows; ++r) {
    const float* s = src + static_cast<std::ptrdiff_t>(r) * ld_src;
    for (int c = 0; c < cols; ++c) dst[static_cast<std::ptrdiff_t>(c) * rows + r] = s[c];
  }
}

void he_init(Tensor& w, int fan_in, float slope, std::mt19937_64& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + static_cast<double>(slope) * slope));
  std::normal_distribution<float> dist(0.0f, static_cast<float>(gain / std::sqrt(fan_in)));
  for (float& v : w.vec()) v = dist(rng);
}

Parameter make_param(const std::string& name, Shape shape, float fill, bool trainable) {
  Parameter p;
  p.name = name;
  p.value = Tensor(shape, fill);
  if (trainable) p.grad = Tensor(shape);
  p.trainable = trainable;
  return p;
}

void add_bias(Tensor& y, const Tensor& bias) {
  for (int n = 0; n < y.n(); ++n) {
    for (int c = 0; c < y.c(); ++c) {
      float* p = y.plane(n, c);
      const float b = bias.data()[c];
      for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += b;
    }
  }
}

void accumulate_bias_grad(const Tensor& dy, Tensor& grad) {
  for (int c = 0; c < dy.c(); ++c) {
    double s = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const float* p = dy.plane(n, c);
      for (std::size_t i = 0; i < dy.shape().plane(); ++i) s += p[i];
    }
    grad.data()[c] += static_cast<float>(s);
  }
}

}  // namespace

void im2col(const float* image, int channels, int height, int width, int kernel, int stride,
            int pad, int out_w, int row_begin, int row_end, float* cols) {
  const int nrows = row_end - row_begin;
  const std::size_t ncols = static_cast<std::size_t>(nrows) * out_w;
  for (int c = 0; c < channels; ++c) {
    const float* src = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        float* dst = cols + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * ncols;
        // Output columns whose input x stays inside the image.
        const int x_lo = std::clamp((pad - kx + stride - 1) / stride, 0, out_w);
        const int x_hi = std::clamp((width + pad - kx + stride - 1) / stride, x_lo, out_w);
        for (int oy = row_begin; oy < row_end; ++oy, dst += out_w) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) {
            std::fill_n(dst, out_w, 0.0f);
            continue;
          }
          const float* row = src + static_cast<std::size_t>(iy) * width;
          std::fill_n(dst, x_lo, 0.0f);
          if (stride == 1) {
            std::memcpy(dst + x_lo, row + x_lo - pad + kx, sizeof(float) * (x_hi - x_lo));
          } else {
            for (int ox = x_lo; ox < x_hi; ++ox) dst[ox] = row[ox * stride - pad + kx];
          }
          std::fill(dst + x_hi, dst + out_w, 0.0f);
        }
      }
    }
  }
}

void col2im(const float* cols, int channels, int height, int width, int kernel, int stride,
            int pad, int out_w, int row_begin, int row_end, float* image) {
  const int nrows = row_end - row_begin;
  const std::size_t ncols = static_cast<std::size_t>(nrows) * out_w;
  for (int c = 0; c < channels; ++c) {
    float* dst = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const float* src =
            cols + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * ncols;
        const int x_lo = std::clamp((pad - kx + stride - 1) / stride, 0, out_w);
        const int x_hi = std::clamp((width + pad - kx + stride - 1) / stride, x_lo, out_w);
        for (int oy = row_begin; oy < row_end; ++oy, src += out_w) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          float* row = dst + static_cast<std::size_t>(iy) * width;
          for (int ox = x_lo; ox < x_hi; ++ox) row[ox * stride - pad + kx] += src[ox];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int pad)
    : weight(make_param(name + ".weight", Shape{out_channels, in_channels, kernel, kernel}, 0.0f, true)),
      bias(make_param(name + ".bias", Shape{1, out_channels, 1, 1}, 0.0f, true)),
      cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      pad_(pad) {}

void Conv2d::init(std::mt19937_64& rng, float negative_slope) {
  he_init(weight.value, cin_ * k_ * k_, negative_slope, rng);
  bias.value.fill(0.0f);
}

Tensor Conv2d::forward(const Tensor& x, bool keep_input) {
  if (x.c() != cin_) {
    throw ShapeError(weight.name + ": expected " + std::to_string(cin_) + " input channels, got " +
                     std::to_string(x.c()));
  }
  const int h = x.h(), w = x.w();
  const int kk = cin_ * k_ * k_;
  Tensor y(x.n(), cout_, h, w);
  const int chunk = rows_per_chunk(h, w, kk);
  std::vector<float> cols(static_cast<std::size_t>(kk) * chunk * w);
  const auto& kt = kernels::active();
  for (int n = 0; n < x.n(); ++n) {
    for (int r0 = 0; r0 < h; r0 += chunk) {
      const int r1 = std::min(h, r0 + chunk);
      const int nc = (r1 - r0) * w;
      im2col(x.sample(n), cin_, h, w, k_, 1, pad_, w, r0, r1, cols.data());
      kt.gemm(cout_, nc, kk, weight.value.data(), kk, cols.data(), nc,
              y.sample(n) + static_cast<std::size_t>(r0) * w, h * w, false);
    }
  }
  add_bias(y, bias.value);
  if (keep_input) input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, bool input_grad) {
  if (input_.empty()) throw StateError(weight.name + ": backward without cached forward");
  const Tensor& x = input_;
  const int h = x.h(), w = x.w();
  const int kk = cin_ * k_ * k_;
  accumulate_bias_grad(dy, bias.grad);

  std::vector<float> wt(static_cast<std::size_t>(kk) * cout_);
  transpose(weight.value.data(), cout_, kk, kk, wt.data());

  Tensor dx;
  if (input_grad) dx = Tensor(x.shape());
  const int chunk = rows_per_chunk(h, w, kk);
  std::vector<float> cols(static_cast<std::size_t>(kk) * chunk * w);
  std::vector<float> cols_t(cols.size());
  const auto& kt = kernels::active();
  for (int n = 0; n < x.n(); ++n) {
    for (int r0 = 0; r0 < h; r0 += chunk) {
      const int r1 = std::min(h, r0 + chunk);
      const int nc = (r1 - r0) * w;
      const float* dyc = dy.sample(n) + static_cast<std::size_t>(r0) * w;
      im2col(x.sample(n), cin_, h, w, k_, 1, pad_, w, r0, r1, cols.data());
      transpose(cols.data(), kk, nc, nc, cols_t.data());
      kt.gemm(cout_, kk, nc, dyc, h * w, cols_t.data(), kk, weight.grad.data(), kk, true);
      if (input_grad) {
        kt.gemm(kk, nc, cout_, wt.data(), cout_, dyc, h * w, cols.data(), nc, false);
        col2im(cols.data(), cin_, h, w, k_, 1, pad_, w, r0, r1, dx.sample(n));
      }
    }
  }
  return dx;
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

namespace {
constexpr int kUpKernel = 4;
constexpr int kUpStride = 2;
constexpr int kUpPad = 1;
}  // namespace

ConvTranspose2d::ConvTranspose2d(const std::string& name, int in_channels, int out_channels)
    : weight(make_param(name + ".weight", Shape{in_channels, out_channels, kUpKernel, kUpKernel}, 0.0f, true)),
      bias(make_param(name + ".bias", Shape{1, out_channels, 1, 1}, 0.0f, true)),
      cin_(in_channels),
      cout_(out_channels) {}

void ConvTranspose2d::init(std::mt19937_64& rng, float negative_slope) {
  // Each output pixel receives 2x2 kernel taps per input channel.
  he_init(weight.value, cin_ * 4, negative_slope, rng);
  bias.value.fill(0.0f);
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool keep_input) {
  if (x.c() != cin_) {
    throw ShapeError(weight.name + ": expected " + std::to_string(cin_) + " input channels, got " +
                     std::to_string(x.c()));
  }
  const int h = x.h(), w = x.w();
  const int oh = 2 * h, ow = 2 * w;
  const int kk = cout_ * kUpKernel * kUpKernel;
  Tensor y(x.n(), cout_, oh, ow);

  std::vector<float> wt(static_cast<std::size_t>(kk) * cin_);
  transpose(weight.value.data(), cin_, kk, kk, wt.data());
  const int chunk = rows_per_chunk(h, w, kk);
  std::vector<float> cols(static_cast<std::size_t>(kk) * chunk * w);
  const auto& kt = kernels::active();
  for (int n = 0; n < x.n(); ++n) {
    for (int r0 = 0; r0 < h; r0 += chunk) {
      const int r1 = std::min(h, r0 + chunk);
      const int nc = (r1 - r0) * w;
      kt.gemm(kk, nc, cin_, wt.data(), cin_, x.sample(n) + static_cast<std::size_t>(r0) * w, h * w,
              cols.data(), nc, false);
      col2im(cols.data(), cout_, oh, ow, kUpKernel, kUpStride, kUpPad, w, r0, r1, y.sample(n));
    }
  }
  add_bias(y, bias.value);
  if (keep_input) input_ = x;
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
  if (input_.empty()) throw StateError(weight.name + ": backward without cached forward");
  const Tensor& x = input_;
  const int h = x.h(), w = x.w();
  const int oh = 2 * h, ow = 2 * w;
  const int kk = cout_ * kUpKernel * kUpKernel;
  accumulate_bias_grad(dy, bias.grad);

  Tensor dx(x.shape());
  const int chunk = rows_per_chunk(h, w, kk);
  std::vector<float> cols(static_cast<std::size_t>(kk) * chunk * w);
  std::vector<float> cols_t(cols.size());
  const auto& kt = kernels::active();
  for (int n = 0; n < x.n(); ++n) {
    for (int r0 = 0; r0 < h; r0 += chunk) {
      const int r1 = std::min(h, r0 + chunk);
      const int nc = (r1 - r0) * w;
      im2col(dy.sample(n), cout_, oh, ow, kUpKernel, kUpStride, kUpPad, w, r0, r1, cols.data());
      kt.gemm(cin_, nc, kk, weight.value.data(), kk, cols.data(), nc,
              dx.sample(n) + static_cast<std::size_t>(r0) * w, h * w, false);
      transpose(cols.data(), kk, nc, nc, cols_t.data());
      kt.gemm(cin_, kk, nc, x.sample(n) + static_cast<std::size_t>(r0) * w, h * w, cols_t.data(), kk,
              weight.grad.data(), kk, true);
    }
  }
  return dx;
}

void ConvTranspose2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(const std::string& name, int channels)
    : gamma(make_param(name + ".gamma", Shape{1, channels, 1, 1}, 1.0f, true)),
      beta(make_param(name + ".beta", Shape{1, channels, 1, 1}, 0.0f, true)),
      running_mean(make_param(name + ".running_mean", Shape{1, channels, 1, 1}, 0.0f, false)),
      running_var(make_param(name + ".running_var", Shape{1, channels, 1, 1}, 1.0f, false)),
      channels_(channels) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  if (x.c() != channels_) throw ShapeError(gamma.name + ": channel mismatch");
  const auto& kt = kernels::active();
  const std::size_t plane = x.shape().plane();
  Tensor y(x.shape());
  if (!training) {
    for (int c = 0; c < channels_; ++c) {
      const float inv = 1.0f / std::sqrt(running_var.value.data()[c] + kEps);
      const float scale = gamma.value.data()[c] * inv;
      const float shift = beta.value.data()[c] - running_mean.value.data()[c] * scale;
      for (int n = 0; n < x.n(); ++n) kt.scale_shift(plane, x.plane(n, c), scale, shift, y.plane(n, c));
    }
    return y;
  }

  const double count = static_cast<double>(x.n()) * plane;
  xhat_ = Tensor(x.shape());
  inv_std_.assign(channels_, 0.0f);
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int n = 0; n < x.n(); ++n) kt.sum_sumsq(plane, x.plane(n, c), &sum, &sumsq);
    const double mean = sum / count;
    const double var = std::max(0.0, sumsq / count - mean * mean);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
    inv_std_[c] = inv;
    const float g = gamma.value.data()[c];
    const float b = beta.value.data()[c];
    const float shift = static_cast<float>(-mean) * inv;
    for (int n = 0; n < x.n(); ++n) {
      kt.scale_shift(plane, x.plane(n, c), inv, shift, xhat_.plane(n, c));
      kt.scale_shift(plane, xhat_.plane(n, c), g, b, y.plane(n, c));
    }
    const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
    float& rm = running_mean.value.data()[c];
    float& rv = running_var.value.data()[c];
    rm = static_cast<float>((1.0 - kMomentum) * rm + kMomentum * mean);
    rv = static_cast<float>((1.0 - kMomentum) * rv + kMomentum * unbiased);
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  if (xhat_.empty()) throw StateError(gamma.name + ": backward without cached forward");
  const auto& kt = kernels::active();
  const std::size_t plane = dy.shape().plane();
  const double count = static_cast<double>(dy.n()) * plane;
  Tensor dx(dy.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) kt.sum_dot(plane, dy.plane(n, c), xhat_.plane(n, c), &sum_dy, &sum_dy_xhat);
    gamma.grad.data()[c] += static_cast<float>(sum_dy_xhat);
    beta.grad.data()[c] += static_cast<float>(sum_dy);
    const float k = gamma.value.data()[c] * inv_std_[c];
    const float a = static_cast<float>(-k * sum_dy_xhat / count);
    const float b = static_cast<float>(-k * sum_dy / count);
    for (int n = 0; n < dy.n(); ++n) {
      const float* g = dy.plane(n, c);
      const float* xh = xhat_.plane(n, c);
      float* d = dx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) d[i] = k * g[i] + a * xh[i] + b;
    }
  }
  return dx;
}

void BatchNorm2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// MaxPool2

Tensor MaxPool2::forward(const Tensor& x, bool keep_indices) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeError("max-pool input must have even size, got " + x.shape().str());
  const int oh = x.h() / 2, ow = x.w() / 2;
  Tensor y(x.n(), x.c(), oh, ow);
  if (keep_indices) {
    input_shape_ = x.shape();
    argmax_.assign(y.numel(), 0);
  }
  std::size_t idx = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      float* dst = y.plane(n, c);
      for (int oy = 0; oy < oh; ++oy) {
        const float* r0 = src + static_cast<std::size_t>(2 * oy) * x.w();
        const float* r1 = r0 + x.w();
        for (int ox = 0; ox < ow; ++ox, ++idx) {
          const float v[4] = {r0[2 * ox], r0[2 * ox + 1], r1[2 * ox], r1[2 * ox + 1]};
          std::uint8_t best = 0;
          for (std::uint8_t k = 1; k < 4; ++k) {
            if (v[k] > v[best]) best = k;
          }
          dst[static_cast<std::size_t>(oy) * ow + ox] = v[best];
          if (keep_indices) argmax_[idx] = best;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& dy) const {
  if (argmax_.size() != dy.numel()) throw StateError("max-pool backward without cached forward");
  Tensor dx(input_shape_);
  const int ow = dy.w();
  std::size_t idx = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const float* g = dy.plane(n, c);
      float* d = dx.plane(n, c);
      for (int oy = 0; oy < dy.h(); ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++idx) {
          const int k = argmax_[idx];
          const int iy = 2 * oy + k / 2, ix = 2 * ox + k % 2;
          d[static_cast<std::size_t>(iy) * dx.w() + ix] += g[static_cast<std::size_t>(oy) * ow + ox];
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Units

ConvUnit::ConvUnit(const std::string& name, int in_channels, int out_channels, float slope)
    : conv(name, in_channels, out_channels, 3, 1), bn(name + ".bn", out_channels), slope_(slope) {}

Tensor ConvUnit::forward(const Tensor& x, bool training) {
  Tensor y = bn.forward(conv.forward(x, training), training);
  kernels::active().leaky_relu_forward(y.numel(), y.data(), y.data(), slope_);
  if (training) output_ = y;
  return y;
}

Tensor ConvUnit::backward(const Tensor& dy, bool input_grad) {
  if (output_.empty()) throw StateError(conv.weight.name + ": backward without cached forward");
  Tensor g(dy.shape());
  kernels::active().leaky_relu_backward(dy.numel(), output_.data(), dy.data(), g.data(), slope_);
  return conv.backward(bn.backward(g), input_grad);
}

void ConvUnit::clear_cache() {
  conv.clear_cache();
  bn.clear_cache();
  output_ = Tensor();
}

void ConvUnit::collect(std::vector<Parameter*>& out) {
  conv.collect(out);
  bn.collect(out);
}

UpUnit::UpUnit(const std::string& name, int in_channels, int out_channels, float slope)
    : up(name, in_channels, out_channels), bn(name + ".bn", out_channels), slope_(slope) {}

Tensor UpUnit::forward(const Tensor& x, bool training) {
  Tensor y = bn.forward(up.forward(x, training), training);
  kernels::active().leaky_relu_forward(y.numel(), y.data(), y.data(), slope_);
  if (training) output_ = y;
  return y;
}

Tensor UpUnit::backward(const Tensor& dy) {
  if (output_.empty()) throw StateError(up.weight.name + ": backward without cached forward");
  Tensor g(dy.shape());
  kernels::active().leaky_relu_backward(dy.numel(), output_.data(), dy.data(), g.data(), slope_);
  return up.backward(bn.backward(g));
}

void UpUnit::clear_cache() {
  up.clear_cache();
  bn.clear_cache();
  output_ = Tensor();
}

void UpUnit::collect(std::vector<Parameter*>& out) {
  up.collect(out);
  bn.collect(out);
}

// ---------------------------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t sa = static_cast<std::size_t>(a.c()) * a.shape().plane();
  const std::size_t sb = static_cast<std::size_t>(b.c()) * b.shape().plane();
  for (int n = 0; n < a.n(); ++n) {
    std::memcpy(out.sample(n), a.sample(n), sa * sizeof(float));
    std::memcpy(out.sample(n) + sa, b.sample(n), sb * sizeof(float));
  }
  return out;
}

void split_channels(const Tensor& g, int channels_a, Tensor& ga, Tensor& gb) {
  ga = Tensor(g.n(), channels_a, g.h(), g.w());
  gb = Tensor(g.n(), g.c() - channels_a, g.h(), g.w());
  const std::size_t sa = static_cast<std::size_t>(channels_a) * g.shape().plane();
  const std::size_t sb = static_cast<std::size_t>(g.c() - channels_a) * g.shape().plane();
  for (int n = 0; n < g.n(); ++n) {
    std::memcpy(ga.sample(n), g.sample(n), sa * sizeof(float));
    std::memcpy(gb.sample(n), g.sample(n) + sa, sb * sizeof(float));
  }
}

}  // namespace interflow::nn
