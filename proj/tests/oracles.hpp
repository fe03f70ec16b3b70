#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. They share no code with the library.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "interflow/image.hpp"
#include "interflow/model.hpp"

namespace oracle {

// Sliding-window SSIM with an explicit 2-D Gaussian weight per position.
inline double ssim(const std::vector<float>& a, const std::vector<float>& b, int h, int w, double range = 1.0,
                   int win = 11, double sigma = 1.5) {
  std::vector<double> wts(static_cast<std::size_t>(win) * win);
  double total = 0.0;
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < win; ++j) {
      const double di = i - win / 2, dj = j - win / 2;
      wts[i * win + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      total += wts[i * win + j];
    }
  }
  for (double& x : wts) x /= total;
  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y + win <= h; ++y) {
    for (int x = 0; x + win <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          ma += wts[i * win + j] * a[(y + i) * w + x + j];
          mb += wts[i * win + j] * b[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double pa = a[(y + i) * w + x + j] - ma, pb = b[(y + i) * w + x + j] - mb;
          va += wts[i * win + j] * pa * pa;
          vb += wts[i * win + j] * pb * pb;
          cov += wts[i * win + j] * pa * pb;
        }
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / count;
}

inline double epe(const interflow::FlowField& f, const interflow::FlowField& gt) {
  double s = 0.0;
  int n = 0;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * gt.width + x;
      if (!gt.valid[i]) continue;
      s += std::sqrt(std::pow(double(f.u[i]) - gt.u[i], 2) + std::pow(double(f.v[i]) - gt.v[i], 2));
      ++n;
    }
  return s / n;
}

inline double fl_all(const interflow::FlowField& f, const interflow::FlowField& gt) {
  int bad = 0, n = 0;
  for (std::size_t i = 0; i < gt.u.size(); ++i) {
    if (!gt.valid[i]) continue;
    const double err = std::hypot(double(f.u[i]) - gt.u[i], double(f.v[i]) - gt.v[i]);
    const double mag = std::hypot(double(gt.u[i]), double(gt.v[i]));
    if (err > 3.0 && err > 0.05 * mag) ++bad;
    ++n;
  }
  return 100.0 * bad / n;
}

inline double psnr(const interflow::Image& a, const interflow::Image& b) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) mse += std::pow(double(a.data[i]) - b.data[i], 2);
  mse /= a.data.size();
  return 10.0 * std::log10(1.0 / mse);
}

// Interpolation samples by exhaustive search over (t, s).
inline int interpolation_sample_count(int length) {
  int n = 0;
  for (int s = 1; s <= 2; ++s)
    for (int t = 0; t < length; ++t)
      if (t - 3 * s >= 0 && t + 3 * s < length) ++n;
  return n;
}

// Trainable parameter count of the hourglass net derived from its layer list:
// 3x3 convs (weights + bias), batch-norm gamma/beta after every conv and
// transposed conv, 4x4 transposed convs (weights + bias), and the head conv.
inline std::size_t parameter_count(const interflow::NetworkSpec& s) {
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + cout; };
  auto bn = [](std::size_t c) { return 2 * c; };
  std::size_t total = 0;
  std::size_t cin = s.n_input_frames;
  for (int b = 0; b < 5; ++b) {
    for (int u = 0; u < 3; ++u) {
      total += conv(cin, s.conv_block_channels[b], 3) + bn(s.conv_block_channels[b]);
      cin = s.conv_block_channels[b];
    }
  }
  for (int u = 0; u < 2; ++u) {
    total += conv(cin, s.bottleneck_channels, 3) + bn(s.bottleneck_channels);
    cin = s.bottleneck_channels;
  }
  total += conv(cin, s.upsample_channels[0], 4) + bn(s.upsample_channels[0]);
  for (int d = 0; d < 5; ++d) {
    cin = s.decoder_input_channels[d];
    const int units = d == 4 ? 1 : 2;
    for (int u = 0; u < units; ++u) {
      total += conv(cin, s.decoder_conv_channels[d], 3) + bn(s.decoder_conv_channels[d]);
      cin = s.decoder_conv_channels[d];
    }
    if (d < 4) total += conv(cin, s.upsample_channels[d + 1], 4) + bn(s.upsample_channels[d + 1]);
  }
  total += conv(cin, s.head == interflow::Head::Flow ? 2 : 1, 3);
  return total;
}

// Central finite differences of f at x, component i.
inline double central_difference(const std::function<double(const std::vector<float>&)>& f, std::vector<float> x,
                                 std::size_t i, float step) {
  const float orig = x[i];
  x[i] = orig + step;
  const double hi = f(x);
  x[i] = orig - step;
  const double lo = f(x);
  return (hi - lo) / (2.0 * static_cast<double>(step));
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace oracle
