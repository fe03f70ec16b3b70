#include "interflow/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace interflow::metrics {
namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": image shapes differ");
}

void check_flow(const FlowField& f, const FlowField& gt) {
  if (!f.same_shape(gt)) throw ShapeError("flow shapes differ");
  if (gt.valid_count() == 0) throw DataError("ground truth has no valid pixels");
}

// Valid (no padding) separable filtering: src h x w -> dst (h-k+1) x (w-k+1).
void filter_valid(const double* src, int h, int w, const std::vector<double>& g, double* tmp, double* dst) {
  const int k = static_cast<int>(g.size());
  const int ow = w - k + 1, oh = h - k + 1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += g[t] * src[y * w + x + t];
      tmp[y * ow + x] = s;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += g[t] * tmp[(y + t) * ow + x];
      dst[y * ow + x] = s;
    }
  }
}

// Adjoint of filter_valid: src (h-k+1) x (w-k+1) -> dst h x w.
void filter_valid_adjoint(const double* src, int h, int w, const std::vector<double>& g, double* tmp, double* dst) {
  const int k = static_cast<int>(g.size());
  const int ow = w - k + 1, oh = h - k + 1;
  std::fill(tmp, tmp + static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = src[y * ow + x];
      for (int t = 0; t < k; ++t) tmp[(y + t) * ow + x] += g[t] * v;
    }
  }
  std::fill(dst, dst + static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[y * ow + x];
      for (int t = 0; t < k; ++t) dst[y * w + x + t] += g[t] * v;
    }
  }
}

}  // namespace

void SsimConfig::validate() const {
  if (window < 3 || window % 2 == 0) throw ConfigError("SSIM window must be odd and >= 3");
  if (!(sigma > 0.0)) throw ConfigError("SSIM sigma must be positive");
  if (!(c1() > 0.0) || !(c2() > 0.0)) throw ConfigError("SSIM constants must be positive");
}

std::vector<double> gaussian_window(const SsimConfig& cfg) {
  std::vector<double> g(cfg.window);
  const int r = cfg.window / 2;
  double sum = 0.0;
  for (int i = 0; i < cfg.window; ++i) {
    const double d = i - r;
    g[i] = std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

double ssim_plane(const float* a, const float* b, int height, int width, const SsimConfig& cfg, float* grad_a) {
  cfg.validate();
  if (height < cfg.window || width < cfg.window) {
    throw ShapeError("SSIM window " + std::to_string(cfg.window) + " larger than image " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
  const auto g = gaussian_window(cfg);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  const int oh = height - cfg.window + 1, ow = width - cfg.window + 1;
  const std::size_t m = static_cast<std::size_t>(oh) * ow;

  std::vector<double> da(n), db(n), work(n);
  for (std::size_t i = 0; i < n; ++i) {
    da[i] = a[i];
    db[i] = b[i];
  }
  std::vector<double> tmp(static_cast<std::size_t>(height) * ow);
  std::vector<double> mu_a(m), mu_b(m), e_aa(m), e_bb(m), e_ab(m);
  filter_valid(da.data(), height, width, g, tmp.data(), mu_a.data());
  filter_valid(db.data(), height, width, g, tmp.data(), mu_b.data());
  for (std::size_t i = 0; i < n; ++i) work[i] = da[i] * da[i];
  filter_valid(work.data(), height, width, g, tmp.data(), e_aa.data());
  for (std::size_t i = 0; i < n; ++i) work[i] = db[i] * db[i];
  filter_valid(work.data(), height, width, g, tmp.data(), e_bb.data());
  for (std::size_t i = 0; i < n; ++i) work[i] = da[i] * db[i];
  filter_valid(work.data(), height, width, g, tmp.data(), e_ab.data());

  const double c1 = cfg.c1(), c2 = cfg.c2();
  std::vector<double> alpha, beta, gamma;
  if (grad_a != nullptr) {
    alpha.resize(m);
    beta.resize(m);
    gamma.resize(m);
  }
  double total = 0.0;
  for (std::size_t p = 0; p < m; ++p) {
    const double ma = mu_a[p], mb = mu_b[p];
    const double va = e_aa[p] - ma * ma;
    const double vb = e_bb[p] - mb * mb;
    const double cov = e_ab[p] - ma * mb;
    const double a1 = 2.0 * ma * mb + c1;
    const double a2 = 2.0 * cov + c2;
    const double b1 = ma * ma + mb * mb + c1;
    const double b2 = va + vb + c2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (grad_a != nullptr) {
      const double d_mu = 2.0 * mb * a2 / (b1 * b2) - 2.0 * ma * s / b1;
      const double d_var = -s / b2;
      const double d_cov = 2.0 * a1 / (b1 * b2);
      const double inv_m = 1.0 / static_cast<double>(m);
      alpha[p] = (d_mu - 2.0 * ma * d_var - mb * d_cov) * inv_m;
      beta[p] = d_var * inv_m;
      gamma[p] = d_cov * inv_m;
    }
  }
  if (grad_a != nullptr) {
    std::vector<double> ga(n), gb(n), gc(n);
    filter_valid_adjoint(alpha.data(), height, width, g, tmp.data(), ga.data());
    filter_valid_adjoint(beta.data(), height, width, g, tmp.data(), gb.data());
    filter_valid_adjoint(gamma.data(), height, width, g, tmp.data(), gc.data());
    for (std::size_t i = 0; i < n; ++i) {
      grad_a[i] = static_cast<float>(ga[i] + 2.0 * da[i] * gb[i] + db[i] * gc[i]);
    }
  }
  return total / static_cast<double>(m);
}

double ssim(const Image& a, const Image& b, const SsimConfig& cfg) {
  check_same(a, b, "ssim");
  double s = 0.0;
  for (int c = 0; c < a.channels; ++c) s += ssim_plane(a.plane(c), b.plane(c), a.height, a.width, cfg);
  return s / a.channels;
}

double l1_plane(const float* a, const float* b, std::size_t n, float* grad_a) {
  double s = 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += std::abs(d);
    if (grad_a != nullptr) grad_a[i] = static_cast<float>(d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0));
  }
  return s * inv;
}

double interpolation_loss_plane(const float* pred, const float* target, int height, int width,
                                const SsimConfig& cfg, float* grad_pred) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<float> g_ssim, g_l1;
  if (grad_pred != nullptr) {
    g_ssim.resize(n);
    g_l1.resize(n);
  }
  const double s = ssim_plane(pred, target, height, width, cfg, grad_pred ? g_ssim.data() : nullptr);
  const double l = l1_plane(pred, target, n, grad_pred ? g_l1.data() : nullptr);
  if (grad_pred != nullptr) {
    for (std::size_t i = 0; i < n; ++i) grad_pred[i] = -0.5f * g_ssim[i] + 0.5f * g_l1[i];
  }
  return 0.5 * (1.0 - s) + 0.5 * l;
}

double interpolation_loss(const Image& pred, const Image& target, const SsimConfig& cfg) {
  check_same(pred, target, "interpolation_loss");
  double s = 0.0;
  for (int c = 0; c < pred.channels; ++c) {
    s += interpolation_loss_plane(pred.plane(c), target.plane(c), pred.height, pred.width, cfg);
  }
  return s / pred.channels;
}

double batch_dynamic_range(const Tensor& target) {
  if (target.empty()) return 1.0;
  const auto [lo, hi] = std::minmax_element(target.vec().begin(), target.vec().end());
  const double range = static_cast<double>(*hi) - *lo;
  return range > 0.0 ? range : 1.0;
}

double interpolation_loss_batch(const Tensor& pred, const Tensor& target, Tensor* grad) {
  if (!(pred.shape() == target.shape()) || pred.c() != 1) {
    throw ShapeError("interpolation loss: pred " + pred.shape().str() + " vs target " + target.shape().str());
  }
  SsimConfig cfg;
  cfg.dynamic_range = batch_dynamic_range(target);
  if (grad != nullptr) *grad = Tensor(pred.shape());
  double total = 0.0;
  const double inv_n = 1.0 / pred.n();
  for (int n = 0; n < pred.n(); ++n) {
    float* g = grad ? grad->sample(n) : nullptr;
    total += interpolation_loss_plane(pred.sample(n), target.sample(n), pred.h(), pred.w(), cfg, g);
    if (g != nullptr) {
      for (std::size_t i = 0; i < pred.shape().plane(); ++i) g[i] = static_cast<float>(g[i] * inv_n);
    }
  }
  return total * inv_n;
}

Psnr psnr(const Image& pred, const Image& target, double max_value) {
  check_same(pred, target, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.data.size());
  if (mse <= 0.0) return {kPsnrCap, true};
  const double db = 10.0 * std::log10(max_value * max_value / mse);
  if (db >= kPsnrCap) return {kPsnrCap, true};
  return {db, false};
}

double epe_plane(const float* u, const float* v, const float* gt_u, const float* gt_v,
                 const std::uint8_t* valid, std::size_t n, float* grad_u, float* grad_v) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += valid[i] ? 1 : 0;
  if (count == 0) throw DataError("EPE: empty validity mask");
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) {
      if (grad_u != nullptr) {
        grad_u[i] = 0.0f;
        grad_v[i] = 0.0f;
      }
      continue;
    }
    const double du = static_cast<double>(u[i]) - gt_u[i];
    const double dv = static_cast<double>(v[i]) - gt_v[i];
    const double r = std::sqrt(du * du + dv * dv);
    total += r;
    if (grad_u != nullptr) {
      grad_u[i] = r > 0.0 ? static_cast<float>(du / r * inv) : 0.0f;
      grad_v[i] = r > 0.0 ? static_cast<float>(dv / r * inv) : 0.0f;
    }
  }
  return total * inv;
}

double epe(const FlowField& flow, const FlowField& gt) {
  check_flow(flow, gt);
  return epe_plane(flow.u.data(), flow.v.data(), gt.u.data(), gt.v.data(), gt.valid.data(), gt.size());
}

double epe_loss_batch(const Tensor& pred, const std::vector<FlowField>& gt, Tensor* grad) {
  if (pred.c() != 2 || static_cast<std::size_t>(pred.n()) != gt.size()) {
    throw ShapeError("EPE loss: prediction " + pred.shape().str() + " vs " + std::to_string(gt.size()) + " targets");
  }
  if (grad != nullptr) *grad = Tensor(pred.shape());
  const double inv_n = 1.0 / pred.n();
  double total = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    const FlowField& t = gt[n];
    if (t.height != pred.h() || t.width != pred.w()) throw ShapeError("EPE loss: target size mismatch");
    float* gu = grad ? grad->plane(n, 0) : nullptr;
    float* gv = grad ? grad->plane(n, 1) : nullptr;
    total += epe_plane(pred.plane(n, 0), pred.plane(n, 1), t.u.data(), t.v.data(), t.valid.data(), t.size(), gu, gv);
    if (grad != nullptr) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        gu[i] = static_cast<float>(gu[i] * inv_n);
        gv[i] = static_cast<float>(gv[i] * inv_n);
      }
    }
  }
  return total * inv_n;
}

double fl_all(const FlowField& flow, const FlowField& gt) {
  check_flow(flow, gt);
  std::size_t outliers = 0, count = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.valid[i]) continue;
    ++count;
    const double err = std::hypot(static_cast<double>(flow.u[i]) - gt.u[i], static_cast<double>(flow.v[i]) - gt.v[i]);
    const double mag = std::hypot(static_cast<double>(gt.u[i]), static_cast<double>(gt.v[i]));
    if (err > 3.0 && err > 0.05 * mag) ++outliers;
  }
  return 100.0 * static_cast<double>(outliers) / static_cast<double>(count);
}

}  // namespace interflow::metrics
