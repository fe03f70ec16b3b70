#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "interflow/image.hpp"
#include "interflow/tensor.hpp"

namespace interflow::metrics {

// Gaussian-windowed SSIM. Stability constants scale with the dynamic range.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const;
};

// Normalized 1-D Gaussian taps of length cfg.window.
std::vector<double> gaussian_window(const SsimConfig& cfg);

// Mean SSIM over all window positions fully inside the image. When grad_a is
// non-null it receives dSSIM/da (h*w floats).
double ssim_plane(const float* a, const float* b, int height, int width, const SsimConfig& cfg,
                  float* grad_a = nullptr);
// Channel-averaged SSIM.
double ssim(const Image& a, const Image& b, const SsimConfig& cfg = {});

double l1_plane(const float* a, const float* b, std::size_t n, float* grad_a = nullptr);

// 0.5 * (1 - SSIM) + 0.5 * mean |pred - target|.
double interpolation_loss_plane(const float* pred, const float* target, int height, int width,
                                const SsimConfig& cfg, float* grad_pred = nullptr);
double interpolation_loss(const Image& pred, const Image& target, const SsimConfig& cfg = {});

// Batch loss over single-channel predictions; grad (same shape as pred) is
// the gradient of the batch mean. SSIM constants use the target range of the
// batch.
double interpolation_loss_batch(const Tensor& pred, const Tensor& target, Tensor* grad);
double batch_dynamic_range(const Tensor& target);

inline constexpr double kPsnrCap = 99.0;

struct Psnr {
  double db = 0.0;
  bool capped = false;
};
Psnr psnr(const Image& pred, const Image& target, double max_value = 1.0);

// Mean endpoint error over valid pixels of gt.
double epe(const FlowField& flow, const FlowField& gt);
// EPE with gradient w.r.t. (u, v); u and v hold n values each.
double epe_plane(const float* u, const float* v, const float* gt_u, const float* gt_v,
                 const std::uint8_t* valid, std::size_t n, float* grad_u = nullptr, float* grad_v = nullptr);
// Per-sample EPE averaged over the batch. pred: N x 2 x H x W.
double epe_loss_batch(const Tensor& pred, const std::vector<FlowField>& gt, Tensor* grad);

// Percentage of valid pixels with endpoint error > 3 px and > 5% of |gt|.
double fl_all(const FlowField& flow, const FlowField& gt);

// ---------------------------------------------------------------------------

struct MetricsRow {
  std::string method;
  std::string corpus;
  std::optional<double> psnr;
  std::optional<double> ssim;
  std::optional<double> epe;
  std::optional<double> fl_all;
  std::size_t n_samples = 0;

  bool operator==(const MetricsRow&) const = default;
};

struct MetricsReport {
  std::string title;
  std::vector<MetricsRow> rows;

  // Column-aligned text table, one row per (method, corpus).
  std::string to_table() const;
  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  // Writes <stem>.txt and <stem>.json.
  void save(const std::filesystem::path& stem) const;
  static MetricsReport load(const std::filesystem::path& json_path);

  const MetricsRow* find(const std::string& method, const std::string& corpus) const;
  bool operator==(const MetricsReport&) const = default;
};

// Sample-count-weighted mean of the given rows, labelled corpus "All".
MetricsRow aggregate_rows(const std::string& method, const std::vector<MetricsRow>& rows);

}  // namespace interflow::metrics
