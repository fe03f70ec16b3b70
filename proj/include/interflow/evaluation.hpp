#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "interflow/data.hpp"
#include "interflow/metrics.hpp"
#include "interflow/model.hpp"
#include "interflow/training.hpp"

namespace interflow {

// A named held-out corpus. Frames may be grayscale or RGB.
struct EvalSet {
  std::string name;
  std::vector<Sequence> sequences;
};

inline constexpr const char* kNetworkRow = "network";
inline constexpr const char* kLinearBlendRow = "linear_blend";

// Predicts every frame t with t-3, t-1, t+1, t+3 available. Rows per corpus
// for the network and the linear blend of t-1 and t+1, followed by "All" rows.
// PSNR and SSIM are computed on [0, 1] intensities.
metrics::MetricsReport eval_interpolation(Network& net, const std::vector<EvalSet>& sets);
// Same metrics over explicit samples (e.g. a validation split). The blend
// uses the frames at t - s and t + s.
metrics::MetricsReport eval_interpolation_samples(Network& net, const std::vector<Sequence>& sequences,
                                                  const std::vector<SampleSpec>& specs, const std::string& corpus);

// Optional refinement applied to each predicted flow (f0, f1 are the pair).
using FlowPostProcess = std::function<FlowField(const FlowField& flow, const Image& f0, const Image& f1)>;

// One flow per consecutive pair. Pair (t, t+1) uses frames t-1, t, t+1, t+2
// with the first and last frame duplicated at the sequence ends.
std::vector<FlowField> flow_for_sequence(Network& net, const std::vector<Image>& frames,
                                         const FlowPostProcess& post = {});

// Mean EPE and Fl-all per corpus over all ground-truth pairs. Corpora
// without ground truth are skipped with a warning.
metrics::MetricsReport eval_flow(Network& net, const std::vector<EvalSet>& sets, const FlowPostProcess& post = {});

struct ComparisonPair {
  std::uint64_t seed = 0;
  History pretrained;
  History scratch;
  // Final validation EPE of the scratch arm over the pretrained arm.
  double ratio = 0.0;
};

struct Comparison {
  std::vector<ComparisonPair> pairs;
  int pretrained_wins = 0;
  double mean_ratio = 0.0;
};

// For each seed: fine-tune a copy of `pretrained` (interpolation head swapped
// for a flow head) and train a freshly initialized flow network, both with
// the same data, schedule and seed.
Comparison compare_pretrained_vs_scratch(const Network& pretrained, const Dataset& train_set, const Dataset& val_set,
                                         const TrainingSchedule& schedule, const std::vector<std::uint64_t>& seeds,
                                         const RunOptions& opts);

struct SweepPoint {
  int size = 0;
  double mean_epe = 0.0;
  std::vector<double> per_repeat;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // ascending size
  int full_size = 0;
  double full_epe = 0.0;
};

// Final validation EPE averaged over `repeats` random subsets per size, plus
// one fine-tune on the full training set. Sizes above the available count
// are dropped with a warning. A known full-set value can be passed in.
SweepResult low_data_sweep(const Network& net, const Dataset& train_set, const Dataset& val_set, std::vector<int> sizes,
                           int repeats, std::uint64_t seed, const TrainingSchedule& schedule, const RunOptions& opts,
                           std::optional<double> full_set_epe = std::nullopt);

// Curve output for the comparison and sweep experiments.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

void write_series_csv(const std::filesystem::path& path, const std::vector<Series>& series);
void write_series_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);
std::vector<Series> comparison_series(const Comparison& c);
std::vector<Series> sweep_series(const SweepResult& r);

}  // namespace interflow
