#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "interflow/data.hpp"
#include "interflow/model.hpp"
#include "interflow/schedule.hpp"

namespace interflow {

// Adam with bias correction; one (m, v) pair per trainable parameter in
// canonical order.
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(Network& net, double lr);

  std::int64_t steps() const { return steps_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double lr = 0.0;
  bool lr_reduced = false;
  double seconds = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::optional<double> best_val;
  int best_epoch = 0;
  std::vector<int> lr_reductions;  // epochs after which the rate dropped

  std::vector<double> train_curve() const;
  std::vector<double> val_curve() const;
  std::vector<double> lr_curve() const;
  // Validation value of the last epoch (training loss when there is none).
  double final_metric() const;
};

struct RunOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  // When set: metrics.jsonl, checkpoints/latest.ckpt and checkpoints/best.ckpt.
  std::filesystem::path run_dir;
  std::filesystem::path resume;
  std::string tag = "train";
  bool log_progress = true;
};

// Shared loop for both objectives. The loss follows schedule.loss.
History train(Network& net, const Dataset& train_set, const Dataset* val_set, const TrainingSchedule& schedule,
              const RunOptions& opts);

// Mean validation loss (interpolation loss or EPE) in eval mode.
double validate(Network& net, const Dataset& val_set, LossKind loss, int batch_size, int workers);

History pretrain(Network& net, const Dataset& train_set, const Dataset* val_set, const TrainingSchedule& schedule,
                 const RunOptions& opts);
History finetune(Network& net, const Dataset& train_set, const Dataset& val_set, const TrainingSchedule& schedule,
                 const RunOptions& opts);

struct SubsampleResult {
  std::vector<History> runs;
  std::vector<std::vector<std::size_t>> subsets;  // training indices per repeat
  std::vector<double> mean_val_curve;
  double mean_final_val = 0.0;
};

// Repeated fine-tuning on random subsets of n_frames training samples. An
// interpolation network gets a fresh flow head per repeat. Repeat 0 uses
// `seed` directly; when n_frames equals the training-set size the subset is
// the full set in its original order.
SubsampleResult subsample_finetune(const Network& net, const Dataset& train_set, const Dataset& val_set, int n_frames,
                                   int repeats, std::uint64_t seed, const TrainingSchedule& schedule,
                                   const RunOptions& opts);

struct TrainedNetwork {
  Network net;
  History history;
};

TrainedNetwork train_from_scratch(const NetworkSpec& spec, const Dataset& train_set, const Dataset& val_set,
                                  const TrainingSchedule& schedule, const RunOptions& opts);

// One metrics.jsonl record.
std::string epoch_record_json(const EpochRecord& r, const std::string& tag);

}  // namespace interflow
