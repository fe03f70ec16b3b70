#pragma once

#include <optional>
#include <string>
#include <vector>

namespace interflow {

enum class LrPolicy { Milestones, Plateau };
enum class LossKind { Interpolation, Epe };

std::string_view to_string(LrPolicy p);
std::string_view to_string(LossKind l);
LrPolicy lr_policy_from_string(std::string_view s);

struct TrainingSchedule {
  double initial_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 8;
  LrPolicy policy = LrPolicy::Milestones;
  // Milestones: the rate is multiplied by `factor` once epoch m completes.
  std::vector<int> milestones{3, 6, 8, 10};
  double factor = 0.5;
  // Plateau: epochs without a strict improvement of the monitored metric.
  int patience = 20;
  int total_epochs = 12;
  LossKind loss = LossKind::Interpolation;

  static TrainingSchedule pretrain_default();
  static TrainingSchedule finetune_default();
  // Milestones at 1/2, 2/3 and 5/6 of the epoch budget.
  static TrainingSchedule s_short(int total_epochs);

  void validate() const;
  bool operator==(const TrainingSchedule&) const = default;
};

class LrScheduler {
 public:
  struct State {
    double lr = 0.0;
    double best = 0.0;
    bool has_best = false;
    int since_improvement = 0;
    int epochs_done = 0;
    bool operator==(const State&) const = default;
  };

  explicit LrScheduler(const TrainingSchedule& schedule);

  double lr() const { return state_.lr; }
  // Records a finished epoch; `metric` is the monitored validation value
  // (required for the plateau policy). Returns true when the rate dropped.
  // The first epoch sets the reference value and counts as non-improving.
  bool end_epoch(std::optional<double> metric);

  const State& state() const { return state_; }
  void restore(const State& s) { state_ = s; }

 private:
  TrainingSchedule schedule_;
  State state_;
};

// Learning rate used in each epoch, given the per-epoch validation values.
std::vector<double> replay_lr(const TrainingSchedule& schedule, const std::vector<double>& val_history);

}  // namespace interflow
