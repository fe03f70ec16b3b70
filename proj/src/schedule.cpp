#include "interflow/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "interflow/errors.hpp"

namespace interflow {

std::string_view to_string(LrPolicy p) { return p == LrPolicy::Milestones ? "milestones" : "plateau"; }
std::string_view to_string(LossKind l) { return l == LossKind::Interpolation ? "interpolation" : "epe"; }

LrPolicy lr_policy_from_string(std::string_view s) {
  if (s == "milestones") return LrPolicy::Milestones;
  if (s == "plateau") return LrPolicy::Plateau;
  throw ConfigError("unknown lr policy '" + std::string(s) + "' (expected milestones, plateau or s_short)");
}

TrainingSchedule TrainingSchedule::pretrain_default() { return {}; }

TrainingSchedule TrainingSchedule::finetune_default() {
  TrainingSchedule s;
  s.policy = LrPolicy::Plateau;
  s.milestones.clear();
  s.patience = 20;
  s.total_epochs = 200;
  s.loss = LossKind::Epe;
  return s;
}

TrainingSchedule TrainingSchedule::s_short(int total_epochs) {
  TrainingSchedule s = finetune_default();
  s.policy = LrPolicy::Milestones;
  s.total_epochs = total_epochs;
  s.milestones.clear();
  for (double f : {1.0 / 2.0, 2.0 / 3.0, 5.0 / 6.0}) {
    const int m = std::max(1, static_cast<int>(std::lround(f * total_epochs)));
    if (s.milestones.empty() || m > s.milestones.back()) s.milestones.push_back(m);
  }
  return s;
}

void TrainingSchedule::validate() const {
  if (!(initial_lr > 0.0)) throw ConfigError("initial learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (total_epochs < 1) throw ConfigError("epoch budget must be >= 1");
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("lr factor must be in (0, 1)");
  if (patience < 1) throw ConfigError("plateau patience must be >= 1");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] < 1 || (i > 0 && milestones[i] <= milestones[i - 1])) {
      throw ConfigError("milestone epochs must be positive and strictly increasing");
    }
  }
}

LrScheduler::LrScheduler(const TrainingSchedule& schedule) : schedule_(schedule) {
  schedule_.validate();
  state_.lr = schedule_.initial_lr;
}

bool LrScheduler::end_epoch(std::optional<double> metric) {
  ++state_.epochs_done;
  if (schedule_.policy == LrPolicy::Milestones) {
    const bool hit = std::binary_search(schedule_.milestones.begin(), schedule_.milestones.end(), state_.epochs_done);
    if (hit) state_.lr *= schedule_.factor;
    return hit;
  }
  if (!metric) throw StateError("plateau schedule needs a validation metric every epoch");
  if (state_.has_best && *metric < state_.best) {
    state_.best = *metric;
    state_.since_improvement = 0;
    return false;
  }
  if (!state_.has_best) {
    state_.best = *metric;
    state_.has_best = true;
  }
  if (++state_.since_improvement >= schedule_.patience) {
    state_.lr *= schedule_.factor;
    state_.since_improvement = 0;
    return true;
  }
  return false;
}

std::vector<double> replay_lr(const TrainingSchedule& schedule, const std::vector<double>& val_history) {
  LrScheduler sched(schedule);
  std::vector<double> out;
  for (int e = 0; e < schedule.total_epochs; ++e) {
    out.push_back(sched.lr());
    std::optional<double> m;
    if (static_cast<std::size_t>(e) < val_history.size()) m = val_history[e];
    if (schedule.policy == LrPolicy::Plateau && !m) break;
    sched.end_epoch(m);
  }
  return out;
}

}  // namespace interflow
