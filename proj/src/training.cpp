#include "interflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "interflow/checkpoint.hpp"
#include "interflow/kernels.hpp"
#include "interflow/metrics.hpp"

namespace interflow {
namespace {

std::vector<nn::Parameter*> trainable(Network& net) {
  std::vector<nn::Parameter*> out;
  for (nn::Parameter* p : net.parameters()) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

bool all_finite(Network& net) {
  for (const nn::Parameter* p : net.parameters()) {
    for (float v : p->value.vec()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

double batch_loss(Network& net, const Batch& batch, LossKind loss, bool backward) {
  Tensor pred = net.forward(batch.inputs);
  Tensor grad;
  const double value = loss == LossKind::Interpolation
                           ? metrics::interpolation_loss_batch(pred, batch.target, backward ? &grad : nullptr)
                           : metrics::epe_loss_batch(pred, batch.flows, backward ? &grad : nullptr);
  if (backward && std::isfinite(value)) net.backward(grad);
  return value;
}

// Consecutive index ranges; a trailing single sample joins the previous batch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + i, order.begin() + end);
  }
  if (out.size() >= 2 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

void check_loss_kind(const Network& net, const Dataset& ds, LossKind loss) {
  const bool flow = loss == LossKind::Epe;
  if (flow != (net.head() == Head::Flow)) {
    throw StateError(std::string("loss '") + std::string(to_string(loss)) + "' does not match the " +
                     std::string(to_string(net.head())) + " head");
  }
  if (!ds.empty() && flow != (ds.kind() == SampleKind::Flow)) {
    throw StateError("dataset kind does not match the loss");
  }
}

}  // namespace

void Adam::step(Network& net, double lr) {
  auto params = trainable(net);
  if (m_.empty()) {
    for (const nn::Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) throw StateError("optimizer state does not match the network");
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const kernels::AdamStep s{static_cast<float>(lr / bc1), static_cast<float>(beta1_), static_cast<float>(beta2_),
                            static_cast<float>(1.0 / std::sqrt(bc2)), static_cast<float>(eps_)};
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter* p = params[i];
    k.adam_update(p->value.numel(), p->value.data(), p->grad.data(), m_[i].data(), v_[i].data(), s);
  }
}

std::vector<double> History::train_curve() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.train_loss);
  return out;
}

std::vector<double> History::val_curve() const {
  std::vector<double> out;
  for (const auto& e : epochs) {
    if (e.val_loss) out.push_back(*e.val_loss);
  }
  return out;
}

std::vector<double> History::lr_curve() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.lr);
  return out;
}

double History::final_metric() const {
  if (epochs.empty()) throw StateError("empty training history");
  return epochs.back().val_loss.value_or(epochs.back().train_loss);
}

std::string epoch_record_json(const EpochRecord& r, const std::string& tag) {
  nlohmann::json j{{"tag", tag},
                   {"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"val_loss", r.val_loss ? nlohmann::json(*r.val_loss) : nlohmann::json(nullptr)},
                   {"lr", r.lr},
                   {"lr_reduced", r.lr_reduced}};
  return j.dump();
}

double validate(Network& net, const Dataset& val_set, LossKind loss, int batch_size, int workers) {
  if (val_set.empty()) throw DataError("empty validation set");
  const Mode previous = net.mode();
  net.set_mode(Mode::Eval);
  std::vector<std::size_t> order(val_set.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (const auto& idx : make_batches(order, batch_size)) {
    const Batch b = collate(load_samples(val_set, idx, 0, false, workers));
    total += batch_loss(net, b, loss, false) * static_cast<double>(idx.size());
  }
  net.set_mode(previous);
  return total / static_cast<double>(val_set.size());
}

History train(Network& net, const Dataset& train_set, const Dataset* val_set, const TrainingSchedule& schedule,
              const RunOptions& opts) {
  schedule.validate();
  if (train_set.empty()) throw DataError("empty training set");
  check_loss_kind(net, train_set, schedule.loss);
  if (val_set != nullptr && val_set->empty()) val_set = nullptr;

  Adam adam(schedule.beta1, schedule.beta2, schedule.epsilon);
  LrScheduler scheduler(schedule);
  History history;
  std::uint64_t seed = opts.seed;
  int start_epoch = 0;

  if (!opts.resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(opts.resume);
    if (!(ckpt.spec == net.spec())) throw StateError("resume checkpoint was written for a different network");
    restore_parameters(net, ckpt);
    restore_adam(adam, ckpt);
    scheduler.restore(ckpt.scheduler);
    history = ckpt.history;
    start_epoch = ckpt.epoch;
    if (ckpt.seed != seed) spdlog::warn("resuming with the checkpoint seed {} instead of {}", ckpt.seed, seed);
    seed = ckpt.seed;
    spdlog::info("[{}] resuming after epoch {}", opts.tag, start_epoch);
  }

  const bool files = !opts.run_dir.empty();
  std::ofstream metrics_log;
  if (files) {
    std::filesystem::create_directories(opts.run_dir / "checkpoints");
    metrics_log.open(opts.run_dir / "metrics.jsonl", std::ios::app);
  }

  auto checkpoint = [&](int epoch) {
    Checkpoint c = capture_checkpoint(net, &adam);
    c.schedule = schedule;
    c.scheduler = scheduler.state();
    c.epoch = epoch;
    c.best_metric = history.best_val;
    c.best_epoch = history.best_epoch;
    c.seed = seed;
    c.tag = opts.tag;
    c.history = history;
    return c;
  };

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = start_epoch; epoch < schedule.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const Network snapshot = net;
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t sample_seed = mix_seed(seed ^ 0xA5A5A5A5ull, static_cast<std::uint64_t>(epoch));

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = scheduler.lr();
    net.set_mode(Mode::Train);
    double total = 0.0;
    for (const auto& idx : make_batches(order, schedule.batch_size)) {
      const Batch b = collate(load_samples(train_set, idx, sample_seed, true, opts.workers));
      net.zero_grad();
      const double loss = batch_loss(net, b, schedule.loss, true);
      if (!std::isfinite(loss)) {
        net = snapshot;
        throw NumericalError("non-finite training loss in epoch " + std::to_string(epoch + 1) +
                             "; parameters restored to the last completed epoch");
      }
      adam.step(net, rec.lr);
      if (!all_finite(net)) {
        net = snapshot;
        throw NumericalError("non-finite parameters after an optimizer step in epoch " + std::to_string(epoch + 1) +
                             "; parameters restored to the last completed epoch");
      }
      total += loss * static_cast<double>(idx.size());
    }
    net.clear_cache();
    rec.train_loss = total / static_cast<double>(train_set.size());
    if (val_set != nullptr) rec.val_loss = validate(net, *val_set, schedule.loss, schedule.batch_size, opts.workers);
    const double monitored = rec.val_loss.value_or(rec.train_loss);
    rec.lr_reduced = scheduler.end_epoch(monitored);
    if (rec.lr_reduced) history.lr_reductions.push_back(rec.epoch);
    bool improved = false;
    if (!history.best_val || monitored < *history.best_val) {
      history.best_val = monitored;
      history.best_epoch = rec.epoch;
      improved = true;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);

    if (files) {
      metrics_log << epoch_record_json(rec, opts.tag) << "\n" << std::flush;
      const Checkpoint c = checkpoint(rec.epoch);
      save_checkpoint(opts.run_dir / "checkpoints" / "latest.ckpt", c);
      if (improved) save_checkpoint(opts.run_dir / "checkpoints" / "best.ckpt", c);
    }
    if (opts.log_progress) {
      spdlog::info("[{}] epoch {}/{} train {:.5f} val {} lr {:.3g}{} ({:.1f} s)", opts.tag, rec.epoch,
                   schedule.total_epochs, rec.train_loss, rec.val_loss ? fmt::format("{:.5f}", *rec.val_loss) : "-",
                   rec.lr, rec.lr_reduced ? " (reduced)" : "", rec.seconds);
    }
  }
  return history;
}

History pretrain(Network& net, const Dataset& train_set, const Dataset* val_set, const TrainingSchedule& schedule,
                 const RunOptions& opts) {
  if (net.head() != Head::Interpolation) throw StateError("pretrain needs an interpolation head");
  if (schedule.loss != LossKind::Interpolation) throw ConfigError("pretrain uses the interpolation loss");
  return train(net, train_set, val_set, schedule, opts);
}

History finetune(Network& net, const Dataset& train_set, const Dataset& val_set, const TrainingSchedule& schedule,
                 const RunOptions& opts) {
  if (net.head() != Head::Flow) throw StateError("finetune needs a flow head; call swap_head first");
  if (schedule.loss != LossKind::Epe) throw ConfigError("finetune uses the EPE loss");
  return train(net, train_set, &val_set, schedule, opts);
}

SubsampleResult subsample_finetune(const Network& net, const Dataset& train_set, const Dataset& val_set, int n_frames,
                                   int repeats, std::uint64_t seed, const TrainingSchedule& schedule,
                                   const RunOptions& opts) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (n_frames < 1 || static_cast<std::size_t>(n_frames) > train_set.size()) {
    throw DataError("requested " + std::to_string(n_frames) + " training frames, " + std::to_string(train_set.size()) +
                    " available");
  }
  SubsampleResult result;
  for (int r = 0; r < repeats; ++r) {
    const std::uint64_t sub_seed = r == 0 ? seed : mix_seed(seed, static_cast<std::uint64_t>(r));
    std::vector<std::size_t> idx(train_set.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (static_cast<std::size_t>(n_frames) < idx.size()) {
      std::mt19937_64 rng(mix_seed(sub_seed, 0x5B5E7ull));
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(n_frames);
      std::sort(idx.begin(), idx.end());
    }
    Network local = net.head() == Head::Flow ? net : swap_head(net, mix_seed(sub_seed, 0x4EADull));
    RunOptions o = opts;
    o.seed = sub_seed;
    o.tag = opts.tag + "/n" + std::to_string(n_frames) + "/r" + std::to_string(r);
    if (!opts.run_dir.empty()) o.run_dir = opts.run_dir / ("n" + std::to_string(n_frames) + "_r" + std::to_string(r));
    result.runs.push_back(finetune(local, train_set.subset(idx), val_set, schedule, o));
    result.subsets.push_back(std::move(idx));
  }
  const std::size_t len = result.runs.front().epochs.size();
  result.mean_val_curve.assign(len, 0.0);
  for (const auto& h : result.runs) {
    const auto curve = h.val_curve();
    for (std::size_t e = 0; e < len && e < curve.size(); ++e) result.mean_val_curve[e] += curve[e] / repeats;
    result.mean_final_val += h.final_metric() / repeats;
  }
  return result;
}

TrainedNetwork train_from_scratch(const NetworkSpec& spec, const Dataset& train_set, const Dataset& val_set,
                                  const TrainingSchedule& schedule, const RunOptions& opts) {
  NetworkSpec s = spec;
  s.head = Head::Flow;
  TrainedNetwork out{Network(s, mix_seed(opts.seed, 0x5C4A7C4ull)), {}};
  RunOptions o = opts;
  if (o.tag == "train") o.tag = "scratch";
  out.history = finetune(out.net, train_set, val_set, schedule, o);
  return out;
}

}  // namespace interflow
