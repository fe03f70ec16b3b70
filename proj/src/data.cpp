#include "interflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <thread>

#include <spdlog/spdlog.h>

namespace interflow {

std::array<int, 4> SampleSpec::input_frames(int sequence_length) const {
  if (kind == SampleKind::Interpolation) {
    return {center - 3 * spacing, center - spacing, center + spacing, center + 3 * spacing};
  }
  auto clamp = [&](int i) { return std::clamp(i, 0, sequence_length - 1); };
  return {clamp(center - 1), center, center + 1, clamp(center + 2)};
}

int SampleSpec::first_frame() const {
  return kind == SampleKind::Interpolation ? center - 3 * spacing : std::max(center - 1, 0);
}

int SampleSpec::last_frame() const {
  // Unclamped for the last flow pair.
  return kind == SampleKind::Interpolation ? center + 3 * spacing : center + 2;
}

std::vector<SampleSpec> index_interpolation_samples(const std::vector<int>& sequence_lengths) {
  std::vector<SampleSpec> out;
  for (int s = 0; s < static_cast<int>(sequence_lengths.size()); ++s) {
    const int len = sequence_lengths[s];
    for (int spacing : {1, 2}) {
      for (int t = 3 * spacing; t <= len - 1 - 3 * spacing; ++t) {
        out.push_back({s, t, spacing, SampleKind::Interpolation});
      }
    }
  }
  return out;
}

std::vector<SampleSpec> index_flow_samples(const std::vector<int>& sequence_lengths) {
  std::vector<SampleSpec> out;
  for (int s = 0; s < static_cast<int>(sequence_lengths.size()); ++s) {
    for (int t = 0; t + 1 < sequence_lengths[s]; ++t) out.push_back({s, t, 1, SampleKind::Flow});
  }
  return out;
}

std::vector<int> sequence_lengths(const std::vector<Sequence>& sequences) {
  std::vector<int> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(s.length());
  return out;
}

std::string_view to_string(SplitPolicy p) { return p == SplitPolicy::Frame ? "frame" : "sequence"; }

SplitPolicy split_policy_from_string(std::string_view s) {
  if (s == "frame") return SplitPolicy::Frame;
  if (s == "sequence") return SplitPolicy::Sequence;
  throw ConfigError("unknown split policy '" + std::string(s) + "' (expected frame or sequence)");
}

namespace {

bool overlaps(const SampleSpec& a, const SampleSpec& b) {
  return a.sequence == b.sequence && a.first_frame() <= b.last_frame() && b.first_frame() <= a.last_frame();
}

Split split_by_sequence(const std::vector<int>& lengths, const std::vector<SampleSpec>& specs, double fraction,
                        std::uint64_t seed) {
  const int n = static_cast<int>(lengths.size());
  if (n < 2) throw DataError("sequence split needs at least two sequences, got " + std::to_string(n));
  const int hold = std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n - 1);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Split split;
  split.applied = SplitPolicy::Sequence;
  split.val_sequences.assign(order.begin(), order.begin() + hold);
  std::sort(split.val_sequences.begin(), split.val_sequences.end());
  for (const auto& s : specs) {
    const bool held = std::binary_search(split.val_sequences.begin(), split.val_sequences.end(), s.sequence);
    (held ? split.val : split.train).push_back(s);
  }
  return split;
}

std::optional<Split> split_by_frame(const std::vector<int>& lengths, const std::vector<SampleSpec>& specs,
                                    double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Split split;
  split.applied = SplitPolicy::Frame;
  for (int s = 0; s < static_cast<int>(lengths.size()); ++s) {
    const int want = static_cast<int>(std::lround(fraction * lengths[s]));
    if (want == 0) continue;
    std::vector<SampleSpec> candidates;
    for (const auto& sp : specs) {
      if (sp.sequence == s && sp.spacing == 1) candidates.push_back(sp);
    }
    if (candidates.empty()) continue;
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
    const int span = candidates.front().last_frame() - candidates.front().first_frame() + 1;

    // Beginning, center and end regions; the remainder goes to the beginning
    // first, then the end.
    std::array<int, 3> counts{want / 3, want / 3, want / 3};
    if (want % 3 >= 1) ++counts[0];
    if (want % 3 == 2) ++counts[2];

    const int lo = candidates.front().center;
    const int hi = candidates.back().center;
    std::uniform_int_distribution<int> jitter(0, span - 1);
    for (int region = 0; region < 3; ++region) {
      const int k = counts[region];
      if (k == 0) continue;
      const int block = k * span;
      int anchor = 0;
      if (region == 0) anchor = lo + jitter(rng);
      if (region == 1) anchor = (lo + hi) / 2 - block / 2 + jitter(rng);
      if (region == 2) anchor = hi - block + span - jitter(rng);
      anchor = std::clamp(anchor, lo, hi);
      int taken = 0;
      for (const auto& c : candidates) {
        if (taken == k) break;
        if (c.center < anchor) continue;
        const bool clash = std::any_of(split.val.begin(), split.val.end(), [&](const auto& v) { return overlaps(v, c); });
        if (clash) continue;
        split.val.push_back(c);
        ++taken;
      }
    }
  }
  if (split.val.empty()) return std::nullopt;
  for (const auto& sp : specs) {
    const bool clash = std::any_of(split.val.begin(), split.val.end(), [&](const auto& v) { return overlaps(v, sp); });
    if (!clash) split.train.push_back(sp);
  }
  if (split.train.empty()) return std::nullopt;
  std::sort(split.val.begin(), split.val.end(), [](const auto& a, const auto& b) {
    return std::tie(a.sequence, a.center) < std::tie(b.sequence, b.center);
  });
  return split;
}

}  // namespace

Split split_train_val(const std::vector<int>& sequence_lengths, const std::vector<SampleSpec>& specs,
                      const SplitConfig& cfg) {
  if (!(cfg.fraction > 0.0 && cfg.fraction < 1.0)) throw ConfigError("split fraction must be in (0, 1)");
  if (cfg.policy == SplitPolicy::Sequence) {
    return split_by_sequence(sequence_lengths, specs, cfg.fraction, cfg.seed);
  }
  if (auto split = split_by_frame(sequence_lengths, specs, cfg.fraction, cfg.seed)) return *split;
  spdlog::warn("corpus too small for a {:.1f}% frame split; falling back to a sequence-level split",
               cfg.fraction * 100.0);
  Split split = split_by_sequence(sequence_lengths, specs, SplitConfig::sequence_default().fraction, cfg.seed);
  split.fell_back = true;
  return split;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Dataset::Dataset(const std::vector<Sequence>* sequences, std::vector<SampleSpec> specs, AugmentConfig cfg)
    : sequences_(sequences), specs_(std::move(specs)), cfg_(cfg) {
  for (const auto& sp : specs_) {
    if (sp.sequence < 0 || sp.sequence >= static_cast<int>(sequences_->size())) {
      throw DataError("sample refers to missing sequence " + std::to_string(sp.sequence));
    }
    if (sp.kind == SampleKind::Flow && !(*sequences_)[sp.sequence].has_flow()) {
      throw DataError("flow sample on sequence '" + (*sequences_)[sp.sequence].id + "' without ground truth");
    }
  }
}

SampleKind Dataset::kind() const { return specs_.empty() ? SampleKind::Interpolation : specs_.front().kind; }

TrainingSample Dataset::get(std::size_t index, std::uint64_t seed) const {
  const SampleSpec& sp = specs_.at(index);
  const Sequence& seq = (*sequences_)[sp.sequence];
  std::mt19937_64 rng(mix_seed(seed, index));
  return sp.kind == SampleKind::Flow ? augment_flow(seq, sp, cfg_, rng) : augment_interpolation(seq, sp, cfg_, rng);
}

TrainingSample Dataset::get_plain(std::size_t index) const {
  const SampleSpec& sp = specs_.at(index);
  const Sequence& seq = (*sequences_)[sp.sequence];
  const Image& f = seq.frames.at(sp.center);
  return make_sample(seq, sp, identity_augmentation(f.width, f.height, cfg_), cfg_);
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<SampleSpec> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(specs_.at(i));
  return with_specs(std::move(out));
}

Dataset Dataset::with_specs(std::vector<SampleSpec> specs) const { return Dataset(sequences_, std::move(specs), cfg_); }

Batch collate(const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw DataError("empty batch");
  const auto& first = samples.front().inputs.front();
  const int n = static_cast<int>(samples.size());
  const int frames = static_cast<int>(samples.front().inputs.size());
  Batch b;
  b.inputs = Tensor(n, frames, first.height, first.width);
  const bool interp = samples.front().spec.kind == SampleKind::Interpolation;
  if (interp) b.target = Tensor(n, 1, first.height, first.width);
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[i];
    for (int f = 0; f < frames; ++f) {
      const Image& img = s.inputs[f];
      if (img.height != first.height || img.width != first.width) throw ShapeError("batch frames differ in size");
      std::memcpy(b.inputs.plane(i, f), img.data.data(), img.data.size() * sizeof(float));
    }
    if (interp) {
      std::memcpy(b.target.plane(i, 0), s.target.data.data(), s.target.data.size() * sizeof(float));
    } else {
      b.flows.push_back(s.flow);
    }
  }
  return b;
}

std::vector<TrainingSample> load_samples(const Dataset& ds, const std::vector<std::size_t>& indices,
                                         std::uint64_t seed, bool augment, int workers) {
  std::vector<TrainingSample> out(indices.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = augment ? ds.get(indices[i], seed) : ds.get_plain(indices[i]);
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(indices.size(), 1));
  if (n_threads <= 1) {
    work(0, indices.size());
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(n_threads);
  const std::size_t chunk = (indices.size() + n_threads - 1) / n_threads;
  for (std::size_t t = 0; t < n_threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(indices.size(), b + chunk);
    threads.emplace_back([&, t, b, e] {
      try {
        work(b, e);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace interflow
