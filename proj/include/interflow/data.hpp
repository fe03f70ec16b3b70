#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "interflow/image.hpp"
#include "interflow/normalize.hpp"
#include "interflow/tensor.hpp"

namespace interflow {

enum class SampleKind { Interpolation, Flow };

struct SampleSpec {
  int sequence = 0;
  // Interpolation: the predicted frame. Flow: first frame of the pair (t, t+1).
  int center = 0;
  int spacing = 1;
  SampleKind kind = SampleKind::Interpolation;

  // Interpolation: {t-3s, t-s, t+s, t+3s}. Flow: {t-1, t, t+1, t+2} clamped
  // to the sequence, which duplicates the terminal frames.
  std::array<int, 4> input_frames(int sequence_length) const;
  // Inclusive frame range touched by the sample (inputs and target).
  int first_frame() const;
  int last_frame() const;
  bool operator==(const SampleSpec&) const = default;
};

// Spacing-1 specs for t in [3, L-4] and spacing-2 specs for t in [6, L-7],
// ordered by sequence, then spacing, then t.
std::vector<SampleSpec> index_interpolation_samples(const std::vector<int>& sequence_lengths);
// One spec per ground-truth flow field (pairs (t, t+1), t in [0, L-2]).
std::vector<SampleSpec> index_flow_samples(const std::vector<int>& sequence_lengths);

// Frames are grayscale in [0, 1]. flows[i] maps frame i to frame i+1 and is
// either empty or has frames.size() - 1 entries.
struct Sequence {
  std::string id;
  std::string corpus;
  std::vector<Image> frames;
  std::vector<FlowField> flows;

  int length() const { return static_cast<int>(frames.size()); }
  bool has_flow() const { return !flows.empty(); }
};

std::vector<int> sequence_lengths(const std::vector<Sequence>& sequences);

// ---------------------------------------------------------------------------
// Train / validation split

enum class SplitPolicy { Frame, Sequence };

std::string_view to_string(SplitPolicy p);
SplitPolicy split_policy_from_string(std::string_view s);

struct SplitConfig {
  SplitPolicy policy = SplitPolicy::Frame;
  // Fraction of frames (Frame policy) or whole sequences (Sequence policy).
  double fraction = 0.01;
  std::uint64_t seed = 0;

  static SplitConfig frame_default() { return {SplitPolicy::Frame, 0.01, 0}; }
  static SplitConfig sequence_default() { return {SplitPolicy::Sequence, 0.10, 0}; }
};

struct Split {
  std::vector<SampleSpec> train;
  std::vector<SampleSpec> val;
  std::vector<int> val_sequences;  // Sequence policy only
  SplitPolicy applied = SplitPolicy::Frame;
  bool fell_back = false;
};

// Frame policy: validation centers are spread over the beginning, center and
// end of each sequence; training specs whose frame range intersects any
// validation range are dropped. Sequence policy: whole sequences held out.
// Works on both interpolation and flow specs.
Split split_train_val(const std::vector<int>& sequence_lengths, const std::vector<SampleSpec>& specs,
                      const SplitConfig& cfg);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
  int out_width = 384;
  int out_height = 192;
  bool random_crop = true;
  bool hflip = true;
  bool vflip = true;
  bool temporal_reversal = true;  // ignored for flow samples
};

struct AugmentRecord {
  int crop_x = 0;
  int crop_y = 0;
  int crop_width = 0;
  int crop_height = 0;
  // Source was smaller than the output size and got upscaled first.
  double prescale = 1.0;
  bool hflip = false;
  bool vflip = false;
  bool reversed = false;

  bool operator==(const AugmentRecord&) const = default;
};

// Largest centered crop with the output aspect ratio, no flips.
AugmentRecord identity_augmentation(int src_width, int src_height, const AugmentConfig& cfg);
AugmentRecord sample_augmentation(int src_width, int src_height, SampleKind kind, const AugmentConfig& cfg,
                                  std::mt19937_64& rng);

// Frames in temporal order; reversal reverses that order.
std::vector<Image> apply_augmentation(const std::vector<Image>& frames, const AugmentRecord& rec,
                                      const AugmentConfig& cfg);
Image apply_augmentation(const Image& frame, const AugmentRecord& rec, const AugmentConfig& cfg);
FlowField apply_augmentation(const FlowField& flow, const AugmentRecord& rec, const AugmentConfig& cfg);

// ---------------------------------------------------------------------------
// Samples

struct TrainingSample {
  SampleSpec spec;
  std::vector<Image> inputs;  // four normalized frames
  Image target;               // interpolation: normalized center frame
  FlowField flow;             // flow: displacement in pixels
  NormStats stats;
  AugmentRecord augmentation;
};

// Crops, flips and reverses the raw frames per `rec`, then normalizes.
TrainingSample make_sample(const Sequence& seq, const SampleSpec& spec, const AugmentRecord& rec,
                           const AugmentConfig& cfg);

TrainingSample augment_interpolation(const Sequence& seq, const SampleSpec& spec, const AugmentConfig& cfg,
                                     std::mt19937_64& rng);
TrainingSample augment_flow(const Sequence& seq, const SampleSpec& spec, const AugmentConfig& cfg,
                            std::mt19937_64& rng);

// Stateless per-sample seed derivation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// A set of sample specs over a shared list of sequences.
class Dataset {
 public:
  Dataset() = default;
  Dataset(const std::vector<Sequence>* sequences, std::vector<SampleSpec> specs, AugmentConfig cfg);

  std::size_t size() const { return specs_.size(); }
  bool empty() const { return specs_.empty(); }
  const std::vector<SampleSpec>& specs() const { return specs_; }
  const std::vector<Sequence>& sequences() const { return *sequences_; }
  const AugmentConfig& augment_config() const { return cfg_; }
  SampleKind kind() const;

  // Augmented sample; randomness is a pure function of (seed, index).
  TrainingSample get(std::size_t index, std::uint64_t seed) const;
  // Identity augmentation (validation).
  TrainingSample get_plain(std::size_t index) const;

  Dataset subset(const std::vector<std::size_t>& indices) const;
  Dataset with_specs(std::vector<SampleSpec> specs) const;

 private:
  const std::vector<Sequence>* sequences_ = nullptr;
  std::vector<SampleSpec> specs_;
  AugmentConfig cfg_;
};

struct Batch {
  Tensor inputs;  // N x 4 x H x W
  Tensor target;  // interpolation: N x 1 x H x W
  std::vector<FlowField> flows;
};

Batch collate(const std::vector<TrainingSample>& samples);

// Builds samples for the given indices using up to `workers` threads.
std::vector<TrainingSample> load_samples(const Dataset& ds, const std::vector<std::size_t>& indices,
                                         std::uint64_t seed, bool augment, int workers);

}  // namespace interflow
