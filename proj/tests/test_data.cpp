#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "interflow/data.hpp"
#include "interflow/synthetic.hpp"
#include "oracles.hpp"

using namespace interflow;

namespace {

std::vector<Sequence> small_corpus(int n, int length, std::array<double, 2> velocity, std::uint64_t seed = 1) {
  SyntheticConfig cfg;
  cfg.sequences = n;
  cfg.length = length;
  cfg.fixed_velocity = velocity;
  return generate_synthetic_corpus(cfg, seed);
}

AugmentConfig same_size() {
  AugmentConfig a;
  a.out_width = 64;
  a.out_height = 32;
  return a;
}

}  // namespace

TEST_CASE("interpolation sampler equals exhaustive enumeration") {
  for (int L = 0; L <= 50; ++L) {
    const auto specs = index_interpolation_samples({L});
    CHECK(static_cast<int>(specs.size()) == oracle::interpolation_sample_count(L));
    for (const auto& s : specs) {
      const auto f = s.input_frames(L);
      CHECK(f[0] == s.center - 3 * s.spacing);
      CHECK(f[3] == s.center + 3 * s.spacing);
      CHECK(f[0] >= 0);
      CHECK(f[3] < L);
    }
  }
  CHECK(index_interpolation_samples({7}).size() == 1);
  CHECK(index_interpolation_samples({13}).size() == 8);
  CHECK(index_interpolation_samples({}).empty());
  const auto multi = index_interpolation_samples({13, 7});
  CHECK(multi.size() == 9);
  CHECK(multi.back().sequence == 1);
}

TEST_CASE("flow samples clamp the outer frames") {
  const auto specs = index_flow_samples({5});
  REQUIRE(specs.size() == 4);
  CHECK(specs[0].input_frames(5) == std::array<int, 4>{0, 0, 1, 2});
  CHECK(specs[3].input_frames(5) == std::array<int, 4>{2, 3, 4, 4});
  CHECK(index_flow_samples({2})[0].input_frames(2) == std::array<int, 4>{0, 0, 1, 1});
}

TEST_CASE("frame split keeps validation disjoint from training") {
  const std::vector<int> lengths{200, 300, 150};
  const auto specs = index_interpolation_samples(lengths);
  const Split split = split_train_val(lengths, specs, {SplitPolicy::Frame, 0.02, 4});
  CHECK(split.applied == SplitPolicy::Frame);
  CHECK_FALSE(split.fell_back);
  CHECK(split.val.size() == 4 + 6 + 3);
  for (const auto& v : split.val) {
    CHECK(v.spacing == 1);
    for (const auto& t : split.train) {
      if (t.sequence != v.sequence) continue;
      const bool disjoint = t.last_frame() < v.first_frame() || v.last_frame() < t.first_frame();
      CHECK(disjoint);
    }
  }
  // Centers spread over beginning, middle and end of the 300-frame sequence.
  std::vector<int> centers;
  for (const auto& v : split.val)
    if (v.sequence == 1) centers.push_back(v.center);
  REQUIRE(centers.size() == 6);
  CHECK(centers.front() < 100);
  CHECK(centers.back() > 200);
  CHECK(std::any_of(centers.begin(), centers.end(), [](int c) { return c > 100 && c < 200; }));

  const Split again = split_train_val(lengths, specs, {SplitPolicy::Frame, 0.02, 4});
  CHECK(again.val == split.val);
}

TEST_CASE("frame split falls back to whole sequences on small corpora") {
  const std::vector<int> lengths(20, 20);
  const auto specs = index_interpolation_samples(lengths);
  const Split split = split_train_val(lengths, specs, SplitConfig::frame_default());
  CHECK(split.fell_back);
  CHECK(split.applied == SplitPolicy::Sequence);
  CHECK(split.val_sequences.size() == 2);
  CHECK(split.train.size() + split.val.size() == specs.size());
}

TEST_CASE("sequence split") {
  const std::vector<int> lengths(10, 9);
  const auto specs = index_flow_samples(lengths);
  const Split split = split_train_val(lengths, specs, {SplitPolicy::Sequence, 0.3, 1});
  CHECK(split.val_sequences.size() == 3);
  std::set<int> held(split.val_sequences.begin(), split.val_sequences.end());
  for (const auto& s : split.train) CHECK(held.count(s.sequence) == 0);
  for (const auto& s : split.val) CHECK(held.count(s.sequence) == 1);
  CHECK_THROWS_AS(split_train_val({9}, index_flow_samples({9}), {SplitPolicy::Sequence, 0.3, 1}), DataError);
  CHECK_THROWS_AS(split_train_val(lengths, specs, {SplitPolicy::Sequence, 1.5, 1}), ConfigError);
}

TEST_CASE("augmentation parameters stay within bounds") {
  AugmentConfig cfg;
  cfg.out_width = 64;
  cfg.out_height = 32;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const AugmentRecord r = sample_augmentation(160, 60, SampleKind::Interpolation, cfg, rng);
    CHECK(r.crop_width >= 64);
    CHECK(r.crop_width <= 120);
    CHECK(r.crop_x >= 0);
    CHECK(r.crop_y >= 0);
    CHECK(r.crop_x + r.crop_width <= 160);
    CHECK(r.crop_y + r.crop_height <= 60);
    CHECK(std::abs(r.crop_width * 32 - r.crop_height * 64) <= 64);
    const AugmentRecord f = sample_augmentation(160, 60, SampleKind::Flow, cfg, rng);
    CHECK_FALSE(f.reversed);
  }
  const AugmentRecord id = identity_augmentation(160, 60, cfg);
  CHECK(id.crop_width == 120);
  CHECK(id.crop_x == 20);
  CHECK_FALSE(id.hflip);
}

TEST_CASE("small sources are upscaled before cropping") {
  AugmentConfig cfg;
  std::mt19937_64 rng(4);
  const AugmentRecord r = sample_augmentation(64, 32, SampleKind::Interpolation, cfg, rng);
  CHECK(r.prescale > 1.0);
  const auto seqs = small_corpus(1, 8, {1, 0});
  const auto s = make_sample(seqs[0], index_flow_samples({8})[2], r, cfg);
  CHECK(s.inputs[0].width == 384);
  CHECK(s.flow.width == 384);
}

TEST_CASE("augmented flow stays consistent with augmented frames") {
  const auto seqs = small_corpus(1, 6, {2, 1}, 9);
  const AugmentConfig cfg = same_size();
  const SampleSpec spec = index_flow_samples({6})[2];
  for (bool h : {false, true}) {
    for (bool v : {false, true}) {
      AugmentRecord rec = identity_augmentation(64, 32, cfg);
      rec.hflip = h;
      rec.vflip = v;
      const auto raw = apply_augmentation(std::vector<Image>{seqs[0].frames[2], seqs[0].frames[3]}, rec, cfg);
      const FlowField f = apply_augmentation(seqs[0].flows[2], rec, cfg);
      int checked = 0;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 64; ++x) {
          const std::size_t i = y * 64 + x;
          if (!f.valid[i]) continue;
          const int tx = x + static_cast<int>(std::lround(f.u[i])), ty = y + static_cast<int>(std::lround(f.v[i]));
          if (tx < 0 || tx >= 64 || ty < 0 || ty >= 32) continue;
          CHECK(raw[1].at(0, ty, tx) == doctest::Approx(raw[0].at(0, y, x)).epsilon(1e-5));
          ++checked;
        }
      CHECK(checked > 1000);
      CHECK(f.u[0] == doctest::Approx(h ? -2.0 : 2.0));
      CHECK(f.v[0] == doctest::Approx(v ? -1.0 : 1.0));
    }
  }
  (void)spec;
}

TEST_CASE("crop and rescale scale the flow vectors") {
  FlowField f(32, 64, 2.0f, -1.0f);
  AugmentConfig cfg;
  cfg.out_width = 32;
  cfg.out_height = 16;
  AugmentRecord rec;
  rec.crop_x = 8;
  rec.crop_y = 4;
  rec.crop_width = 48;
  rec.crop_height = 24;
  const FlowField g = apply_augmentation(f, rec, cfg);
  CHECK(g.width == 32);
  CHECK(g.u[5] == doctest::Approx(2.0 * 32.0 / 48.0));
  CHECK(g.v[5] == doctest::Approx(-1.0 * 16.0 / 24.0));
}

TEST_CASE("interpolation samples are normalized with the input statistics") {
  const auto seqs = small_corpus(1, 10, {0, 0});
  const Dataset ds(&seqs, index_interpolation_samples({10}), same_size());
  const TrainingSample s = ds.get_plain(0);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& img : s.inputs)
    for (float v : img.data) {
      sum += v;
      sq += double(v) * v;
      ++n;
    }
  CHECK(sum / n == doctest::Approx(0.0).scale(1.0).epsilon(1e-5));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-4));
  // Static scene: target equals every input after the shared normalization.
  for (std::size_t i = 0; i < s.target.data.size(); ++i) CHECK(s.target.data[i] == doctest::Approx(s.inputs[1].data[i]));
}

TEST_CASE("temporal reversal reverses the input order") {
  const auto seqs = small_corpus(1, 10, {2, 0});
  const AugmentConfig cfg = same_size();
  const SampleSpec spec = index_interpolation_samples({10})[0];
  AugmentRecord rec = identity_augmentation(64, 32, cfg);
  const TrainingSample fwd = make_sample(seqs[0], spec, rec, cfg);
  rec.reversed = true;
  const TrainingSample rev = make_sample(seqs[0], spec, rec, cfg);
  for (int k = 0; k < 4; ++k) CHECK(rev.inputs[k].data == fwd.inputs[3 - k].data);
  CHECK(rev.target.data == fwd.target.data);
}

TEST_CASE("sample randomness is a pure function of seed and index") {
  const auto seqs = small_corpus(2, 12, {1, 1});
  AugmentConfig cfg = same_size();
  cfg.out_width = 32;
  cfg.out_height = 16;
  const Dataset ds(&seqs, index_interpolation_samples({12, 12}), cfg);
  CHECK(ds.get(3, 42).augmentation == ds.get(3, 42).augmentation);
  CHECK(ds.get(3, 42).inputs[0].data == ds.get(3, 42).inputs[0].data);
  bool differs = false;
  for (std::uint64_t s = 0; s < 8 && !differs; ++s) differs = !(ds.get(3, s).augmentation == ds.get(3, 42).augmentation);
  CHECK(differs);

  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6};
  const auto serial = load_samples(ds, idx, 7, true, 1);
  const auto parallel = load_samples(ds, idx, 7, true, 4);
  for (std::size_t i = 0; i < idx.size(); ++i) CHECK(serial[i].inputs[2].data == parallel[i].inputs[2].data);
  const Batch b = collate(serial);
  CHECK(b.inputs.shape() == Shape{7, 4, 16, 32});
  CHECK(b.target.shape() == Shape{7, 1, 16, 32});
}

TEST_CASE("datasets reject inconsistent specs") {
  auto seqs = small_corpus(1, 8, {0, 0});
  seqs[0].flows.clear();
  CHECK_THROWS_AS(Dataset(&seqs, index_flow_samples({8}), same_size()), DataError);
  CHECK_THROWS_AS(Dataset(&seqs, {SampleSpec{3, 4, 1, SampleKind::Interpolation}}, same_size()), DataError);
}
