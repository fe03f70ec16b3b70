// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.
//
//   interflow_acceptance [--out DIR] [--only 1,2,...] [--toy FILE]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "interflow/checkpoint.hpp"
#include "interflow/config.hpp"
#include "interflow/evaluation.hpp"
#include "interflow/flowio.hpp"
#include "interflow/metrics.hpp"
#include "interflow/synthetic.hpp"
#include "interflow/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace interflow;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

// ---------------------------------------------------------------------------

Outcome architecture() {
  const std::vector<int> input_row{4, 128, 128, 256, 256, 512, 1024, 1024, 512, 512, 256};
  const NetworkSpec spec = NetworkSpec::reference();
  Network net(spec, 1);
  net.set_mode(Mode::Eval);
  std::string problems;
  const std::size_t params = net.parameter_count();
  const std::size_t expected = oracle::parameter_count(spec);
  if (params != expected) problems += format(" params %zu != oracle %zu;", params, expected);
  for (auto [w, h] : {std::pair{384, 192}, std::pair{64, 32}}) {
    Tensor x(Shape{1, 4, h, w});
    std::mt19937_64 rng(2);
    x.vec() = oracle::random_vector(x.numel(), rng, -1, 1);
    const Tensor y = net.forward(x);
    if (!(y.shape() == Shape{1, 1, h, w})) problems += format(" output %s at %dx%d;", y.shape().str().c_str(), w, h);
    std::vector<int> trace;
    for (const auto& b : net.trace()) trace.push_back(b.input.c);
    if (trace != input_row) problems += format(" channel trace mismatch at %dx%d;", w, h);
    const auto& bottleneck = net.trace()[5].input;
    if (bottleneck.h != h / 32 || bottleneck.w != w / 32) problems += format(" bottleneck size at %dx%d;", w, h);
  }
  return {problems.empty(), problems.empty() ? format("trace 4,128,128,256,256,512,1024,1024,512,512,256; %zu params == oracle; "
                                                   "shapes ok at 384x192 and 64x32",
                                                   params)
                                             : problems};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(11);
  double ssim_err = 0, epe_err = 0, fl_err = 0;
  for (int i = 0; i < 20; ++i) {
    const int h = 16 + static_cast<int>(rng() % 24), w = 16 + static_cast<int>(rng() % 40);
    const auto a = oracle::random_vector(h * w, rng);
    auto b = a;
    std::uniform_real_distribution<float> noise(-0.3f, 0.3f);
    for (auto& x : b) x = std::clamp(x + noise(rng), 0.0f, 1.0f);
    ssim_err = std::max(ssim_err, std::abs(metrics::ssim_plane(a.data(), b.data(), h, w, {}) - oracle::ssim(a, b, h, w)));

    FlowField gt(h, w), pred(h, w);
    gt.u = oracle::random_vector(gt.size(), rng, -20, 20);
    gt.v = oracle::random_vector(gt.size(), rng, -20, 20);
    pred.u = oracle::random_vector(gt.size(), rng, -20, 20);
    pred.v = oracle::random_vector(gt.size(), rng, -20, 20);
    for (auto& m : gt.valid) m = (rng() % 4) != 0;
    gt.valid[0] = 1;
    epe_err = std::max(epe_err, std::abs(metrics::epe(pred, gt) - oracle::epe(pred, gt)));
    fl_err = std::max(fl_err, std::abs(metrics::fl_all(pred, gt) - oracle::fl_all(pred, gt)));
  }
  const Image target(1, 16, 16, 0.0f), pred(1, 16, 16, 0.1f);
  const double err = static_cast<double>(0.1f);
  const double closed_form = 20.0 * std::log10(1.0 / err);
  const double psnr = metrics::psnr(pred, target).db;
  const double psnr_err = std::abs(psnr - closed_form);
  const bool pass = ssim_err <= 1e-6 && epe_err <= 1e-6 && fl_err <= 1e-6 && psnr_err <= 1e-9 && std::abs(psnr - 20.0) < 1e-6;
  return {pass, format("max |SSIM - ref| %.2e, |EPE - ref| %.2e, |Fl-all - ref| %.2e over 20 cases; PSNR %.9f dB for "
                    "uniform error 0.1 (float32), closed form %.9f",
                    ssim_err, epe_err, fl_err, psnr, closed_form)};
}

// Worst per-component relative error between analytic and central-difference
// gradients.
double gradient_error(const std::function<double(const std::vector<float>&)>& f, const std::vector<float>& x,
                      const std::vector<float>& analytic) {
  const float h = 1.0f / 4096.0f;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<float> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double num = (f(xp) - f(xm)) / (static_cast<double>(xp[i]) - xm[i]);
    const double scale = std::max(std::abs(num), std::abs(static_cast<double>(analytic[i])));
    if (scale < 1e-9) continue;
    worst = std::max(worst, std::abs(num - analytic[i]) / scale);
  }
  return worst;
}

Outcome gradient_checks() {
  std::mt19937_64 rng(5);
  const Shape s{2, 1, 16, 16};
  Tensor pred(s), target(s);
  target.vec() = oracle::random_vector(target.numel(), rng, -1.5f, 1.5f);
  pred.vec() = oracle::random_vector(pred.numel(), rng, -1.5f, 1.5f);
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (std::abs(pred.data()[i] - target.data()[i]) < 1e-2f) pred.data()[i] += 0.05f;
  }
  Tensor grad;
  metrics::interpolation_loss_batch(pred, target, &grad);
  const double interp_err = gradient_error(
      [&](const std::vector<float>& v) {
        Tensor t(s);
        t.vec() = v;
        return metrics::interpolation_loss_batch(t, target, nullptr);
      },
      pred.vec(), grad.vec());

  const Shape fs2{2, 2, 16, 16};
  Tensor flow(fs2);
  flow.vec() = oracle::random_vector(flow.numel(), rng, -4, 4);
  std::vector<FlowField> gt(2, FlowField(16, 16));
  for (auto& g : gt) {
    g.u = oracle::random_vector(g.size(), rng, -4, 4);
    g.v = oracle::random_vector(g.size(), rng, -4, 4);
    for (auto& m : g.valid) m = (rng() % 5) != 0;
  }
  Tensor fgrad;
  metrics::epe_loss_batch(flow, gt, &fgrad);
  const double epe_err = gradient_error(
      [&](const std::vector<float>& v) {
        Tensor t(fs2);
        t.vec() = v;
        return metrics::epe_loss_batch(t, gt, nullptr);
      },
      flow.vec(), fgrad.vec());
  return {interp_err <= 1e-3 && epe_err <= 1e-3,
          format("max relative error: interpolation loss %.2e, EPE loss %.2e (16x16, batch 2)", interp_err, epe_err)};
}

Outcome sampler() {
  int mismatches = 0;
  for (int L = 0; L <= 50; ++L) {
    std::set<std::tuple<int, int>> expected;
    for (int s = 1; s <= 2; ++s)
      for (int t = 0; t < L; ++t)
        if (t - 3 * s >= 0 && t + 3 * s <= L - 1) expected.insert({t, s});
    std::set<std::tuple<int, int>> got;
    const auto specs = index_interpolation_samples({L});
    for (const auto& sp : specs) got.insert({sp.center, sp.spacing});
    if (got != expected || specs.size() != expected.size()) ++mismatches;
  }
  const std::size_t n7 = index_interpolation_samples({7}).size(), n13 = index_interpolation_samples({13}).size();
  return {mismatches == 0 && n7 == 1 && n13 == 8,
          format("%d mismatching lengths in 0..50; L=7 -> %zu, L=13 -> %zu", mismatches, n7, n13)};
}

Outcome round_trips(const fs::path& dir) {
  fs::create_directories(dir);
  std::mt19937_64 rng(8);
  bool flo_ok = true, kitti_ok = true;
  for (int i = 0; i < 10; ++i) {
    const int h = 1 + static_cast<int>(rng() % 64), w = 1 + static_cast<int>(rng() % 128);
    FlowField f(h, w);
    f.u = oracle::random_vector(f.size(), rng, -300, 300);
    f.v = oracle::random_vector(f.size(), rng, -300, 300);
    flowio::write_flo(dir / "f.flo", f);
    const FlowField g = flowio::read_flo(dir / "f.flo");
    flo_ok &= g.u == f.u && g.v == f.v;
    for (std::size_t k = 0; k < f.size(); ++k) {
      f.u[k] = std::round(f.u[k] * 64.0f) / 64.0f;
      f.v[k] = std::round(f.v[k] * 64.0f) / 64.0f;
      f.valid[k] = (rng() % 7) != 0;
    }
    flowio::write_kitti_flow(dir / "f.png", f);
    const FlowField k = flowio::read_kitti_flow(dir / "f.png");
    for (std::size_t j = 0; j < f.size(); ++j) {
      kitti_ok &= k.valid[j] == f.valid[j];
      if (f.valid[j]) kitti_ok &= k.u[j] == f.u[j] && k.v[j] == f.v[j];
    }
  }
  Network net(NetworkSpec::reference().scaled(16), 3);
  Adam adam;
  adam.step(net, 1e-4);
  Checkpoint c = capture_checkpoint(net, &adam);
  c.tag = "acceptance";
  save_checkpoint(dir / "a.ckpt", c);
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  const bool ckpt_ok = read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt");
  return {flo_ok && kitti_ok && ckpt_ok, format(".flo bit-exact: %s; KITTI PNG exact at 1/64 px: %s; checkpoint "
                                             "save/load/save byte-identical: %s",
                                             flo_ok ? "yes" : "no", kitti_ok ? "yes" : "no", ckpt_ok ? "yes" : "no")};
}

Outcome schedule_replay() {
  const auto lr = replay_lr(TrainingSchedule::pretrain_default(), std::vector<double>(12, 1.0));
  std::vector<int> drops;
  for (int e = 1; e < 12; ++e)
    if (lr[e] < lr[e - 1]) drops.push_back(e);
  const bool milestones_ok = std::abs(lr.front() - 1e-4) < 1e-15 && std::abs(lr.back() - 6.25e-6) < 1e-15 &&
                             drops == std::vector<int>{3, 6, 8, 10};
  const auto plateau = replay_lr(TrainingSchedule::finetune_default(), std::vector<double>(40, 0.5));
  int first_drop = -1;
  for (int e = 1; e < static_cast<int>(plateau.size()) && first_drop < 0; ++e)
    if (plateau[e] < plateau[e - 1]) first_drop = e;
  const bool plateau_ok = first_drop == 20;
  return {milestones_ok && plateau_ok, format("milestones: %.3g -> %.3g, halved after epochs %d,%d,%d,%d; plateau: first "
                                           "halving after epoch %d of a constant series",
                                           lr.front(), lr.back(), drops.size() > 0 ? drops[0] : -1,
                                           drops.size() > 1 ? drops[1] : -1, drops.size() > 2 ? drops[2] : -1,
                                           drops.size() > 3 ? drops[3] : -1, first_drop)};
}

// ---------------------------------------------------------------------------
// Toy pipeline shared by criteria 7 to 10.

struct Toy {
  Config cfg;
  // Flow corpora: single translating layer, 100 x 3 frames gives 200
  // training pairs.
  int flow_length = 3;
  int flow_layers = 1;
  double flow_speed_max = 8.0;
  int flow_train_sequences = 100;
  int flow_val_sequences = 20;
  int interp_eval_sequences = 8;
  fs::path out;
  std::vector<Sequence> pretrain_corpus;
  std::vector<Sequence> flow_train;
  std::vector<Sequence> flow_val;
  Dataset flow_train_set;
  Dataset flow_val_set;

  bool pretrained = false;
  Network net;
  History pretrain_history;

  std::optional<Comparison> comparison;
  std::optional<SweepResult> sweep;

  RunOptions options(const std::string& sub, std::uint64_t seed) const {
    RunOptions o;
    o.seed = seed;
    o.workers = cfg.get_int("workers");
    o.run_dir = out / sub;
    o.tag = sub;
    return o;
  }

  SyntheticConfig flow_corpus(int sequences) const {
    SyntheticConfig s = synthetic_from_config(cfg);
    s.sequences = sequences;
    s.length = flow_length;
    s.layers = flow_layers;
    s.speed_min = 0.0;
    s.speed_max = flow_speed_max;
    return s;
  }

  void prepare_flow_data() {
    if (!flow_train.empty()) return;
    const std::uint64_t seed = cfg.get_u64("seed");
    flow_train = generate_synthetic_corpus(flow_corpus(flow_train_sequences), mix_seed(seed, 0xF10));
    flow_val = generate_synthetic_corpus(flow_corpus(flow_val_sequences), mix_seed(seed, 0xF11));
    const AugmentConfig aug = augment_from_config(cfg);
    flow_train_set = Dataset(&flow_train, index_flow_samples(sequence_lengths(flow_train)), aug);
    flow_val_set = Dataset(&flow_val, index_flow_samples(sequence_lengths(flow_val)), aug);
  }

  void ensure_pretrained() {
    if (pretrained) return;
    const std::uint64_t seed = cfg.get_u64("seed");
    pretrain_corpus = generate_synthetic_corpus(synthetic_from_config(cfg), seed);
    const auto specs = index_interpolation_samples(sequence_lengths(pretrain_corpus));
    const Split split = split_train_val(sequence_lengths(pretrain_corpus), specs, split_from_config(cfg));
    const AugmentConfig aug = augment_from_config(cfg);
    const Dataset train_set(&pretrain_corpus, split.train, aug);
    const Dataset val_set(&pretrain_corpus, split.val, aug);
    spdlog::info("toy pretraining: {} training samples, {} validation samples", train_set.size(), val_set.size());
    net = Network(network_spec_from_config(cfg), mix_seed(seed, 1));
    pretrain_history = pretrain(net, train_set, &val_set, schedule_from_config(cfg, "pretrain"), options("pretrain", seed));
    pretrained = true;
  }

  void ensure_comparison() {
    if (comparison) return;
    ensure_pretrained();
    prepare_flow_data();
    const std::vector<std::uint64_t> s{1, 2, 3};
    comparison = compare_pretrained_vs_scratch(net, flow_train_set, flow_val_set, schedule_from_config(cfg, "finetune"),
                                               s, options("compare", cfg.get_u64("seed")));
    write_series_csv(out / "compare.csv", comparison_series(*comparison));
    write_series_svg(out / "compare.svg", "Validation EPE: pretrained vs. scratch", "epoch", "EPE (px)",
                     comparison_series(*comparison));
  }
};

Outcome toy_pipeline(Toy& toy) {
  toy.ensure_comparison();
  const auto curve = toy.pretrain_history.train_curve();
  const double first = curve.front(), last = curve.back();
  const double drop = 1.0 - last / first;
  const double epe = toy.comparison->pairs.front().pretrained.final_metric();
  const bool pass = static_cast<int>(curve.size()) == 12 && drop >= 0.5 && epe < 1.5;
  return {pass, format("pretrain loss %.4f -> %.4f over %zu epochs (%.1f%% decrease, need >= 50%%); fine-tuned on %zu "
                    "flow frames: validation EPE %.3f px (need < 1.5)",
                    first, last, curve.size(), drop * 100.0, toy.flow_train_set.size(), epe)};
}

Outcome pretraining_benefit(Toy& toy) {
  toy.ensure_comparison();
  std::string per;
  for (const auto& p : toy.comparison->pairs) {
    per += format(" seed %llu: %.3f vs %.3f;", static_cast<unsigned long long>(p.seed), p.pretrained.final_metric(),
               p.scratch.final_metric());
  }
  const int wins = toy.comparison->pretrained_wins;
  const int pairs = static_cast<int>(toy.comparison->pairs.size());
  return {wins >= 2, format("pretrained beats scratch in %d of %d seed pairs (need >= 2), final EPE pretrained vs scratch:",
                         wins, pairs) +
                         per + format(" mean scratch/pretrained ratio %.3f", toy.comparison->mean_ratio)};
}

Outcome low_data_shape(Toy& toy) {
  toy.ensure_comparison();
  double full = 0.0;
  for (const auto& p : toy.comparison->pairs) full += p.pretrained.final_metric();
  full /= static_cast<double>(toy.comparison->pairs.size());
  const auto sizes = toy.cfg.get_int_list("sweep.sizes");
  toy.sweep = low_data_sweep(toy.net, toy.flow_train_set, toy.flow_val_set, sizes, toy.cfg.get_int("sweep.repeats"),
                             toy.cfg.get_u64("seed"), schedule_from_config(toy.cfg, "finetune"),
                             toy.options("sweep", toy.cfg.get_u64("seed")), full);
  write_series_csv(toy.out / "sweep.csv", sweep_series(*toy.sweep));
  write_series_svg(toy.out / "sweep.svg", "Validation EPE vs. training frames", "training frames", "EPE (px)",
                   sweep_series(*toy.sweep));
  std::map<int, double> mean;
  for (const auto& p : toy.sweep->points) mean[p.size] = p.mean_epe;
  if (!mean.count(25) || !mean.count(200)) return {false, "sweep is missing n=25 or n=200"};
  std::string rest;
  for (const auto& [n, e] : mean) rest += format(" n=%d: %.3f;", n, e);
  return {mean[200] <= mean[25], format("mean validation EPE over %d repeats:", toy.cfg.get_int("sweep.repeats")) + rest +
                                     format(" full set %.3f (need n=200 <= n=25)", toy.sweep->full_epe)};
}

Outcome interpolation_sanity(Toy& toy) {
  toy.ensure_pretrained();
  auto eval_corpus = [&](std::array<double, 2> velocity, std::uint64_t salt, const std::string& name) {
    SyntheticConfig s = synthetic_from_config(toy.cfg);
    s.fixed_velocity = velocity;
    s.sequences = toy.interp_eval_sequences;
    return EvalSet{name, generate_synthetic_corpus(s, mix_seed(toy.cfg.get_u64("seed"), salt))};
  };
  const auto report = eval_interpolation(
      toy.net, {eval_corpus({0.0, 0.0}, 0x5717, "zero_motion"), eval_corpus({6.0, 0.0}, 0x6F7, "motion_6px")});
  report.save(toy.out / "interpolation_report");
  const double still_net = report.find(kNetworkRow, "zero_motion")->psnr.value();
  const double still_blend = report.find(kLinearBlendRow, "zero_motion")->psnr.value();
  const double move_net = report.find(kNetworkRow, "motion_6px")->psnr.value();
  const double move_blend = report.find(kLinearBlendRow, "motion_6px")->psnr.value();
  const bool still_ok = still_net > still_blend - 0.5;
  const bool move_ok = move_net >= move_blend + 1.0;
  return {still_ok && move_ok,
          format("zero motion: network %.2f dB vs blend %.2f dB (need > blend - 0.5: %s); 6 px/frame: network %.2f dB vs "
              "blend %.2f dB (need >= blend + 1: %s)",
              still_net, still_blend, still_ok ? "ok" : "fail", move_net, move_blend, move_ok ? "ok" : "fail")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_out";
  std::string toy_file;
  std::vector<int> only;
  app.add_option("--out", out, "Output directory");
  app.add_option("--toy", toy_file, "Toy pipeline config (YAML)");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Toy toy;
  try {
    toy.cfg = Config::defaults();
    if (!toy_file.empty()) toy.cfg.merge_file(toy_file);
    toy.out = out;
    fs::create_directories(toy.out);
    toy.cfg.save(toy.out / "toy_config.yaml");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: %s\n", e.what());
    return 2;
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"architecture fidelity", architecture},
      {"metric oracles", metric_oracles},
      {"gradient checks", gradient_checks},
      {"sampler oracle", sampler},
      {"format round-trips", [&] { return round_trips(toy.out / "round_trips"); }},
      {"schedule replay", schedule_replay},
      {"toy pipeline end-to-end", [&] { return toy_pipeline(toy); }},
      {"pretraining benefit", [&] { return pretraining_benefit(toy); }},
      {"low-data shape", [&] { return low_data_shape(toy); }},
      {"interpolation sanity", [&] { return interpolation_sanity(toy); }},
  };

  std::vector<std::string> lines;
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string line = format("criterion %2d %-26s %s  %s (%.0f s)", id, (criteria[i].first + ":").c_str(),
                                 o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    lines.push_back(line);
    ++ran;
    failed += o.pass ? 0 : 1;
  }
  std::ofstream summary(toy.out / "acceptance.txt");
  for (const auto& l : lines) summary << l << "\n";
  std::printf("acceptance: %d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
