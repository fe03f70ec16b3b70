// interflow: command-line driver for pretraining, fine-tuning and evaluation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "interflow/checkpoint.hpp"
#include "interflow/config.hpp"
#include "interflow/evaluation.hpp"
#include "interflow/flowio.hpp"
#include "interflow/kernels.hpp"
#include "interflow/synthetic.hpp"
#include "interflow/training.hpp"
#include "interflow/video_io.hpp"

namespace fs = std::filesystem;
using namespace interflow;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kNumerical = 5,
  kState = 6,
};

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string seed;
  std::string workers;
  std::string epochs;
  std::string device = "cpu";
  std::string out;
  bool force = false;
  bool verbose = false;
};

struct Args {
  std::string checkpoint;
  std::string resume;
  std::vector<std::string> inputs;
  std::vector<int> sizes;
  std::vector<std::uint64_t> seeds;
};

Config build_config(const Common& c, const std::string& epochs_section) {
  Config cfg = Config::defaults();
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.seed.empty()) cfg.set("seed", c.seed);
  if (!c.workers.empty()) cfg.set("workers", c.workers);
  if (!c.epochs.empty()) {
    if (epochs_section.empty()) throw ConfigError("--epochs does not apply to this command");
    cfg.set(epochs_section + ".epochs", c.epochs);
  }
  cfg.set("device", c.device);
  if (cfg.get_string("device") != "cpu") {
    throw ConfigError("device '" + cfg.get_string("device") + "' is not available; only 'cpu' is supported");
  }
  if (cfg.get_int("workers") < 1) throw ConfigError("workers must be >= 1");
  return cfg;
}

fs::path prepare_out(const Common& c, bool allow_existing = false) {
  if (c.out.empty()) throw ConfigError("--out is required");
  const fs::path out(c.out);
  if (fs::exists(out) && !fs::is_empty(out) && !c.force && !allow_existing) {
    throw ConfigError("output directory " + out.string() + " is not empty; pass --force to reuse it");
  }
  fs::create_directories(out);
  return out;
}

fs::path data_root(const Config& cfg) { return fs::path(cfg.get_string("data.root")); }

std::vector<Sequence> load_or_generate(const Config& cfg, const std::string& key) {
  const std::string manifest = cfg.get_string(key);
  if (!manifest.empty()) return load_corpus(manifest, data_root(cfg));
  spdlog::info("{} not set; generating a synthetic corpus", key);
  return generate_synthetic_corpus(synthetic_from_config(cfg), cfg.get_u64("seed"));
}

std::vector<EvalSet> load_eval_sets(const Config& cfg, const std::vector<std::string>& manifests, bool color) {
  std::vector<EvalSet> sets;
  for (const auto& m : manifests) sets.push_back({fs::path(m).parent_path().filename().string(), load_corpus(m, data_root(cfg), color)});
  if (sets.empty()) {
    spdlog::info("no eval manifests given; using a synthetic corpus");
    sets.push_back({cfg.get_string("synthetic.corpus"),
                    generate_synthetic_corpus(synthetic_from_config(cfg), mix_seed(cfg.get_u64("seed"), 0xE7A1ull))});
  }
  return sets;
}

RunOptions run_options(const Config& cfg, const fs::path& dir, const std::string& tag) {
  RunOptions o;
  o.seed = cfg.get_u64("seed");
  o.workers = cfg.get_int("workers");
  o.run_dir = dir;
  o.tag = tag;
  return o;
}

Network load_network(const std::string& path, std::optional<Head> expected) {
  if (path.empty()) throw ConfigError("a checkpoint is required (--checkpoint or model.checkpoint)");
  Network net = network_from_checkpoint(load_checkpoint(path));
  if (expected && net.head() != *expected) {
    throw StateError("checkpoint " + path + " has head '" + std::string(to_string(net.head())) + "'; this command needs '" +
                     std::string(to_string(*expected)) + "'");
  }
  return net;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

int cmd_gen_synthetic(const Common& c) {
  const Config cfg = build_config(c, "");
  const fs::path out = prepare_out(c);
  const auto corpus = generate_synthetic_corpus(synthetic_from_config(cfg), cfg.get_u64("seed"));
  write_corpus(out, corpus);
  cfg.save(out / "config.yaml");
  spdlog::info("wrote {} sequences to {}", corpus.size(), out.string());
  return kOk;
}

int cmd_pretrain(const Common& c, const Args& a) {
  const Config cfg = build_config(c, "pretrain");
  const fs::path out = prepare_out(c, !a.resume.empty());
  cfg.save(out / "config.yaml");
  const auto sequences = load_or_generate(cfg, "data.manifest");
  const auto specs = index_interpolation_samples(sequence_lengths(sequences));
  const Split split = split_train_val(sequence_lengths(sequences), specs, split_from_config(cfg));
  const AugmentConfig aug = augment_from_config(cfg);
  const Dataset train_set(&sequences, split.train, aug);
  const Dataset val_set(&sequences, split.val, aug);
  spdlog::info("pretraining on {} samples, validating on {}", train_set.size(), val_set.size());

  Network net(network_spec_from_config(cfg), mix_seed(cfg.get_u64("seed"), 1));
  RunOptions opts = run_options(cfg, out, "pretrain");
  opts.resume = a.resume;
  const History h = pretrain(net, train_set, &val_set, schedule_from_config(cfg, "pretrain"), opts);

  auto report = eval_interpolation_samples(net, sequences, split.val, "validation");
  report.title = "pretrain validation: PSNR (dB) / SSIM";
  report.save(out / "report");
  std::cout << report.to_table();
  spdlog::info("best validation loss {:.5f} at epoch {}", h.best_val.value_or(0.0), h.best_epoch);
  return kOk;
}

struct FlowData {
  std::vector<Sequence> sequences;
  std::vector<Sequence> val_sequences;  // separate corpus when data.val_manifest is set
  Dataset train;
  Dataset val;
};

// Training flow samples plus a validation set: either data.val_manifest or a
// holdout of finetune.val_fraction of the training data.
void load_flow_data(const Config& cfg, FlowData& d) {
  d.sequences = load_or_generate(cfg, "data.manifest");
  const AugmentConfig aug = augment_from_config(cfg);
  const auto specs = index_flow_samples(sequence_lengths(d.sequences));
  std::vector<SampleSpec> train_specs = specs;
  if (!cfg.get_string("data.val_manifest").empty()) {
    d.val_sequences = load_corpus(cfg.get_string("data.val_manifest"), data_root(cfg));
    d.val = Dataset(&d.val_sequences, index_flow_samples(sequence_lengths(d.val_sequences)), aug);
  } else {
    SplitConfig sc;
    sc.fraction = cfg.get_double("finetune.val_fraction");
    sc.seed = cfg.get_u64("seed");
    sc.policy = d.sequences.size() >= 10 ? SplitPolicy::Sequence : SplitPolicy::Frame;
    const Split split = split_train_val(sequence_lengths(d.sequences), specs, sc);
    train_specs = split.train;
    d.val = Dataset(&d.sequences, split.val, aug);
  }
  d.train = Dataset(&d.sequences, train_specs, aug);
  const int frames = cfg.get_int("finetune.frames");
  if (frames > 0) {
    if (static_cast<std::size_t>(frames) > d.train.size()) {
      throw DataError("finetune.frames=" + std::to_string(frames) + " but only " + std::to_string(d.train.size()) +
                      " training frames are available");
    }
    std::vector<std::size_t> idx(d.train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(mix_seed(cfg.get_u64("seed"), 0x5B5E7ull));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(frames);
    std::sort(idx.begin(), idx.end());
    d.train = d.train.subset(idx);
  }
  spdlog::info("flow data: {} training pairs, {} validation pairs", d.train.size(), d.val.size());
}

void finish_flow_run(Network& net, const FlowData& d, const fs::path& out, const std::string& title) {
  const std::vector<Sequence>& vs = d.val_sequences.empty() ? d.sequences : d.val_sequences;
  std::vector<Sequence> held;
  std::vector<int> seen;
  for (const auto& sp : d.val.specs()) {
    if (std::find(seen.begin(), seen.end(), sp.sequence) != seen.end()) continue;
    seen.push_back(sp.sequence);
    held.push_back(vs[sp.sequence]);
  }
  auto report = eval_flow(net, {{"validation", held}});
  report.title = title;
  report.save(out / "report");
  std::cout << report.to_table();
}

int cmd_finetune(const Common& c, const Args& a, bool scratch) {
  const std::string section = "finetune";
  Config cfg = build_config(c, section);
  if (!a.checkpoint.empty()) cfg.set("model.checkpoint", a.checkpoint);
  const fs::path out = prepare_out(c, !a.resume.empty());
  cfg.save(out / "config.yaml");
  FlowData d;
  load_flow_data(cfg, d);
  const TrainingSchedule schedule = schedule_from_config(cfg, section);
  RunOptions opts = run_options(cfg, out, scratch ? "scratch" : "finetune");
  opts.resume = a.resume;
  if (scratch) {
    TrainedNetwork t = train_from_scratch(network_spec_from_config(cfg), d.train, d.val, schedule, opts);
    finish_flow_run(t.net, d, out, "scratch validation: EPE (px) / Fl-all (%)");
    return kOk;
  }
  Network net = load_network(cfg.get_string("model.checkpoint"), std::nullopt);
  if (net.head() == Head::Interpolation) net = swap_head(net, mix_seed(cfg.get_u64("seed"), 0x4EADull));
  finetune(net, d.train, d.val, schedule, opts);
  finish_flow_run(net, d, out, "finetune validation: EPE (px) / Fl-all (%)");
  return kOk;
}

int cmd_eval_interp(const Common& c, const Args& a) {
  const Config cfg = build_config(c, "");
  const fs::path out = prepare_out(c);
  Network net = load_network(a.checkpoint, Head::Interpolation);
  const auto sets = load_eval_sets(cfg, a.inputs, true);
  const auto report = eval_interpolation(net, sets);
  report.save(out / "report");
  std::cout << report.to_table();
  return kOk;
}

int cmd_eval_flow(const Common& c, const Args& a) {
  const Config cfg = build_config(c, "");
  const fs::path out = prepare_out(c);
  Network net = load_network(a.checkpoint, Head::Flow);
  const auto sets = load_eval_sets(cfg, a.inputs, false);
  const auto report = eval_flow(net, sets);
  report.save(out / "report");
  for (const auto& set : sets) {
    for (const auto& seq : set.sequences) {
      if (!seq.has_flow()) continue;
      const fs::path dir = out / "vis" / set.name / seq.id;
      fs::create_directories(dir);
      const auto flows = flow_for_sequence(net, seq.frames);
      for (std::size_t i = 0; i < flows.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu", i);
        flowio::write_image(dir / (std::string("pred_") + name + ".png"), flowio::flow_to_color(flows[i]));
        flowio::write_image(dir / (std::string("gt_") + name + ".png"), flowio::flow_to_color(seq.flows[i]));
      }
    }
  }
  std::cout << report.to_table();
  return kOk;
}

int cmd_sweep(const Common& c, const Args& a) {
  Config cfg = build_config(c, "finetune");
  if (!a.checkpoint.empty()) cfg.set("model.checkpoint", a.checkpoint);
  const fs::path out = prepare_out(c);
  cfg.save(out / "config.yaml");
  FlowData d;
  load_flow_data(cfg, d);
  const Network net = load_network(cfg.get_string("model.checkpoint"), std::nullopt);
  const std::vector<int> sizes = a.sizes.empty() ? cfg.get_int_list("sweep.sizes") : a.sizes;
  const SweepResult r = low_data_sweep(net, d.train, d.val, sizes, cfg.get_int("sweep.repeats"), cfg.get_u64("seed"),
                                       schedule_from_config(cfg, "finetune"), run_options(cfg, out, "sweep"));
  metrics::MetricsReport report;
  report.title = "low-data sweep: validation EPE (px)";
  for (const auto& p : r.points) report.rows.push_back({"n=" + std::to_string(p.size), "validation", {}, {}, p.mean_epe, {}, static_cast<std::size_t>(p.size)});
  report.rows.push_back({"full", "validation", {}, {}, r.full_epe, {}, static_cast<std::size_t>(r.full_size)});
  report.save(out / "report");
  write_series_csv(out / "sweep.csv", sweep_series(r));
  write_series_svg(out / "sweep.svg", "Validation EPE vs. training frames", "training frames", "EPE (px)", sweep_series(r));
  std::cout << report.to_table();
  return kOk;
}

int cmd_compare(const Common& c, const Args& a) {
  Config cfg = build_config(c, "finetune");
  if (!a.checkpoint.empty()) cfg.set("model.checkpoint", a.checkpoint);
  const fs::path out = prepare_out(c);
  cfg.save(out / "config.yaml");
  FlowData d;
  load_flow_data(cfg, d);
  const Network net = load_network(cfg.get_string("model.checkpoint"), std::nullopt);
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) {
    const std::uint64_t s = cfg.get_u64("seed");
    seeds = {s, s + 1, s + 2};
  }
  const Comparison cmp = compare_pretrained_vs_scratch(net, d.train, d.val, schedule_from_config(cfg, "finetune"), seeds,
                                                       run_options(cfg, out, "compare"));
  nlohmann::json summary{{"pretrained_wins", cmp.pretrained_wins}, {"pairs", cmp.pairs.size()}, {"mean_ratio", cmp.mean_ratio}};
  for (const auto& p : cmp.pairs) {
    summary["per_seed"].push_back({{"seed", p.seed},
                                   {"pretrained_final_epe", p.pretrained.final_metric()},
                                   {"scratch_final_epe", p.scratch.final_metric()},
                                   {"ratio", p.ratio}});
  }
  write_json(out / "summary.json", summary);
  const auto series = comparison_series(cmp);
  write_series_csv(out / "compare.csv", series);
  write_series_svg(out / "compare.svg", "Validation EPE: pretrained vs. scratch", "epoch", "EPE (px)", series);
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

int cmd_infer(const Common& c, const Args& a) {
  const Config cfg = build_config(c, "");
  const fs::path out = prepare_out(c);
  Network net = load_network(a.checkpoint, std::nullopt);
  std::vector<Image> frames;
  for (const auto& f : a.inputs) frames.push_back(flowio::read_image(f));
  if (net.head() == Head::Interpolation) {
    if (static_cast<int>(frames.size()) != net.spec().n_input_frames) {
      throw CLI::ValidationError("frames", "interpolation needs exactly " + std::to_string(net.spec().n_input_frames) +
                                               " frames, got " + std::to_string(frames.size()));
    }
    Image pred = interpolate_color(net, frames);
    for (float& v : pred.data) v = std::clamp(v, 0.0f, 1.0f);
    flowio::write_image(out / "interpolated.png", pred);
    spdlog::info("wrote {}", (out / "interpolated.png").string());
    return kOk;
  }
  if (frames.size() < 2) throw CLI::ValidationError("frames", "flow inference needs at least 2 frames");
  const auto flows = flow_for_sequence(net, frames);
  for (std::size_t i = 0; i < flows.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "flow_%04zu", i);
    flowio::write_flo(out / (std::string(name) + ".flo"), flows[i]);
    flowio::write_image(out / (std::string(name) + ".png"), flowio::flow_to_color(flows[i]));
  }
  spdlog::info("wrote {} flow fields to {}", flows.size(), out.string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("interflow");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"Self-supervised frame interpolation pretraining and optical flow fine-tuning"};
  app.require_subcommand(1);
  Common common;
  Args args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_file, "YAML config file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "Config override key=value (repeatable)");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--workers", common.workers, "Data loading threads");
    sub->add_option("--device", common.device, "Compute device (cpu)");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_flag("--force", common.force, "Reuse a non-empty output directory");
    sub->add_flag("-v,--verbose", common.verbose, "Debug logging");
  };

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus with ground-truth flow");
  add_common(gen);
  auto* pre = app.add_subcommand("pretrain", "Train the interpolation network on unlabeled video");
  add_common(pre);
  pre->add_option("--epochs", common.epochs, "Override the epoch budget");
  pre->add_option("--resume", args.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  auto* fine = app.add_subcommand("finetune", "Fine-tune a pretrained network for optical flow");
  add_common(fine);
  fine->add_option("--epochs", common.epochs, "Override the epoch budget");
  fine->add_option("--checkpoint", args.checkpoint, "Pretrained checkpoint (overrides model.checkpoint)");
  fine->add_option("--resume", args.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  auto* scratch = app.add_subcommand("scratch", "Train a flow network from random initialization");
  add_common(scratch);
  scratch->add_option("--epochs", common.epochs, "Override the epoch budget");
  scratch->add_option("--resume", args.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  auto* ei = app.add_subcommand("eval-interp", "Evaluate interpolation PSNR/SSIM");
  add_common(ei);
  ei->add_option("--checkpoint", args.checkpoint, "Interpolation checkpoint")->required()->check(CLI::ExistingFile);
  ei->add_option("sets", args.inputs, "Eval set manifests (default: synthetic)");
  auto* ef = app.add_subcommand("eval-flow", "Evaluate flow EPE/Fl-all");
  add_common(ef);
  ef->add_option("--checkpoint", args.checkpoint, "Flow checkpoint")->required()->check(CLI::ExistingFile);
  ef->add_option("sets", args.inputs, "Eval set manifests (default: synthetic)");
  auto* sw = app.add_subcommand("sweep", "Validation EPE as a function of training frames");
  add_common(sw);
  sw->add_option("--epochs", common.epochs, "Override the fine-tuning epoch budget");
  sw->add_option("--checkpoint", args.checkpoint, "Pretrained checkpoint")->check(CLI::ExistingFile);
  sw->add_option("--sizes", args.sizes, "Training set sizes (default: sweep.sizes)")->delimiter(',');
  auto* cmp = app.add_subcommand("compare", "Pretrained vs. from-scratch fine-tuning");
  add_common(cmp);
  cmp->add_option("--epochs", common.epochs, "Override the fine-tuning epoch budget");
  cmp->add_option("--checkpoint", args.checkpoint, "Pretrained checkpoint")->check(CLI::ExistingFile);
  cmp->add_option("--seeds", args.seeds, "Seeds for the paired runs")->delimiter(',');
  auto* inf = app.add_subcommand("infer", "Interpolate a frame or estimate flow for image files");
  add_common(inf);
  inf->add_option("--checkpoint", args.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("frames", args.inputs, "Input frames in temporal order")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (common.verbose) spdlog::set_level(spdlog::level::debug);
  spdlog::debug("kernels: {}", kernels::name(kernels::active().isa));

  try {
    if (*gen) return cmd_gen_synthetic(common);
    if (*pre) return cmd_pretrain(common, args);
    if (*fine) return cmd_finetune(common, args, false);
    if (*scratch) return cmd_finetune(common, args, true);
    if (*ei) return cmd_eval_interp(common, args);
    if (*ef) return cmd_eval_flow(common, args);
    if (*sw) return cmd_sweep(common, args);
    if (*cmp) return cmd_compare(common, args);
    if (*inf) return cmd_infer(common, args);
  } catch (const CLI::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kNumerical;
  } catch (const StateError& e) {
    spdlog::error("{}", e.what());
    return kState;
  } catch (const DataError& e) {
    spdlog::error("data: {}", e.what());
    return kData;
  } catch (const ShapeError& e) {
    spdlog::error("shape: {}", e.what());
    return kData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kFailure;
}
