#include "interflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

namespace interflow {
namespace {

Image clamp01(Image img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

Image blend(const Image& a, const Image& b) {
  Image out(a.channels, a.height, a.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = 0.5f * (a.data[i] + b.data[i]);
  return out;
}

struct Accumulator {
  double psnr = 0.0;
  double ssim = 0.0;
  double epe = 0.0;
  double fl = 0.0;
  std::size_t n = 0;
};

}  // namespace

namespace {

struct InterpRows {
  metrics::MetricsRow net;
  metrics::MetricsRow blend;
};

InterpRows interpolation_rows(Network& net, const std::vector<Sequence>& sequences, const std::vector<SampleSpec>& specs,
                              const std::string& corpus) {
  Accumulator acc_net, acc_blend;
  for (const auto& spec : specs) {
    const Sequence& seq = sequences.at(spec.sequence);
    const auto idx = spec.input_frames(seq.length());
    std::vector<Image> quad;
    for (int i : idx) quad.push_back(seq.frames.at(i));
    const Image& truth = seq.frames.at(spec.center);
    const Image pred = clamp01(interpolate_color(net, quad));
    const Image lin = blend(seq.frames[spec.center - spec.spacing], seq.frames[spec.center + spec.spacing]);
    acc_net.psnr += metrics::psnr(pred, truth).db;
    acc_net.ssim += metrics::ssim(pred, truth);
    acc_blend.psnr += metrics::psnr(lin, truth).db;
    acc_blend.ssim += metrics::ssim(lin, truth);
    ++acc_net.n;
    ++acc_blend.n;
  }
  if (acc_net.n == 0) throw DataError("eval set '" + corpus + "' has no interpolation sample");
  auto row = [&](const char* method, const Accumulator& a) {
    metrics::MetricsRow r;
    r.method = method;
    r.corpus = corpus;
    r.psnr = a.psnr / static_cast<double>(a.n);
    r.ssim = a.ssim / static_cast<double>(a.n);
    r.n_samples = a.n;
    return r;
  };
  return {row(kNetworkRow, acc_net), row(kLinearBlendRow, acc_blend)};
}

metrics::MetricsReport assemble(const std::vector<InterpRows>& rows) {
  metrics::MetricsReport report;
  report.title = "interpolation: PSNR (dB) / SSIM";
  std::vector<metrics::MetricsRow> net_rows, blend_rows;
  for (const auto& r : rows) {
    report.rows.push_back(r.net);
    report.rows.push_back(r.blend);
    net_rows.push_back(r.net);
    blend_rows.push_back(r.blend);
  }
  report.rows.push_back(metrics::aggregate_rows(kNetworkRow, net_rows));
  report.rows.push_back(metrics::aggregate_rows(kLinearBlendRow, blend_rows));
  return report;
}

}  // namespace

metrics::MetricsReport eval_interpolation(Network& net, const std::vector<EvalSet>& sets) {
  if (net.head() != Head::Interpolation) throw StateError("eval_interpolation needs an interpolation head");
  if (sets.empty()) throw DataError("no interpolation eval sets given");
  std::vector<InterpRows> rows;
  for (const auto& set : sets) {
    std::vector<SampleSpec> specs;
    for (const auto& sp : index_interpolation_samples(sequence_lengths(set.sequences))) {
      if (sp.spacing == 1) specs.push_back(sp);
    }
    rows.push_back(interpolation_rows(net, set.sequences, specs, set.name));
  }
  return assemble(rows);
}

metrics::MetricsReport eval_interpolation_samples(Network& net, const std::vector<Sequence>& sequences,
                                                  const std::vector<SampleSpec>& specs, const std::string& corpus) {
  if (net.head() != Head::Interpolation) throw StateError("eval_interpolation needs an interpolation head");
  return assemble({interpolation_rows(net, sequences, specs, corpus)});
}

std::vector<FlowField> flow_for_sequence(Network& net, const std::vector<Image>& frames, const FlowPostProcess& post) {
  if (net.head() != Head::Flow) throw StateError("flow_for_sequence needs a flow head");
  if (frames.size() < 2) throw DataError("flow_for_sequence needs at least two frames");
  const int len = static_cast<int>(frames.size());
  std::vector<Image> gray;
  for (const auto& f : frames) gray.push_back(to_gray(f));
  const int w = gray.front().width, h = gray.front().height;
  const int pw = (w + 31) / 32 * 32, ph = (h + 31) / 32 * 32;
  const Mode previous = net.mode();
  net.set_mode(Mode::Eval);
  std::vector<FlowField> out;
  for (int t = 0; t + 1 < len; ++t) {
    const SampleSpec spec{0, t, 1, SampleKind::Flow};
    std::vector<Image> quad;
    for (int i : spec.input_frames(len)) quad.push_back(gray[i]);
    const NormalizedFrames norm = normalize_sample(quad);
    Tensor x(1, 4, ph, pw);
    for (int i = 0; i < 4; ++i) {
      const Image p = pad_to(norm.frames[i], pw, ph);
      std::memcpy(x.plane(0, i), p.data.data(), p.data.size() * sizeof(float));
    }
    const Tensor y = net.forward(x);
    FlowField f(h, w);
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        f.u[static_cast<std::size_t>(yy) * w + xx] = y.at(0, 0, yy, xx);
        f.v[static_cast<std::size_t>(yy) * w + xx] = y.at(0, 1, yy, xx);
      }
    }
    out.push_back(post ? post(f, gray[t], gray[t + 1]) : std::move(f));
  }
  net.set_mode(previous);
  return out;
}

metrics::MetricsReport eval_flow(Network& net, const std::vector<EvalSet>& sets, const FlowPostProcess& post) {
  if (net.head() != Head::Flow) throw StateError("eval_flow needs a flow head");
  metrics::MetricsReport report;
  report.title = "flow: EPE (px) / Fl-all (%)";
  std::vector<metrics::MetricsRow> rows;
  for (const auto& set : sets) {
    Accumulator acc;
    for (const auto& seq : set.sequences) {
      if (!seq.has_flow()) continue;
      const auto flows = flow_for_sequence(net, seq.frames, post);
      for (std::size_t i = 0; i < flows.size(); ++i) {
        if (seq.flows[i].valid_count() == 0) continue;
        acc.epe += metrics::epe(flows[i], seq.flows[i]);
        acc.fl += metrics::fl_all(flows[i], seq.flows[i]);
        ++acc.n;
      }
    }
    if (acc.n == 0) {
      spdlog::warn("eval set '{}' has no ground-truth flow; skipped", set.name);
      continue;
    }
    metrics::MetricsRow r;
    r.method = kNetworkRow;
    r.corpus = set.name;
    r.epe = acc.epe / static_cast<double>(acc.n);
    r.fl_all = acc.fl / static_cast<double>(acc.n);
    r.n_samples = acc.n;
    rows.push_back(r);
  }
  if (rows.empty()) throw DataError("no eval set with ground-truth flow");
  report.rows = rows;
  report.rows.push_back(metrics::aggregate_rows(kNetworkRow, rows));
  return report;
}

Comparison compare_pretrained_vs_scratch(const Network& pretrained, const Dataset& train_set, const Dataset& val_set,
                                         const TrainingSchedule& schedule, const std::vector<std::uint64_t>& seeds,
                                         const RunOptions& opts) {
  if (seeds.empty()) throw ConfigError("comparison needs at least one seed");
  Comparison c;
  for (std::uint64_t seed : seeds) {
    ComparisonPair pair;
    pair.seed = seed;
    RunOptions o = opts;
    o.seed = seed;
    const std::string suffix = "seed" + std::to_string(seed);

    Network net = pretrained.head() == Head::Flow ? pretrained : swap_head(pretrained, mix_seed(seed, 0x4EADull));
    o.tag = "pretrained/" + suffix;
    if (!opts.run_dir.empty()) o.run_dir = opts.run_dir / ("pretrained_" + suffix);
    pair.pretrained = finetune(net, train_set, val_set, schedule, o);

    o.tag = "scratch/" + suffix;
    if (!opts.run_dir.empty()) o.run_dir = opts.run_dir / ("scratch_" + suffix);
    pair.scratch = train_from_scratch(pretrained.spec(), train_set, val_set, schedule, o).history;

    pair.ratio = pair.scratch.final_metric() / pair.pretrained.final_metric();
    if (pair.pretrained.final_metric() < pair.scratch.final_metric()) ++c.pretrained_wins;
    c.mean_ratio += pair.ratio / static_cast<double>(seeds.size());
    spdlog::info("seed {}: pretrained EPE {:.4f}, scratch EPE {:.4f}, ratio {:.3f}", seed,
                 pair.pretrained.final_metric(), pair.scratch.final_metric(), pair.ratio);
    c.pairs.push_back(std::move(pair));
  }
  return c;
}

SweepResult low_data_sweep(const Network& net, const Dataset& train_set, const Dataset& val_set, std::vector<int> sizes,
                           int repeats, std::uint64_t seed, const TrainingSchedule& schedule, const RunOptions& opts,
                           std::optional<double> full_set_epe) {
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  SweepResult result;
  result.full_size = static_cast<int>(train_set.size());
  for (int n : sizes) {
    if (n < 1 || static_cast<std::size_t>(n) > train_set.size()) {
      spdlog::warn("sweep size {} dropped: {} training frames available", n, train_set.size());
      continue;
    }
    RunOptions o = opts;
    o.tag = opts.tag == "train" ? "sweep" : opts.tag;
    const SubsampleResult sub = subsample_finetune(net, train_set, val_set, n, repeats, mix_seed(seed, n), schedule, o);
    SweepPoint p;
    p.size = n;
    for (const auto& h : sub.runs) p.per_repeat.push_back(h.final_metric());
    p.mean_epe = sub.mean_final_val;
    spdlog::info("sweep n={}: mean EPE {:.4f}", n, p.mean_epe);
    result.points.push_back(std::move(p));
  }
  if (full_set_epe) {
    result.full_epe = *full_set_epe;
  } else {
    RunOptions o = opts;
    o.tag = "sweep/full";
    if (!opts.run_dir.empty()) o.run_dir = opts.run_dir / "full";
    const SubsampleResult full =
        subsample_finetune(net, train_set, val_set, result.full_size, 1, seed, schedule, o);
    result.full_epe = full.mean_final_val;
  }
  return result;
}

void write_series_csv(const std::filesystem::path& path, const std::vector<Series>& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "series,x,y\n";
  out.precision(10);
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) out << s.label << "," << s.x[i] << "," << s.y[i] << "\n";
  }
}

void write_series_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 160, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series) {
    for (double v : s.x) {
      x0 = std::min(x0, v);
      x1 = std::max(x1, v);
    }
    for (double v : s.y) {
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << yv << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(4) << xv << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 7];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      os << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
    }
    os << "\"/>\n";
    const double ly = T + 16 + 18.0 * s;
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << os.str();
}

std::vector<Series> comparison_series(const Comparison& c) {
  std::vector<Series> out;
  for (const auto& p : c.pairs) {
    for (int arm = 0; arm < 2; ++arm) {
      const History& h = arm == 0 ? p.pretrained : p.scratch;
      Series s;
      s.label = std::string(arm == 0 ? "pretrained" : "scratch") + " seed " + std::to_string(p.seed);
      const auto curve = h.val_curve();
      for (std::size_t i = 0; i < curve.size(); ++i) {
        s.x.push_back(static_cast<double>(i + 1));
        s.y.push_back(curve[i]);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<Series> sweep_series(const SweepResult& r) {
  Series mean{"mean EPE", {}, {}};
  for (const auto& p : r.points) {
    mean.x.push_back(p.size);
    mean.y.push_back(p.mean_epe);
  }
  Series full{"full set (" + std::to_string(r.full_size) + ")", {}, {}};
  if (!r.points.empty()) {
    full.x = {static_cast<double>(r.points.front().size), static_cast<double>(r.points.back().size)};
    full.y = {r.full_epe, r.full_epe};
  }
  return {mean, full};
}

}  // namespace interflow
