#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "interflow/metrics.hpp"

namespace interflow::metrics {
namespace {

using nlohmann::json;

json opt_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fmt(const std::optional<double>& v, const char* spec) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, *v);
  return buf;
}

}  // namespace

const MetricsRow* MetricsReport::find(const std::string& method, const std::string& corpus) const {
  for (const auto& r : rows) {
    if (r.method == method && r.corpus == corpus) return &r;
  }
  return nullptr;
}

std::string MetricsReport::to_table() const {
  std::vector<std::array<std::string, 7>> cells;
  cells.push_back({"method", "corpus", "psnr_db", "ssim", "epe_px", "fl_all_pct", "n"});
  for (const auto& r : rows) {
    cells.push_back({r.method, r.corpus, fmt(r.psnr, "%.3f"), fmt(r.ssim, "%.4f"), fmt(r.epe, "%.4f"),
                     fmt(r.fl_all, "%.2f"), std::to_string(r.n_samples)});
  }
  std::array<std::size_t, 7> widths{};
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::ostringstream os;
  if (!title.empty()) os << "# " << title << "\n";
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) os << "  ";
      if (i < 2) {
        os << row[i] << std::string(widths[i] - row[i].size(), ' ');
      } else {
        os << std::string(widths[i] - row[i].size(), ' ') << row[i];
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string MetricsReport::to_json() const {
  json j;
  j["title"] = title;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"method", r.method},
                         {"corpus", r.corpus},
                         {"psnr", opt_to_json(r.psnr)},
                         {"ssim", opt_to_json(r.ssim)},
                         {"epe", opt_to_json(r.epe)},
                         {"fl_all", opt_to_json(r.fl_all)},
                         {"n_samples", r.n_samples}});
  }
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport rep;
  try {
    const json j = json::parse(text);
    rep.title = j.value("title", "");
    for (const auto& r : j.at("rows")) {
      MetricsRow row;
      row.method = r.at("method").get<std::string>();
      row.corpus = r.at("corpus").get<std::string>();
      row.psnr = opt_from_json(r, "psnr");
      row.ssim = opt_from_json(r, "ssim");
      row.epe = opt_from_json(r, "epe");
      row.fl_all = opt_from_json(r, "fl_all");
      row.n_samples = r.at("n_samples").get<std::size_t>();
      rep.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
  return rep;
}

void MetricsReport::save(const std::filesystem::path& stem) const {
  auto txt = stem;
  txt += ".txt";
  auto js = stem;
  js += ".json";
  std::ofstream(txt) << to_table();
  std::ofstream(js) << to_json() << "\n";
}

MetricsReport MetricsReport::load(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open " + json_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

MetricsRow aggregate_rows(const std::string& method, const std::vector<MetricsRow>& rows) {
  MetricsRow out;
  out.method = method;
  out.corpus = "All";
  auto combine = [&](std::optional<double> MetricsRow::*field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (!(r.*field) || r.n_samples == 0) continue;
      sum += *(r.*field) * static_cast<double>(r.n_samples);
      n += r.n_samples;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  out.psnr = combine(&MetricsRow::psnr);
  out.ssim = combine(&MetricsRow::ssim);
  out.epe = combine(&MetricsRow::epe);
  out.fl_all = combine(&MetricsRow::fl_all);
  for (const auto& r : rows) out.n_samples += r.n_samples;
  return out;
}

}  // namespace interflow::metrics
