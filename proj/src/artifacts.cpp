#include "cds/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cds::artifacts {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const auto tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp);
    f.write(content.data(), std::streamsize(content.size()));
  }
  std::filesystem::rename(tmp, path);
}

std::string CsvTable::str() const {
  std::string out;
  for (size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

CsvTable CsvTable::parse(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return int(i);
  return -1;
}

namespace {

constexpr int kWidth = 640, kHeight = 420;
constexpr int kLeft = 64, kRight = 24, kTop = 40, kBottom = 48;

const char* series_color(size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

std::string svg_header(const std::string& title) {
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
       "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " +
       std::to_string(kWidth) + " " + std::to_string(kHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(kWidth / 2) +
       "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
       title + "</text>\n";
  return s;
}

struct范 {
  double lo, hi;
};

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                          const std::string& ylabel, const std::vector<Series>& series) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

  std::string s = svg_header(title);
  s += "<rect x=\"" + std::to_string(kLeft) + "\" y=\"" + std::to_string(kTop) + "\" width=\"" +
       format_double(plot_w) + "\" height=\"" + format_double(plot_h) +
       "\" fill=\"none\" stroke=\"#333\"/>\n";
  // axis extents
  s += "<text x=\"" + std::to_string(kLeft) + "\" y=\"" + std::to_string(kHeight - 28) +
       "\" font-family=\"sans-serif\" font-size=\"11\">" + format_double(xmin) + "</text>\n";
  s += "<text x=\"" + std::to_string(kWidth - kRight) + "\" y=\"" + std::to_string(kHeight - 28) +
       "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
       format_double(xmax) + "</text>\n";
  s += "<text x=\"8\" y=\"" + format_double(kTop + plot_h) +
       "\" font-family=\"sans-serif\" font-size=\"11\">" + format_double(ymin) + "</text>\n";
  s += "<text x=\"8\" y=\"" + std::to_string(kTop + 10) +
       "\" font-family=\"sans-serif\" font-size=\"11\">" + format_double(ymax) + "</text>\n";
  s += "<text x=\"" + std::to_string(kWidth / 2) + "\" y=\"" + std::to_string(kHeight - 8) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xlabel +
       "</text>\n";
  s += "<text x=\"14\" y=\"" + std::to_string(kTop - 8) +
       "\" font-family=\"sans-serif\" font-size=\"12\">" + ylabel + "</text>\n";

  for (size_t i = 0; i < series.size(); ++i) {
    const auto& sr = series[i];
    if (sr.points.empty()) continue;
    s += "<polyline fill=\"none\" stroke=\"" + std::string(series_color(i)) +
         "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : sr.points)
      s += format_double(px(x)) + "," + format_double(py(y)) + " ";
    s += "\"/>\n";
    const int ly = kTop + 14 + int(i) * 16;
    s += "<rect x=\"" + std::to_string(kLeft + 8) + "\" y=\"" + std::to_string(ly - 9) +
         "\" width=\"10\" height=\"10\" fill=\"" + series_color(i) + "\"/>\n";
    s += "<text x=\"" + std::to_string(kLeft + 22) + "\" y=\"" + std::to_string(ly) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + sr.name + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string svg_reliability_diagram(const std::string& title,
                                    const std::vector<metrics::CalibrationReport>& reports,
                                    const std::vector<std::string>& names) {
  std::vector<Series> series;
  // identity reference
  series.push_back({"perfect", {{0.0, 0.0}, {1.0, 1.0}}});
  for (size_t i = 0; i < reports.size(); ++i) {
    Series s;
    s.name = names[i] + " (ece " + format_double(reports[i].ece) + ")";
    for (const auto& b : reports[i].bins)
      if (b.count > 0) s.points.push_back({b.mean_confidence, b.accuracy});
    series.push_back(std::move(s));
  }
  return svg_line_plot(title, "confidence", "accuracy", series);
}

std::string calibration_csv(const metrics::CalibrationReport& report) {
  CsvTable t;
  t.header = {"bin_lo", "bin_hi", "count", "conf", "acc"};
  for (const auto& b : report.bins)
    t.rows.push_back({format_double(b.lo), format_double(b.hi), std::to_string(b.count),
                      format_double(b.mean_confidence), format_double(b.accuracy)});
  std::string out = t.str();
  out += "# ece," + format_double(report.ece) + "\n";
  out += "# accuracy," + format_double(report.accuracy) + "\n";
  return out;
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["source_version"] = source_version;
  j["seed"] = seed;
  nlohmann::json cfg;
  for (const auto& [k, v] : config_snapshot.entries()) cfg[k] = v;
  j["config"] = cfg;
  j["dataset"] = {{"kind", dataset.kind}, {"dir", dataset.dir}, {"id", dataset.dataset_id}};
  nlohmann::json files;
  for (const auto& [name, sum] : dataset.file_checksums) files[name] = sum;
  j["dataset"]["files"] = files;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    m.source_version = j.at("source_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (auto& [k, v] : j.at("config").items())
      m.config_snapshot.set(k, v.get<std::string>());
    m.dataset.kind = j.at("dataset").at("kind").get<std::string>();
    m.dataset.dir = j.at("dataset").at("dir").get<std::string>();
    m.dataset.dataset_id = j.at("dataset").at("id").get<std::string>();
    for (auto& [k, v] : j.at("dataset").at("files").items())
      m.dataset.file_checksums.emplace_back(k, v.get<std::string>());
    for (auto& v : j.at("outputs")) m.outputs.push_back(v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  write_file_atomic(path, manifest.to_json());
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return RunManifest::from_json(ss.str());
}

metrics::RunSummary load_run_summary(const std::string& run_dir) {
  namespace fs = std::filesystem;
  const auto summary_path = fs::path(run_dir) / "summary.csv";
  std::ifstream f(summary_path);
  if (!f) throw DataError("missing " + summary_path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  auto table = CsvTable::parse(ss.str());
  metrics::RunSummary s;
  s.run_name = fs::path(run_dir).filename().string();
  for (const auto& row : table.rows) {
    if (row.size() < 2) continue;
    if (row[0] == "final_top1") s.final_top1 = std::stod(row[1]);
    if (row[0] == "final_train_ce") s.final_train_ce = std::stod(row[1]);
    if (row[0] == "ece") s.ece = std::stod(row[1]);
    if (row[0] == "regime") s.regime = row[1];
    if (row[0] == "seed") s.seed = std::stoull(row[1]);
    if (row[0] == "dataset_id") s.dataset_id = row[1];
  }
  return s;
}

}  // namespace cds::artifacts
