#pragma once

// Run outputs: deterministic CSV/SVG emission, atomic file writes, the run
// manifest, and loaders used by the comparison command. Every float is
// printed through one formatter so identical values always produce
// identical bytes.

#include <string>
#include <utility>
#include <vector>

#include "cds/config.hpp"
#include "cds/metrics.hpp"

namespace cds::artifacts {

std::string format_double(double v);

void write_file_atomic(const std::string& path, const std::string& content);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
  static CsvTable parse(const std::string& text);
  int column(const std::string& name) const;  // -1 when absent
};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Self-contained SVG line chart; bytes depend only on the inputs.
std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                          const std::string& ylabel, const std::vector<Series>& series);

// Reliability diagram: per-run accuracy vs confidence over the bins, with
// the identity diagonal for reference and ECE values in the legend.
std::string svg_reliability_diagram(const std::string& title,
                                    const std::vector<metrics::CalibrationReport>& reports,
                                    const std::vector<std::string>& names);

std::string calibration_csv(const metrics::CalibrationReport& report);

struct DatasetInfo {
  std::string kind;
  std::string dir;
  std::vector<std::pair<std::string, std::string>> file_checksums;  // name, hex
  std::string dataset_id;  // combined identity incl. subset selection
};

struct RunManifest {
  std::string source_version;
  std::uint64_t seed = 0;
  config::Config config_snapshot;
  DatasetInfo dataset;
  std::vector<std::string> outputs;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

// Reads summary.csv + manifest.json from a run directory.
metrics::RunSummary load_run_summary(const std::string& run_dir);

}  // namespace cds::artifacts
