#pragma once

// Evaluation metrics: top-1 accuracy, expected calibration error with
// reliability-diagram bins, and cross-run summary tables.

#include <cstdint>
#include <string>
#include <vector>

#include "cds/common.hpp"

namespace cds::metrics {

// Share of rows whose argmax equals the label; ties break toward the lowest
// class index.
double top1(const std::vector<float>& logits, int n, int c, const std::vector<int>& labels);

std::vector<float> softmax_rows(const std::vector<float>& logits, int n, int c);

struct CalibrationBin {
  double lo = 0, hi = 0;       // bin covers (lo, hi]
  long count = 0;
  double mean_confidence = 0;  // 0 for empty bins
  double accuracy = 0;
};

struct CalibrationReport {
  int n_bins = 0;
  std::vector<CalibrationBin> bins;
  double ece = 0;
  double accuracy = 0;
};

// Equal-width bins over (0,1] keyed by max probability;
// ece = sum over non-empty bins of (count/total) * |confidence - accuracy|.
CalibrationReport ece(const std::vector<float>& probs, int n, int c,
                      const std::vector<int>& labels, int n_bins = 15);

double median(std::vector<double> values);

struct RunSummary {
  std::string run_name;
  std::string regime;
  std::string dataset_id;  // checksum-derived identity of the eval set
  std::uint64_t seed = 0;
  double final_top1 = 0;
  double final_train_ce = 0;
  double ece = 0;
};

struct RegimeSummary {
  std::string regime;
  int runs = 0;
  double top1_mean = 0, top1_median = 0;
  double train_ce_mean = 0, train_ce_median = 0;
  double ece_mean = 0, ece_median = 0;
};

// Groups runs by regime; every run must share the eval dataset.
std::vector<RegimeSummary> curve_summary(const std::vector<RunSummary>& runs);

}  // namespace cds::metrics
