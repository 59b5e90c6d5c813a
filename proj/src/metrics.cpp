#include "cds/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cds::metrics {

double top1(const std::vector<float>& logits, int n, int c, const std::vector<int>& labels) {
  if (n < 1) throw DimensionError("top1: empty batch");
  if (int(labels.size()) != n || long(logits.size()) != long(n) * c)
    throw DimensionError("top1: size mismatch");
  long correct = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + size_t(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[size_t(i)]) ++correct;
  }
  return double(correct) / n;
}

std::vector<float> softmax_rows(const std::vector<float>& logits, int n, int c) {
  std::vector<float> probs(logits.size());
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + size_t(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int j = 0; j < c; ++j) denom += std::exp(double(row[j] - mx));
    for (int j = 0; j < c; ++j)
      probs[size_t(i) * c + j] = float(std::exp(double(row[j] - mx)) / denom);
  }
  return probs;
}

CalibrationReport ece(const std::vector<float>& probs, int n, int c,
                      const std::vector<int>& labels, int n_bins) {
  if (n < 1) throw DimensionError("ece: empty batch");
  if (n_bins < 1) throw ConfigError("ece: n_bins must be >= 1");
  if (int(labels.size()) != n || long(probs.size()) != long(n) * c)
    throw DimensionError("ece: size mismatch");
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = 0; j < c; ++j) s += probs[size_t(i) * c + j];
    if (std::abs(s - 1.0) > 1e-5)
      throw NumericError("ece: probability row " + std::to_string(i) + " sums to " +
                         std::to_string(s));
  }

  CalibrationReport rep;
  rep.n_bins = n_bins;
  rep.bins.resize(size_t(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    rep.bins[size_t(b)].lo = double(b) / n_bins;
    rep.bins[size_t(b)].hi = double(b + 1) / n_bins;
  }
  std::vector<double> conf_sum(size_t(n_bins), 0.0);
  std::vector<long> correct(size_t(n_bins), 0);
  long total_correct = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = probs.data() + size_t(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    const double conf = row[best];
    // bins partition (0,1]: value v lands in bin ceil(v*n_bins) - 1
    int bin = int(std::ceil(conf * n_bins)) - 1;
    bin = std::min(std::max(bin, 0), n_bins - 1);
    auto& b = rep.bins[size_t(bin)];
    b.count += 1;
    conf_sum[size_t(bin)] += conf;
    const bool ok = best == labels[size_t(i)];
    correct[size_t(bin)] += ok;
    total_correct += ok;
  }
  rep.accuracy = double(total_correct) / n;
  for (int b = 0; b < n_bins; ++b) {
    auto& bin = rep.bins[size_t(b)];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[size_t(b)] / double(bin.count);
    bin.accuracy = double(correct[size_t(b)]) / double(bin.count);
    rep.ece += (double(bin.count) / n) * std::abs(bin.mean_confidence - bin.accuracy);
  }
  return rep;
}

double median(std::vector<double> values) {
  if (values.empty()) throw DimensionError("median of empty list");
  std::sort(values.begin(), values.end());
  const size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<RegimeSummary> curve_summary(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw DimensionError("curve_summary: no runs");
  for (const auto& r : runs)
    if (r.dataset_id != runs.front().dataset_id)
      throw Error("curve_summary: run '" + r.run_name + "' was evaluated on dataset " +
                  r.dataset_id + ", others on " + runs.front().dataset_id);
  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) groups[r.regime].push_back(&r);
  std::vector<RegimeSummary> out;
  for (auto& [regime, members] : groups) {
    RegimeSummary s;
    s.regime = regime;
    s.runs = int(members.size());
    std::vector<double> top1s, ces, eces;
    for (const auto* m : members) {
      top1s.push_back(m->final_top1);
      ces.push_back(m->final_train_ce);
      eces.push_back(m->ece);
      s.top1_mean += m->final_top1;
      s.train_ce_mean += m->final_train_ce;
      s.ece_mean += m->ece;
    }
    s.top1_mean /= s.runs;
    s.train_ce_mean /= s.runs;
    s.ece_mean /= s.runs;
    s.top1_median = median(top1s);
    s.train_ce_median = median(ces);
    s.ece_median = median(eces);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cds::metrics
