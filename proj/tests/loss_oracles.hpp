#pragma once

// Independent brute-force oracles for every loss, written as direct
// per-term summation over the published formulas. They share no code with
// the implementations they check.

#include <cmath>
#include <vector>

namespace oracles {

inline double dot(const std::vector<double>& z, int d, int a, int b) {
  double s = 0;
  for (int j = 0; j < d; ++j) s += z[size_t(a) * d + j] * z[size_t(b) * d + j];
  return s;
}

// Mean over rows of -log softmax(logits)[label].
inline double cross_entropy(const std::vector<double>& logits, const std::vector<int>& labels,
                            int n, int c) {
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double denom = 0;
    for (int j = 0; j < c; ++j) denom += std::exp(logits[size_t(i) * c + j]);
    total += -std::log(std::exp(logits[size_t(i) * c + labels[size_t(i)]]) / denom);
  }
  return total / n;
}

// Eq. 4, term by term: anchors are rows 0..n-1, positive of i is i+n,
// denominator runs over all 2n rows except i itself.
inline double nt_xent(const std::vector<double>& z, int n, int d, double tau) {
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const double num = std::exp(dot(z, d, i, i + n) / tau);
    double denom = 0;
    for (int k = 0; k < 2 * n; ++k)
      if (k != i) denom += std::exp(dot(z, d, i, k) / tau);
    total += -std::log(num / denom);
  }
  return total;
}

// SupCon L_out: all rows anchor; positives share the label; log outside the
// mean over positives; anchors with no positive are skipped.
inline double supcon(const std::vector<double>& z, const std::vector<int>& labels, int m,
                     int d, double tau) {
  double total = 0;
  for (int a = 0; a < m; ++a) {
    std::vector<int> positives;
    for (int p = 0; p < m; ++p)
      if (p != a && labels[size_t(p)] == labels[size_t(a)]) positives.push_back(p);
    if (positives.empty()) continue;
    double denom = 0;
    for (int k = 0; k < m; ++k)
      if (k != a) denom += std::exp(dot(z, d, a, k) / tau);
    double anchor = 0;
    for (int p : positives) anchor += -std::log(std::exp(dot(z, d, a, p) / tau) / denom);
    total += anchor / double(positives.size());
  }
  return total;
}

// Mean-over-batch KL(softmax(teacher/T) || softmax(student/T)).
inline double kl_soft(const std::vector<double>& student, const std::vector<double>& teacher,
                      int n, int c, double temp) {
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double ds = 0, dt = 0;
    for (int j = 0; j < c; ++j) {
      ds += std::exp(student[size_t(i) * c + j] / temp);
      dt += std::exp(teacher[size_t(i) * c + j] / temp);
    }
    for (int j = 0; j < c; ++j) {
      const double pt = std::exp(teacher[size_t(i) * c + j] / temp) / dt;
      const double ps = std::exp(student[size_t(i) * c + j] / temp) / ds;
      total += pt * (std::log(pt) - std::log(ps));
    }
  }
  return total / n;
}

// Sum over pairs of the batch-mean L2 distance between flattened features.
inline double pairwise_l2(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b, int n) {
  double total = 0;
  for (size_t s = 0; s < a.size(); ++s) {
    const long per = long(a[s].size()) / n;
    double batch = 0;
    for (int i = 0; i < n; ++i) {
      double sq = 0;
      for (long j = 0; j < per; ++j) {
        const double dv = a[s][size_t(i * per + j)] - b[s][size_t(i * per + j)];
        sq += dv * dv;
      }
      batch += std::sqrt(sq);
    }
    total += batch / n;
  }
  return total;
}

}  // namespace oracles
