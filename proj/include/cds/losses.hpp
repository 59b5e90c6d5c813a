#pragma once

// Every training loss in the laboratory: cross entropy, the NT-Xent and
// SupCon contrastive losses, soft KL distillation, and the composite
// objectives for deep supervision, contrastive deep supervision, its
// semi-supervised extension, and both distillation variants.
//
// Composites return a LossBundle: the differentiable total plus the raw
// (unweighted) value of every component, so curves and tests can inspect
// each term. The total is exactly the weighted sum of the components.

#include <string>
#include <utility>
#include <vector>

#include "cds/nn.hpp"
#include "cds/tensor.hpp"

namespace cds::losses {

struct LossWeights {
  double alpha = 0.3;    // deep-supervision CE terms
  double beta = 1.0;     // layer-consistency KL terms
  double lambda1 = 1.0;  // contrastive terms
  double lambda2 = 1.0;  // embedding / feature distillation
  double lambda3 = 1.0;  // final-logit KL distillation
  double tau = 0.5;      // contrastive temperature
  double temperature = 4.0;  // distillation softmax temperature

  void validate() const {
    if (tau <= 0) throw ConfigError("loss: tau must be positive");
    if (temperature <= 0) throw ConfigError("loss: distill temperature must be positive");
    for (double v : {alpha, beta, lambda1, lambda2, lambda3})
      if (v < 0) throw ConfigError("loss: weights must be non-negative");
  }
};

template <typename T>
struct LossBundle {
  Tensor<T> total;
  std::vector<std::pair<std::string, T>> components;  // unweighted values

  bool has(const std::string& name) const {
    for (auto& [n, v] : components)
      if (n == name) return true;
    return false;
  }

  T value(const std::string& name) const {
    for (auto& [n, v] : components)
      if (n == name) return v;
    throw Error("loss bundle has no component '" + name + "'");
  }
};

namespace detail {

template <typename T>
class BundleBuilder {
public:
  explicit BundleBuilder(Tape<T>& tape) : tape_(tape) {}

  void add(const std::string& name, const Tensor<T>& term, double weight) {
    bundle_.components.emplace_back(name, term.item());
    if (weight == 0.0) return;
    auto weighted = weight == 1.0 ? term : scale(term, T(weight));
    bundle_.total = bundle_.total.defined() ? cds::add(bundle_.total, weighted) : weighted;
  }

  LossBundle<T> finish() {
    if (!bundle_.total.defined()) bundle_.total = tape_.constant_scalar(T(0));
    return std::move(bundle_);
  }

private:
  Tape<T>& tape_;
  LossBundle<T> bundle_;
};

template <typename T>
void require_unit_rows(const Tensor<T>& z, const char* who) {
  const int n = z.dim(0), d = z.dim(1);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = 0; j < d; ++j) {
      const double v = z.values()[size_t(i) * d + j];
      s += v * v;
    }
    if (std::abs(std::sqrt(s) - 1.0) > 1e-4)
      throw NumericError(std::string(who) + ": row " + std::to_string(i) +
                         " is not unit-norm (|row| = " + std::to_string(std::sqrt(s)) + ")");
  }
}

// Row-stable log-softmax: subtracting the detached row max cancels exactly
// in both value and gradient.
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& logits) {
  auto shifted = sub_rowbroadcast(logits, row_max_detached(logits));
  auto lse = log_op(row_sum(exp_op(shifted)));
  return sub_rowbroadcast(shifted, lse);
}

// Pairwise similarities scaled by 1/tau with the diagonal masked out, plus
// the per-row log of the masked exp-sum. Shared by nt_xent and supcon.
template <typename T>
struct SimilarityParts {
  Tensor<T> shifted;    // [m x m]
  Tensor<T> log_denom;  // [m]
};

template <typename T>
SimilarityParts<T> masked_similarities(Tape<T>& tape, const Tensor<T>& z, double tau) {
  const int m = z.dim(0);
  auto sim = scale(matmul(z, transpose(z)), T(1.0 / tau));
  std::vector<T> mask(size_t(m) * m, T(0));
  for (int i = 0; i < m; ++i) mask[size_t(i) * m + i] = T(-1e30);
  auto masked = add(sim, tape.constant({m, m}, std::move(mask)));
  auto shifted = sub_rowbroadcast(masked, row_max_detached(masked));
  auto log_denom = log_op(row_sum(exp_op(shifted)));
  return {shifted, log_denom};
}

}  // namespace detail

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> cross_entropy([[maybe_unused]] Tape<T>& tape, const Tensor<T>& logits,
                        const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw DimensionError("cross_entropy: logits must be 2-d, got " + shape_str(logits.shape()));
  if (static_cast<int>(labels.size()) != logits.dim(0))
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.dim(0)) + " rows");
  const int classes = logits.dim(1);
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= classes)
      throw DataError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " outside [0," + std::to_string(classes) + ")");
  auto picked = gather_rows(detail::log_softmax_rows(logits), labels);
  return scale(mean(picked), T(-1));
}

// Eq. 4. Rows 0..N-1 and N..2N-1 hold the two augmented views; anchors are
// the first N rows exactly as the summation is written. exp(z_i . z_k / tau):
// the temperature goes inside the exponential (an outside placement would
// cancel in the ratio and deactivate tau entirely).
template <typename T>
Tensor<T> nt_xent(Tape<T>& tape, const Tensor<T>& z, double tau) {
  if (z.ndim() != 2)
    throw DimensionError("nt_xent: embeddings must be 2-d, got " + shape_str(z.shape()));
  const int m = z.dim(0);
  if (m % 2 != 0)
    throw DimensionError("nt_xent: row count " + std::to_string(m) + " is odd");
  if (tau <= 0) throw ConfigError("nt_xent: tau must be positive");
  detail::require_unit_rows(z, "nt_xent");
  const int n = m / 2;
  auto parts = detail::masked_similarities(tape, z, tau);
  std::vector<int> twin(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) twin[size_t(i)] = n + i;
  auto positives = gather_rows(slice_rows(parts.shifted, 0, n), twin);
  auto anchor_denoms = slice_rows(parts.log_denom, 0, n);
  return sum(sub(anchor_denoms, positives));
}

// SupCon, L_out variant: every row is an anchor; its positives are the
// other rows with the same label; the log sits outside the mean over
// positives. Anchors with no positive contribute nothing.
template <typename T>
Tensor<T> supcon(Tape<T>& tape, const Tensor<T>& z, const std::vector<int>& labels, double tau) {
  if (z.ndim() != 2)
    throw DimensionError("supcon: embeddings must be 2-d, got " + shape_str(z.shape()));
  const int m = z.dim(0);
  if (static_cast<int>(labels.size()) != m)
    throw DimensionError("supcon: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(m) + " rows");
  if (tau <= 0) throw ConfigError("supcon: tau must be positive");
  detail::require_unit_rows(z, "supcon");
  auto parts = detail::masked_similarities(tape, z, tau);
  std::vector<T> weights(size_t(m) * m, T(0));
  bool any = false;
  for (int a = 0; a < m; ++a) {
    int pos = 0;
    for (int p = 0; p < m; ++p)
      if (p != a && labels[size_t(p)] == labels[size_t(a)]) ++pos;
    if (pos == 0) continue;
    any = true;
    for (int p = 0; p < m; ++p)
      if (p != a && labels[size_t(p)] == labels[size_t(a)])
        weights[size_t(a) * m + p] = T(1) / T(pos);
  }
  if (!any) return tape.constant_scalar(T(0));
  auto w = tape.constant({m, m}, std::move(weights));
  // per anchor-positive pair: log_denom_a - shifted[a, p]
  auto gap = scale(sub_rowbroadcast(parts.shifted, parts.log_denom), T(-1));
  return sum(mul(w, gap));
}

// Mean-over-batch KL(softmax(teacher/T) || softmax(student/T)). The teacher
// distribution is computed from raw values, so no gradient reaches it.
template <typename T>
Tensor<T> kl_soft(Tape<T>& tape, const Tensor<T>& student_logits,
                  const Tensor<T>& teacher_logits, double temp) {
  if (student_logits.shape() != teacher_logits.shape())
    throw DimensionError("kl_soft: shape mismatch " + shape_str(student_logits.shape()) +
                         " vs " + shape_str(teacher_logits.shape()));
  if (temp <= 0) throw ConfigError("kl_soft: temperature must be positive");
  const int n = student_logits.dim(0), c = student_logits.dim(1);
  std::vector<T> t_prob(size_t(n) * c), t_logp(size_t(n) * c);
  const auto& tv = teacher_logits.values();
  for (int i = 0; i < n; ++i) {
    const T* row = tv.data() + size_t(i) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int j = 0; j < c; ++j) denom += std::exp((row[j] - mx) / T(temp));
    const T log_denom = std::log(denom);
    for (int j = 0; j < c; ++j) {
      const T lp = (row[j] - mx) / T(temp) - log_denom;
      t_logp[size_t(i) * c + j] = lp;
      t_prob[size_t(i) * c + j] = std::exp(lp);
    }
  }
  auto p_t = tape.constant({n, c}, std::move(t_prob));
  auto logp_t = tape.constant({n, c}, std::move(t_logp));
  auto logp_s = detail::log_softmax_rows(scale(student_logits, T(1.0 / temp)));
  return scale(sum(mul(p_t, sub(logp_t, logp_s))), T(1.0 / n));
}

// Eq. 2: CE(final) + alpha * sum_i CE(aux_i).
template <typename T>
LossBundle<T> deep_supervision_loss(Tape<T>& tape, const nn::TapOutputs<T>& taps,
                                    const std::vector<int>& labels, const LossWeights& w) {
  const int k = static_cast<int>(taps.stage_features.size());
  if (taps.aux_logits.empty() && w.alpha > 0 && k > 1)
    throw ConfigError("deep_supervision_loss: no auxiliary classifiers attached");
  detail::BundleBuilder<T> b(tape);
  b.add("ce_final", cross_entropy(tape, taps.final_logits, labels), 1.0);
  for (size_t i = 0; i < taps.aux_logits.size(); ++i)
    b.add("ce_aux_" + std::to_string(i + 1),
          cross_entropy(tape, taps.aux_logits[i], labels), w.alpha);
  return b.finish();
}

// Eq. 3: Eq. 2 plus beta * sum_i KL(c_i, c_K) with the final classifier as
// the (detached) teacher. The paper's Eq. 3 carries no temperature, so T=1.
template <typename T>
LossBundle<T> dks_loss(Tape<T>& tape, const nn::TapOutputs<T>& taps,
                       const std::vector<int>& labels, const LossWeights& w) {
  const int k = static_cast<int>(taps.stage_features.size());
  if (taps.aux_logits.empty() && (w.alpha > 0 || w.beta > 0) && k > 1)
    throw ConfigError("dks_loss: no auxiliary classifiers attached");
  detail::BundleBuilder<T> b(tape);
  b.add("ce_final", cross_entropy(tape, taps.final_logits, labels), 1.0);
  for (size_t i = 0; i < taps.aux_logits.size(); ++i)
    b.add("ce_aux_" + std::to_string(i + 1),
          cross_entropy(tape, taps.aux_logits[i], labels), w.alpha);
  for (size_t i = 0; i < taps.aux_logits.size(); ++i)
    b.add("kl_" + std::to_string(i + 1),
          kl_soft(tape, taps.aux_logits[i], taps.final_logits, 1.0), w.beta);
  return b.finish();
}

enum class ContrastKind { SimCLR, SupCon };

inline ContrastKind contrast_from_name(const std::string& s) {
  if (s == "simclr") return ContrastKind::SimCLR;
  if (s == "supcon") return ContrastKind::SupCon;
  throw ConfigError("unknown contrast kind '" + s + "'");
}

namespace detail {

// Shared Eq. 5 terms: CE on view 1 plus one contrastive term per head.
template <typename T>
void append_cds_terms(Tape<T>& tape, BundleBuilder<T>& b, const nn::TapOutputs<T>& taps,
                      const std::vector<int>& labels, const LossWeights& w,
                      ContrastKind kind) {
  if (taps.aux_embeddings.empty() && w.lambda1 > 0)
    throw ConfigError("cds_loss: no projection heads attached");
  const int rows = taps.final_logits.dim(0);
  if (rows % 2 != 0)
    throw DimensionError("cds_loss: expected a stacked two-view batch, got " +
                         std::to_string(rows) + " rows");
  const int n = rows / 2;
  if (static_cast<int>(labels.size()) != n)
    throw DimensionError("cds_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " images");
  std::vector<int> labels2(labels);
  labels2.insert(labels2.end(), labels.begin(), labels.end());

  auto view1_logits = slice_rows(taps.final_logits, 0, n);
  b.add("ce_final", cross_entropy(tape, view1_logits, labels), 1.0);
  for (size_t i = 0; i < taps.aux_embeddings.size(); ++i) {
    auto contra = kind == ContrastKind::SimCLR
                      ? nt_xent(tape, taps.aux_embeddings[i], w.tau)
                      : supcon(tape, taps.aux_embeddings[i], labels2, w.tau);
    b.add("contra_" + std::to_string(i + 1), contra, w.lambda1);
  }
}

}  // namespace detail

// Eq. 5 on a stacked two-view batch (rows i and N+i are the two views of
// image i). The CE term uses view 1 only; each projection head contributes
// one contrastive term.
template <typename T>
LossBundle<T> cds_loss(Tape<T>& tape, const nn::TapOutputs<T>& taps,
                       const std::vector<int>& labels, const LossWeights& w,
                       ContrastKind kind) {
  detail::BundleBuilder<T> b(tape);
  detail::append_cds_terms(tape, b, taps, labels, w, kind);
  return b.finish();
}

// Eq. 6: L_CDS on the labeled batch plus the plain contrastive loss (Eq. 4,
// weight 1) summed over heads on the unlabeled batch.
template <typename T>
LossBundle<T> semi_cds_loss(Tape<T>& tape, const nn::TapOutputs<T>* labeled,
                            const std::vector<int>& labels,
                            const nn::TapOutputs<T>* unlabeled, const LossWeights& w,
                            ContrastKind kind) {
  if (labeled == nullptr && unlabeled == nullptr)
    throw DimensionError("semi_cds_loss: both batches empty");
  detail::BundleBuilder<T> b(tape);
  if (labeled != nullptr) detail::append_cds_terms(tape, b, *labeled, labels, w, kind);
  if (unlabeled != nullptr) {
    for (size_t i = 0; i < unlabeled->aux_embeddings.size(); ++i)
      b.add("contra_unlabeled_" + std::to_string(i + 1),
            nt_xent(tape, unlabeled->aux_embeddings[i], w.tau), 1.0);
  }
  return b.finish();
}

// Eq. 7: sum over stages of the batch-mean L2 distance between flattened
// backbone features. Shapes must already agree (adapt student features with
// a 1x1 conv upstream when channel counts differ).
template <typename T>
Tensor<T> feature_distill(Tape<T>& tape, const std::vector<Tensor<T>>& teacher_feats,
                          const std::vector<Tensor<T>>& student_feats) {
  if (teacher_feats.size() != student_feats.size())
    throw DimensionError("feature_distill: list lengths differ (" +
                         std::to_string(teacher_feats.size()) + " vs " +
                         std::to_string(student_feats.size()) + ")");
  Tensor<T> total;
  for (size_t i = 0; i < teacher_feats.size(); ++i) {
    const auto& tf = teacher_feats[i];
    const auto& sf = student_feats[i];
    if (tf.shape() != sf.shape())
      throw DimensionError("feature_distill: stage " + std::to_string(i + 1) + " shapes " +
                           shape_str(tf.shape()) + " vs " + shape_str(sf.shape()));
    const int n = tf.dim(0);
    const int rest = int(tf.numel() / n);
    auto diff = reshape(sub(tf, sf), {n, rest});
    auto dist = sqrt_op(row_sum(mul(diff, diff)));
    auto term = mean(dist);
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) return tape.constant_scalar(T(0));
  return total;
}

// Eq. 8: same distance on the projection-head embeddings.
template <typename T>
Tensor<T> embedding_distill(Tape<T>& tape, const std::vector<Tensor<T>>& teacher_embeds,
                            const std::vector<Tensor<T>>& student_embeds) {
  if (teacher_embeds.size() != student_embeds.size())
    throw DimensionError("embedding_distill: list lengths differ (" +
                         std::to_string(teacher_embeds.size()) + " vs " +
                         std::to_string(student_embeds.size()) + ")");
  for (const auto& z : teacher_embeds) detail::require_unit_rows(z, "embedding_distill");
  for (const auto& z : student_embeds) detail::require_unit_rows(z, "embedding_distill");
  return feature_distill(tape, teacher_embeds, student_embeds);
}

// Eq. 9: L_CDS + lambda2 * embedding distillation + lambda3 * KL between the
// final logits, teacher detached throughout.
template <typename T>
LossBundle<T> dcds_loss(Tape<T>& tape, const nn::TapOutputs<T>& student_taps,
                        const nn::TapOutputs<T>& teacher_taps,
                        const std::vector<int>& labels, const LossWeights& w,
                        ContrastKind kind) {
  if (student_taps.aux_embeddings.size() != teacher_taps.aux_embeddings.size())
    throw ConfigError("dcds_loss: student has " +
                      std::to_string(student_taps.aux_embeddings.size()) +
                      " heads, teacher has " +
                      std::to_string(teacher_taps.aux_embeddings.size()));
  detail::BundleBuilder<T> b(tape);
  detail::append_cds_terms(tape, b, student_taps, labels, w, kind);
  std::vector<Tensor<T>> teacher_detached;
  for (const auto& z : teacher_taps.aux_embeddings) teacher_detached.push_back(detach(z));
  b.add("embed_distill",
        embedding_distill(tape, teacher_detached, student_taps.aux_embeddings), w.lambda2);
  b.add("kl_final",
        kl_soft(tape, student_taps.final_logits, teacher_taps.final_logits, w.temperature),
        w.lambda3);
  return b.finish();
}

// Naive feature distillation baseline: CE plus Eq. 7 on single-view batches,
// with the student features already adapted to the teacher's shapes.
template <typename T>
LossBundle<T> kd_feature_loss(Tape<T>& tape, const Tensor<T>& student_logits,
                              const std::vector<Tensor<T>>& teacher_feats,
                              const std::vector<Tensor<T>>& student_feats,
                              const std::vector<int>& labels, const LossWeights& w) {
  detail::BundleBuilder<T> b(tape);
  b.add("ce_final", cross_entropy(tape, student_logits, labels), 1.0);
  std::vector<Tensor<T>> teacher_detached;
  for (const auto& f : teacher_feats) teacher_detached.push_back(detach(f));
  b.add("feat_distill", feature_distill(tape, teacher_detached, student_feats), w.lambda2);
  return b.finish();
}

// Weight applied to a named component when the bundle total is assembled.
inline double component_weight(const std::string& name, const LossWeights& w) {
  if (name == "ce_final" || name.rfind("contra_unlabeled_", 0) == 0) return 1.0;
  if (name.rfind("ce_aux_", 0) == 0) return w.alpha;
  if (name.rfind("contra_", 0) == 0) return w.lambda1;
  if (name == "kl_final") return w.lambda3;
  if (name.rfind("kl_", 0) == 0) return w.beta;
  if (name == "embed_distill" || name == "feat_distill") return w.lambda2;
  throw Error("unknown loss component '" + name + "'");
}

}  // namespace cds::losses
