#pragma once

// Finite-difference gradient suites shared by the unit tests and the
// acceptance binary. Each entry builds a fresh random instance of one
// differentiable primitive (or, later in the suite, one loss composition)
// and checks analytic gradients against central differences in double
// precision.

#include <functional>
#include <string>
#include <vector>

#include "cds/losses.hpp"
#include "cds/nn.hpp"
#include "cds/tensor.hpp"
#include "testutil.hpp"

namespace gradsuite {

using cds::Rng;
using cds::StoragePtr;
using cds::Tape;
using cds::Tensor;
using testutil::GradCheckResult;
namespace nn = cds::nn;

struct Entry {
  std::string name;
  // Builds one random instance from the seed and runs the check.
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

inline Tensor<double> weighted_scalar(Tape<double>& tape, const Tensor<double>& x,
                                      const std::vector<double>& w) {
  return cds::sum(cds::mul(x, tape.constant(x.shape(), w)));
}

inline StoragePtr<double> leaf_storage(cds::Shape shape, Rng& rng, double lo = -1.0,
                                       double hi = 1.0) {
  return cds::make_storage<double>(std::move(shape),
                                   testutil::random_values(rng, cds::numel(shape), lo, hi),
                                   true);
}

// Values bounded away from zero so ReLU kinks do not break the FD oracle.
inline StoragePtr<double> leaf_storage_nonzero(cds::Shape shape, Rng& rng) {
  std::vector<double> v(cds::numel(shape));
  for (auto& x : v) {
    const double mag = rng.uniform(0.15, 1.0);
    x = rng.bernoulli(0.5) ? mag : -mag;
  }
  return cds::make_storage<double>(std::move(shape), std::move(v), true);
}

inline GradCheckResult check(const std::vector<StoragePtr<double>>& leaves,
                             const std::function<Tensor<double>(Tape<double>&)>& build,
                             Rng& rng) {
  return testutil::check_gradients(leaves, build, rng);
}

inline std::vector<Entry> primitive_entries() {
  std::vector<Entry> entries;
  auto add_entry = [&](std::string name,
                       std::function<GradCheckResult(std::uint64_t)> fn) {
    entries.push_back({std::move(name), std::move(fn)});
  };

  add_entry("matmul", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = leaf_storage({3, 4}, rng);
    auto b = leaf_storage({4, 2}, rng);
    auto w = testutil::random_values(rng, 6);
    return check({a, b}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::matmul(t.leaf(a), t.leaf(b)), w);
    }, rng);
  });

  add_entry("transpose", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = leaf_storage({3, 5}, rng);
    auto w = testutil::random_values(rng, 15);
    return check({a}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::transpose(t.leaf(a)), w);
    }, rng);
  });

  add_entry("linear", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({3, 5}, rng);
    auto wt = leaf_storage({4, 5}, rng);
    auto b = leaf_storage({4}, rng);
    auto w = testutil::random_values(rng, 12);
    return check({x, wt, b}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::linear(t.leaf(x), t.leaf(wt), t.leaf(b)), w);
    }, rng);
  });

  add_entry("conv2d", [](std::uint64_t seed) {
    Rng rng(seed);
    const int stride = int(rng.uniform_int(1, 2));
    const int pad = int(rng.uniform_int(0, 1));
    auto x = leaf_storage({2, 2, 6, 5}, rng);
    auto k = leaf_storage({3, 2, 3, 3}, rng);
    const int ho = (6 + 2 * pad - 3) / stride + 1;
    const int wo = (5 + 2 * pad - 3) / stride + 1;
    auto w = testutil::random_values(rng, long(2) * 3 * ho * wo);
    return check({x, k}, [&, stride, pad](Tape<double>& t) {
      return weighted_scalar(t, cds::conv2d(t.leaf(x), t.leaf(k), stride, pad), w);
    }, rng);
  });

  add_entry("batchnorm2d_train", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({3, 2, 4, 4}, rng);
    auto gamma = leaf_storage({2}, rng, 0.5, 1.5);
    auto beta = leaf_storage({2}, rng);
    auto w = testutil::random_values(rng, 3 * 2 * 16);
    return check({x, gamma, beta}, [&](Tape<double>& t) {
      auto rm = cds::make_storage<double>({2});
      auto rv = cds::make_storage<double>({2});
      auto y = cds::batchnorm2d(t.leaf(x), t.leaf(gamma), t.leaf(beta), rm, rv, 0.1, 1e-5, true);
      return weighted_scalar(t, y, w);
    }, rng);
  });

  add_entry("batchnorm2d_eval", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({3, 2, 4, 4}, rng);
    auto gamma = leaf_storage({2}, rng, 0.5, 1.5);
    auto beta = leaf_storage({2}, rng);
    auto rm = cds::make_storage<double>({2}, testutil::random_values(rng, 2, -0.5, 0.5));
    auto rv = cds::make_storage<double>({2}, testutil::random_values(rng, 2, 0.5, 2.0));
    auto w = testutil::random_values(rng, 3 * 2 * 16);
    return check({x, gamma, beta}, [&](Tape<double>& t) {
      auto y = cds::batchnorm2d(t.leaf(x), t.leaf(gamma), t.leaf(beta), rm, rv, 0.1, 1e-5, false);
      return weighted_scalar(t, y, w);
    }, rng);
  });

  add_entry("relu", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage_nonzero({24}, rng);
    auto w = testutil::random_values(rng, 24);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::relu(t.leaf(x)), w);
    }, rng);
  });

  add_entry("add_sub_mul", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = leaf_storage({3, 4}, rng);
    auto b = leaf_storage({3, 4}, rng);
    auto s = leaf_storage({1}, rng);
    auto w = testutil::random_values(rng, 12);
    return check({a, b, s}, [&](Tape<double>& t) {
      auto ta = t.leaf(a), tb = t.leaf(b), ts = t.leaf(s);
      auto y = cds::mul(cds::add(ta, tb), cds::sub(ta, ts));
      return weighted_scalar(t, cds::add(y, ts), w);
    }, rng);
  });

  add_entry("scale_exp", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({10}, rng);
    auto w = testutil::random_values(rng, 10);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::exp_op(cds::scale(t.leaf(x), 0.7)), w);
    }, rng);
  });

  add_entry("log", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({10}, rng, 0.2, 3.0);
    auto w = testutil::random_values(rng, 10);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::log_op(t.leaf(x)), w);
    }, rng);
  });

  add_entry("sqrt", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({10}, rng, 0.2, 2.0);
    auto w = testutil::random_values(rng, 10);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::sqrt_op(t.leaf(x)), w);
    }, rng);
  });

  add_entry("sum_mean", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({3, 4}, rng);
    return check({x}, [&](Tape<double>& t) {
      return cds::add(cds::sum(t.leaf(x)), cds::scale(cds::mean(t.leaf(x)), 0.3));
    }, rng);
  });

  add_entry("row_sum", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({3, 6}, rng);
    auto w = testutil::random_values(rng, 3);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::row_sum(t.leaf(x)), w);
    }, rng);
  });

  add_entry("sub_rowbroadcast", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({4, 5}, rng);
    auto v = leaf_storage({4}, rng);
    auto w = testutil::random_values(rng, 20);
    return check({x, v}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::sub_rowbroadcast(t.leaf(x), t.leaf(v)), w);
    }, rng);
  });

  add_entry("gather_rows", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({4, 6}, rng);
    std::vector<int> idx(4);
    for (auto& i : idx) i = int(rng.uniform_int(0, 5));
    auto w = testutil::random_values(rng, 4);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::gather_rows(t.leaf(x), idx), w);
    }, rng);
  });

  add_entry("slice_concat", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = leaf_storage({5, 4}, rng);
    auto b = leaf_storage({2, 4}, rng);
    auto w = testutil::random_values(rng, 7 * 4);
    auto w2 = testutil::random_values(rng, 3 * 4);
    return check({a, b}, [&](Tape<double>& t) {
      auto cat = cds::concat_rows(t.leaf(a), t.leaf(b));
      auto sl = cds::slice_rows(t.leaf(a), 1, 4);
      return cds::add(weighted_scalar(t, cat, w), weighted_scalar(t, sl, w2));
    }, rng);
  });

  add_entry("global_avg_pool", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({2, 3, 4, 4}, rng);
    auto w = testutil::random_values(rng, 6);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::global_avg_pool(t.leaf(x)), w);
    }, rng);
  });

  add_entry("l2_normalize_rows", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({4, 5}, rng, 0.3, 1.5);
    auto w = testutil::random_values(rng, 20);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::l2_normalize_rows(t.leaf(x)), w);
    }, rng);
  });

  add_entry("reshape", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({2, 3, 4}, rng);
    auto w = testutil::random_values(rng, 24);
    return check({x}, [&](Tape<double>& t) {
      return weighted_scalar(t, cds::reshape(t.leaf(x), {6, 4}), w);
    }, rng);
  });

  // The spec's composed case: conv -> relu -> linear head.
  add_entry("conv_relu_linear_net", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({2, 2, 6, 6}, rng);
    auto k1 = leaf_storage({4, 2, 3, 3}, rng, -0.5, 0.5);
    auto wfc = leaf_storage({3, 4}, rng, -0.5, 0.5);
    auto bfc = leaf_storage({3}, rng, -0.2, 0.2);
    auto w = testutil::random_values(rng, 6);
    return check({x, k1, wfc, bfc}, [&](Tape<double>& t) {
      auto h = cds::relu(cds::conv2d(t.leaf(x), t.leaf(k1), 1, 1));
      auto pooled = cds::global_avg_pool(h);
      auto logits = cds::linear(pooled, t.leaf(wfc), t.leaf(bfc));
      return weighted_scalar(t, logits, w);
    }, rng);
  });

  return entries;
}

// ---------------------------------------------------------------------------
// Loss compositions through tiny networks (Eqs. 2-9)

struct TinyRig {
  nn::Model<double> model;
  StoragePtr<double> batch;        // stacked two-view batch [2N x C x H x W]
  std::vector<int> labels;         // N labels
  std::vector<StoragePtr<double>> leaves;
};

inline TinyRig make_tiny_rig(Rng& rng, bool proj_heads, bool aux_heads) {
  nn::ArchSpec spec;
  spec.family = nn::Family::PlainCnn;
  spec.k = 2;
  spec.widths = {3, 4};
  spec.num_classes = 3;
  spec.in_channels = 2;
  TinyRig rig;
  rig.model = nn::build_backbone<double>(spec, rng.next());
  nn::HeadConfig hc;
  hc.embed_dim = 5;
  hc.hidden_dim = 6;
  if (proj_heads) {
    hc.kind = nn::HeadKind::Projection;
    nn::attach_heads(rig.model, hc, rng.next());
  }
  if (aux_heads) {
    hc.kind = nn::HeadKind::Classifier;
    nn::attach_heads(rig.model, hc, rng.next());
  }
  rig.batch = cds::make_storage<double>(
      {4, 2, 8, 8}, testutil::random_values(rng, 4L * 2 * 8 * 8), false);
  rig.labels = {int(rng.uniform_int(0, 2)), int(rng.uniform_int(0, 2))};
  rig.leaves = rig.model.trainable_params();
  return rig;
}

inline cds::losses::LossWeights random_weights(Rng& rng) {
  cds::losses::LossWeights w;
  w.alpha = rng.uniform(0.1, 0.6);
  w.beta = rng.uniform(0.3, 1.2);
  w.lambda1 = rng.uniform(0.3, 1.2);
  w.lambda2 = rng.uniform(0.3, 1.2);
  w.lambda3 = rng.uniform(0.3, 1.2);
  w.tau = rng.uniform(0.3, 1.0);
  w.temperature = rng.uniform(1.0, 4.0);
  return w;
}

inline std::vector<Entry> loss_entries() {
  using namespace cds::losses;
  std::vector<Entry> entries;
  auto add_entry = [&](std::string name,
                       std::function<GradCheckResult(std::uint64_t)> fn) {
    entries.push_back({std::move(name), std::move(fn)});
  };

  add_entry("cross_entropy", [](std::uint64_t seed) {
    Rng rng(seed);
    auto logits = leaf_storage({4, 5}, rng, -2, 2);
    std::vector<int> labels(4);
    for (auto& l : labels) l = int(rng.uniform_int(0, 4));
    return check({logits}, [&](Tape<double>& t) {
      return cross_entropy(t, t.leaf(logits), labels);
    }, rng);
  });

  add_entry("nt_xent_through_head", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({6, 4}, rng);
    auto w = leaf_storage({5, 4}, rng);
    auto b = leaf_storage({5}, rng, -0.2, 0.2);
    const double tau = rng.uniform(0.3, 1.0);
    return check({x, w, b}, [&, tau](Tape<double>& t) {
      auto z = cds::l2_normalize_rows(cds::linear(t.leaf(x), t.leaf(w), t.leaf(b)));
      return nt_xent(t, z, tau);
    }, rng);
  });

  add_entry("supcon_through_head", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = leaf_storage({6, 4}, rng);
    auto w = leaf_storage({5, 4}, rng);
    auto b = leaf_storage({5}, rng, -0.2, 0.2);
    std::vector<int> labels(6);
    for (auto& l : labels) l = int(rng.uniform_int(0, 1));
    const double tau = rng.uniform(0.3, 1.0);
    return check({x, w, b}, [&, tau](Tape<double>& t) {
      auto z = cds::l2_normalize_rows(cds::linear(t.leaf(x), t.leaf(w), t.leaf(b)));
      return supcon(t, z, labels, tau);
    }, rng);
  });

  add_entry("kl_soft", [](std::uint64_t seed) {
    Rng rng(seed);
    auto student = leaf_storage({3, 4}, rng, -2, 2);
    auto teacher_vals = testutil::random_values(rng, 12, -2, 2);
    const double temp = rng.uniform(1.0, 4.0);
    return check({student}, [&, temp](Tape<double>& t) {
      return kl_soft(t, t.leaf(student), t.constant({3, 4}, teacher_vals), temp);
    }, rng);
  });

  add_entry("deep_supervision_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    auto rig = make_tiny_rig(rng, false, true);
    auto w = random_weights(rng);
    std::vector<int> labels4 = {rig.labels[0], rig.labels[1], rig.labels[0], rig.labels[1]};
    return check(rig.leaves, [&](Tape<double>& t) {
      auto taps = nn::forward_tapped(rig.model, t, t.leaf(rig.batch), true);
      return deep_supervision_loss(t, taps, labels4, w).total;
    }, rng);
  });

  // The KL teacher (the final classifier) is detached by contract, so finite
  // differences only agree for parameters that do not feed the teacher side:
  // the auxiliary classifiers. Backbone gradients are covered by the
  // deep_supervision entry; the teacher-carries-no-gradient property has its
  // own unit test.
  add_entry("dks_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    auto rig = make_tiny_rig(rng, false, true);
    auto w = random_weights(rng);
    std::vector<int> labels4 = {rig.labels[0], rig.labels[1], rig.labels[0], rig.labels[1]};
    std::vector<StoragePtr<double>> aux_leaves;
    for (auto& [name, st] : rig.model.named_params())
      if (name.rfind("head.aux", 0) == 0) aux_leaves.push_back(st);
    return check(aux_leaves, [&](Tape<double>& t) {
      auto taps = nn::forward_tapped(rig.model, t, t.leaf(rig.batch), true);
      return dks_loss(t, taps, labels4, w).total;
    }, rng);
  });

  add_entry("cds_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    auto rig = make_tiny_rig(rng, true, false);
    auto w = random_weights(rng);
    const auto kind = seed % 2 == 0 ? ContrastKind::SimCLR : ContrastKind::SupCon;
    return check(rig.leaves, [&, kind](Tape<double>& t) {
      auto taps = nn::forward_tapped(rig.model, t, t.leaf(rig.batch), true);
      return cds_loss(t, taps, rig.labels, w, kind).total;
    }, rng);
  });

  add_entry("semi_cds_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    auto rig = make_tiny_rig(rng, true, false);
    auto unlabeled = cds::make_storage<double>(
        {4, 2, 8, 8}, testutil::random_values(rng, 4L * 2 * 8 * 8), false);
    auto w = random_weights(rng);
    return check(rig.leaves, [&](Tape<double>& t) {
      auto lt = nn::forward_tapped(rig.model, t, t.leaf(rig.batch), true);
      auto ut = nn::forward_tapped(rig.model, t, t.leaf(unlabeled), true);
      return semi_cds_loss(t, &lt, rig.labels, &ut, w, ContrastKind::SimCLR).total;
    }, rng);
  });

  add_entry("feature_distill_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    auto rig = make_tiny_rig(rng, false, false);
    auto teacher = make_tiny_rig(rng, false, false);
    teacher.model.set_requires_grad(false);
    auto w = random_weights(rng);
    std::vector<int> labels4 = {rig.labels[0], rig.labels[1], rig.labels[1], rig.labels[0]};
    return check(rig.leaves, [&](Tape<double>& t) {
      auto st = nn::forward_tapped(rig.model, t, t.leaf(rig.batch), true);
      auto tt = nn::forward_tapped(teacher.model, t, t.leaf(rig.batch), false);
      return kd_feature_loss(t, st.final_logits, tt.stage_features, st.stage_features,
                             labels4, w).total;
    }, rng);
  });

  add_entry("dcds_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    auto rig = make_tiny_rig(rng, true, false);
    auto teacher = make_tiny_rig(rng, true, false);
    teacher.model.set_requires_grad(false);
    auto w = random_weights(rng);
    return check(rig.leaves, [&](Tape<double>& t) {
      auto st = nn::forward_tapped(rig.model, t, t.leaf(rig.batch), true);
      auto tt = nn::forward_tapped(teacher.model, t, t.leaf(rig.batch), false);
      return dcds_loss(t, st, tt, rig.labels, w, ContrastKind::SimCLR).total;
    }, rng);
  });

  return entries;
}

}  // namespace gradsuite
