#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cds/losses.hpp"
#include "gradsuite.hpp"
#include "loss_oracles.hpp"
#include "testutil.hpp"

using namespace cds;
using losses::ContrastKind;
using losses::LossWeights;

namespace {

// Random unit rows.
std::vector<double> random_embeddings(Rng& rng, int m, int d) {
  std::vector<double> z(size_t(m) * d);
  for (int i = 0; i < m; ++i) {
    double s = 0;
    for (int j = 0; j < d; ++j) {
      z[size_t(i) * d + j] = rng.normal();
      s += z[size_t(i) * d + j] * z[size_t(i) * d + j];
    }
    const double inv = 1.0 / std::sqrt(s);
    for (int j = 0; j < d; ++j) z[size_t(i) * d + j] *= inv;
  }
  return z;
}

nn::TapOutputs<double> fake_taps(Tape<double>& tape, Rng& rng, int rows, int classes,
                                 int heads, int embed_dim, bool with_aux = false) {
  nn::TapOutputs<double> taps;
  taps.final_logits = tape.variable({rows, classes},
                                    testutil::random_values(rng, long(rows) * classes));
  taps.stage_features.resize(size_t(heads) + 1);  // only the count matters here
  for (int h = 0; h < heads; ++h) {
    taps.aux_embeddings.push_back(
        tape.variable({rows, embed_dim}, random_embeddings(rng, rows, embed_dim)));
    if (with_aux)
      taps.aux_logits.push_back(
          tape.variable({rows, classes}, testutil::random_values(rng, long(rows) * classes)));
  }
  return taps;
}

void check_bundle_invariants(const losses::LossBundle<double>& bundle, const LossWeights& w) {
  double total = 0;
  for (auto& [name, v] : bundle.components) {
    CHECK(v >= -1e-12);  // non-negativity of every component
    total += losses::component_weight(name, w) * v;
  }
  CHECK(bundle.total.item() ==
        doctest::Approx(total).epsilon(1e-6).scale(std::max(1.0, std::abs(total))));
}

}  // namespace

TEST_CASE("cross_entropy analytic cases") {
  Tape<double> tape;
  auto uniform = tape.constant({2, 10}, std::vector<double>(20, 0.7));
  CHECK(losses::cross_entropy(tape, uniform, {3, 9}).item() ==
        doctest::Approx(std::log(10.0)).epsilon(1e-9));

  std::vector<double> confident(3 * 4, 0.0);
  std::vector<int> labels = {2, 0, 3};
  for (int i = 0; i < 3; ++i) confident[size_t(i) * 4 + labels[size_t(i)]] = 50.0;
  CHECK(losses::cross_entropy(tape, tape.constant({3, 4}, confident), labels).item() < 1e-9);

  CHECK_THROWS_AS(losses::cross_entropy(tape, uniform, {3, 10}), DataError);
  CHECK_THROWS_AS(losses::cross_entropy(tape, uniform, {3}), DimensionError);
}

TEST_CASE("cross_entropy matches direct oracle on random cases") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng(seed * 31);
    const int n = int(rng.uniform_int(1, 4)), c = int(rng.uniform_int(2, 5));
    auto lv = testutil::random_values(rng, long(n) * c, -3, 3);
    std::vector<int> labels(static_cast<size_t>(n), 0);
    for (auto& l : labels) l = int(rng.uniform_int(0, c - 1));
    Tape<double> tape;
    auto got = losses::cross_entropy(tape, tape.constant({n, c}, lv), labels).item();
    CHECK(got == doctest::Approx(oracles::cross_entropy(lv, labels, n, c)).epsilon(1e-7));
  }
}

TEST_CASE("nt_xent identities") {
  Tape<double> tape;
  // N=1: the denominator holds only the positive, so the loss is exactly 0.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto z = tape.constant({2, 4}, random_embeddings(rng, 2, 4));
    CHECK(std::abs(losses::nt_xent(tape, z, 0.5).item()) < 1e-9);
  }
  // all rows identical: N * ln(2N - 1), independent of tau.
  for (int n : {2, 3, 4}) {
    for (double tau : {0.3, 1.0, 2.0}) {
      std::vector<double> z(size_t(2 * n) * 3, 0.0);
      for (int i = 0; i < 2 * n; ++i) z[size_t(i) * 3 + 1] = 1.0;
      auto got = losses::nt_xent(tape, tape.constant({2 * n, 3}, z), tau).item();
      CHECK(got == doctest::Approx(n * std::log(2.0 * n - 1)).epsilon(1e-9));
    }
  }
  // N=2 all identical, tau=1: 2 ln 3.
  {
    std::vector<double> z(4 * 2, 0.0);
    for (int i = 0; i < 4; ++i) z[size_t(i) * 2] = 1.0;
    CHECK(losses::nt_xent(tape, tape.constant({4, 2}, z), 1.0).item() ==
          doctest::Approx(2 * std::log(3.0)).epsilon(1e-9));
  }
  // N=2 orthogonal pairs z1=z3=e1, z2=z4=e2, tau=1: 2 (ln(2+e) - 1),
  // confirmed against the per-term oracle as well.
  {
    std::vector<double> z = {1, 0, 0, 1, 1, 0, 0, 1};
    const double got = losses::nt_xent(tape, tape.constant({4, 2}, z), 1.0).item();
    const double analytic = 2.0 * (std::log(2.0 + std::exp(1.0)) - 1.0);
    CHECK(oracles::nt_xent(z, 2, 2, 1.0) == doctest::Approx(analytic).epsilon(1e-12));
    CHECK(got == doctest::Approx(analytic).epsilon(1e-9));
  }
}

TEST_CASE("nt_xent matches per-term oracle on random instances") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    Rng rng(seed * 977);
    const int n = int(rng.uniform_int(1, 4));
    const int d = int(rng.uniform_int(2, 8));
    const double tau = rng.uniform(0.2, 2.0);
    auto z = random_embeddings(rng, 2 * n, d);
    Tape<double> tape;
    auto got = losses::nt_xent(tape, tape.constant({2 * n, d}, z), tau).item();
    CHECK(got == doctest::Approx(oracles::nt_xent(z, n, d, tau)).epsilon(1e-6));
  }
}

TEST_CASE("nt_xent permutation invariance") {
  Rng rng(4242);
  const int n = 4, d = 6;
  auto z = random_embeddings(rng, 2 * n, d);
  std::vector<int> perm = {2, 0, 3, 1};
  std::vector<double> zp(z.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      zp[size_t(i) * d + j] = z[size_t(perm[size_t(i)]) * d + j];
      zp[size_t(i + n) * d + j] = z[size_t(perm[size_t(i)] + n) * d + j];
    }
  }
  Tape<double> tape;
  auto a = losses::nt_xent(tape, tape.constant({2 * n, d}, z), 0.5).item();
  auto b = losses::nt_xent(tape, tape.constant({2 * n, d}, zp), 0.5).item();
  CHECK(a == doctest::Approx(b).epsilon(1e-6));
}

TEST_CASE("nt_xent input validation") {
  Tape<double> tape;
  Rng rng(1);
  CHECK_THROWS_AS(losses::nt_xent(tape, tape.constant({3, 2}, random_embeddings(rng, 3, 2)), 0.5),
                  DimensionError);
  auto bad = tape.constant({2, 2}, {3.0, 4.0, 1.0, 0.0});
  CHECK_THROWS_AS(losses::nt_xent(tape, bad, 0.5), NumericError);
}

TEST_CASE("supcon degenerate cases") {
  Tape<double> tape;
  Rng rng(5);
  // two samples, same label: single positive pair, loss 0 like nt_xent at 2 rows
  auto z2 = tape.constant({2, 4}, random_embeddings(rng, 2, 4));
  CHECK(std::abs(losses::supcon(tape, z2, {1, 1}, 0.5).item()) < 1e-9);
  // all labels distinct: every anchor skipped
  auto z3 = tape.constant({3, 4}, random_embeddings(rng, 3, 4));
  CHECK(losses::supcon(tape, z3, {0, 1, 2}, 0.5).item() == 0.0);
}

TEST_CASE("supcon matches double-loop oracle") {
  // the spec's 6-row two-class case plus random instances
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed * 131);
    const int m = seed == 1 ? 6 : int(rng.uniform_int(2, 8));
    const int d = int(rng.uniform_int(2, 8));
    const int classes = seed == 1 ? 2 : int(rng.uniform_int(1, 3));
    const double tau = rng.uniform(0.2, 2.0);
    auto z = random_embeddings(rng, m, d);
    std::vector<int> labels(static_cast<size_t>(m), 0);
    for (auto& l : labels) l = int(rng.uniform_int(0, classes - 1));
    Tape<double> tape;
    auto got = losses::supcon(tape, tape.constant({m, d}, z), labels, tau).item();
    CHECK(got == doctest::Approx(oracles::supcon(z, labels, m, d, tau)).epsilon(1e-7));
  }
}

TEST_CASE("kl_soft properties and oracle") {
  Tape<double> tape;
  Rng rng(77);
  auto lv = testutil::random_values(rng, 12, -2, 2);
  auto same = losses::kl_soft(tape, tape.constant({3, 4}, lv), tape.constant({3, 4}, lv), 2.0);
  CHECK(std::abs(same.item()) < 1e-12);

  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng r2(seed * 313);
    const int n = int(r2.uniform_int(1, 4)), c = int(r2.uniform_int(2, 5));
    auto s = testutil::random_values(r2, long(n) * c, -3, 3);
    auto t = testutil::random_values(r2, long(n) * c, -3, 3);
    Tape<double> tp;
    auto got = losses::kl_soft(tp, tp.constant({n, c}, s), tp.constant({n, c}, t), 2.0).item();
    CHECK(got >= -1e-12);  // Gibbs inequality
    CHECK(got == doctest::Approx(oracles::kl_soft(s, t, n, c, 2.0)).epsilon(1e-7));
  }

  CHECK_THROWS_AS(losses::kl_soft(tape, tape.constant({2, 3}, std::vector<double>(6, 0.0)),
                                  tape.constant({3, 2}, std::vector<double>(6, 0.0)), 2.0),
                  DimensionError);
}

TEST_CASE("kl_soft places no gradient on the teacher") {
  Tape<double> tape;
  auto student = tape.variable({2, 3}, {0.1, 0.4, -0.2, 0.3, 0.0, 0.5});
  auto teacher = tape.variable({2, 3}, {1.0, -0.5, 0.2, 0.1, 0.7, -0.3});
  auto kl = losses::kl_soft(tape, student, teacher, 2.0);
  tape.backward(kl);
  double s_norm = 0, t_norm = 0;
  for (double g : student.grad()) s_norm += std::abs(g);
  for (double g : teacher.grad()) t_norm += std::abs(g);
  CHECK(s_norm > 1e-8);
  CHECK(t_norm == 0.0);
}

TEST_CASE("deep_supervision_loss reductions and oracle") {
  Rng rng(11);
  LossWeights w;

  // K=1, no aux heads: plain cross entropy
  {
    Tape<double> tape;
    auto taps = fake_taps(tape, rng, 4, 5, 0, 8);
    taps.stage_features.resize(1);
    std::vector<int> labels = {0, 1, 2, 3};
    auto bundle = losses::deep_supervision_loss(tape, taps, labels, w);
    CHECK(bundle.total.item() ==
          doctest::Approx(losses::cross_entropy(tape, taps.final_logits, labels).item())
              .epsilon(1e-12));
  }

  // alpha = 0 reduction and random component-sum oracle
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng r2(seed * 53);
    Tape<double> tape;
    auto taps = fake_taps(tape, r2, 3, 4, 2, 8, true);
    std::vector<int> labels = {1, 0, 3};
    w.alpha = 0.0;
    auto reduced = losses::deep_supervision_loss(tape, taps, labels, w);
    auto ce = losses::cross_entropy(tape, taps.final_logits, labels).item();
    CHECK(reduced.total.item() == doctest::Approx(ce).epsilon(1e-7));

    w.alpha = 0.3;
    auto bundle = losses::deep_supervision_loss(tape, taps, labels, w);
    double expect = ce;
    for (const auto& aux : taps.aux_logits) {
      std::vector<double> lv = aux.values();
      expect += 0.3 * oracles::cross_entropy(lv, labels, 3, 4);
    }
    CHECK(bundle.total.item() == doctest::Approx(expect).epsilon(1e-7));
    check_bundle_invariants(bundle, w);
  }

  // missing aux classifiers with alpha > 0 is a config error
  {
    Tape<double> tape;
    auto taps = fake_taps(tape, rng, 3, 4, 0, 8);
    taps.stage_features.resize(3);
    w.alpha = 0.3;
    CHECK_THROWS_AS(losses::deep_supervision_loss(tape, taps, {0, 1, 2}, w), ConfigError);
  }
}

TEST_CASE("dks_loss reductions and oracle") {
  LossWeights w;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 211);
    Tape<double> tape;
    auto taps = fake_taps(tape, rng, 3, 4, 2, 8, true);
    std::vector<int> labels = {2, 0, 1};

    w.alpha = 0.3;
    w.beta = 0.0;
    auto ds = losses::deep_supervision_loss(tape, taps, labels, w);
    auto reduced = losses::dks_loss(tape, taps, labels, w);
    CHECK(reduced.total.item() == doctest::Approx(ds.total.item()).epsilon(1e-7));

    w.beta = 0.7;
    auto bundle = losses::dks_loss(tape, taps, labels, w);
    double expect = ds.total.item();
    for (const auto& aux : taps.aux_logits)
      expect += 0.7 * oracles::kl_soft(aux.values(), taps.final_logits.values(), 3, 4, 1.0);
    CHECK(bundle.total.item() == doctest::Approx(expect).epsilon(1e-7));
    check_bundle_invariants(bundle, w);
  }

  // aux logits identical to final logits: KL components all 0
  {
    Rng rng(5);
    Tape<double> tape;
    nn::TapOutputs<double> taps;
    auto lv = testutil::random_values(rng, 12);
    taps.final_logits = tape.variable({3, 4}, lv);
    taps.stage_features.resize(3);
    taps.aux_logits.push_back(tape.variable({3, 4}, lv));
    taps.aux_logits.push_back(tape.variable({3, 4}, lv));
    LossWeights w2;
    auto bundle = losses::dks_loss(tape, taps, {0, 1, 2}, w2);
    CHECK(std::abs(bundle.value("kl_1")) < 1e-12);
    CHECK(std::abs(bundle.value("kl_2")) < 1e-12);
  }
}

TEST_CASE("cds_loss reductions, N=1 case, and per-head oracle") {
  LossWeights w;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 389);
    const int n = 3, classes = 4, heads = 3, d = 6;
    Tape<double> tape;
    auto taps = fake_taps(tape, rng, 2 * n, classes, heads, d);
    std::vector<int> labels = {1, 3, 0};

    w.lambda1 = 0.0;
    auto reduced = losses::cds_loss(tape, taps, labels, w, ContrastKind::SimCLR);
    auto view1 = slice_rows(taps.final_logits, 0, n);
    auto ce = losses::cross_entropy(tape, view1, labels).item();
    CHECK(reduced.total.item() == doctest::Approx(ce).epsilon(1e-7));

    w.lambda1 = 0.8;
    auto bundle = losses::cds_loss(tape, taps, labels, w, ContrastKind::SimCLR);
    double expect = ce;
    for (const auto& z : taps.aux_embeddings)
      expect += 0.8 * oracles::nt_xent(z.values(), n, d, w.tau);
    CHECK(bundle.total.item() == doctest::Approx(expect).epsilon(1e-6));
    check_bundle_invariants(bundle, w);

    // supcon variant against its oracle
    std::vector<int> labels2(labels);
    labels2.insert(labels2.end(), labels.begin(), labels.end());
    auto sc = losses::cds_loss(tape, taps, labels, w, ContrastKind::SupCon);
    double expect_sc = ce;
    for (const auto& z : taps.aux_embeddings)
      expect_sc += 0.8 * oracles::supcon(z.values(), labels2, 2 * n, d, w.tau);
    CHECK(sc.total.item() == doctest::Approx(expect_sc).epsilon(1e-6));
  }

  // batch of one image: every contrastive term is exactly 0
  {
    Rng rng(17);
    Tape<double> tape;
    auto taps = fake_taps(tape, rng, 2, 4, 2, 6);
    LossWeights w2;
    auto bundle = losses::cds_loss(tape, taps, {2}, w2, ContrastKind::SimCLR);
    CHECK(std::abs(bundle.value("contra_1")) < 1e-9);
    CHECK(std::abs(bundle.value("contra_2")) < 1e-9);
    auto view1 = slice_rows(taps.final_logits, 0, 1);
    CHECK(bundle.total.item() ==
          doctest::Approx(losses::cross_entropy(tape, view1, {2}).item()).epsilon(1e-9));
  }

  // zero heads with lambda1 > 0 is a config error
  {
    Rng rng(19);
    Tape<double> tape;
    auto taps = fake_taps(tape, rng, 4, 4, 0, 6);
    LossWeights w2;
    CHECK_THROWS_AS(losses::cds_loss(tape, taps, {0, 1}, w2, ContrastKind::SimCLR), ConfigError);
  }
}

TEST_CASE("semi_cds_loss composition") {
  LossWeights w;
  Rng rng(23);
  Tape<double> tape;
  auto labeled = fake_taps(tape, rng, 4, 4, 2, 6);
  auto unlabeled = fake_taps(tape, rng, 6, 4, 2, 6);
  std::vector<int> labels = {0, 2};

  CHECK_THROWS_AS(losses::semi_cds_loss<double>(tape, nullptr, {}, nullptr, w,
                                                ContrastKind::SimCLR),
                  DimensionError);

  auto only_labeled =
      losses::semi_cds_loss<double>(tape, &labeled, labels, nullptr, w, ContrastKind::SimCLR);
  auto plain = losses::cds_loss(tape, labeled, labels, w, ContrastKind::SimCLR);
  CHECK(only_labeled.total.item() == doctest::Approx(plain.total.item()).epsilon(1e-7));

  auto only_unlabeled = losses::semi_cds_loss<double>(tape, nullptr, {}, &unlabeled, w,
                                                      ContrastKind::SimCLR);
  CHECK(!only_unlabeled.has("ce_final"));
  double contra_sum = 0;
  for (const auto& z : unlabeled.aux_embeddings)
    contra_sum += oracles::nt_xent(z.values(), 3, 6, w.tau);
  CHECK(only_unlabeled.total.item() == doctest::Approx(contra_sum).epsilon(1e-6));

  auto both = losses::semi_cds_loss<double>(tape, &labeled, labels, &unlabeled, w, ContrastKind::SimCLR);
  CHECK(both.total.item() ==
        doctest::Approx(plain.total.item() + only_unlabeled.total.item()).epsilon(1e-7));
  check_bundle_invariants(both, w);
}

TEST_CASE("feature_distill cases and oracle") {
  Tape<double> tape;
  Rng rng(29);

  auto fv = testutil::random_values(rng, 2 * 3 * 4 * 4);
  auto f1 = tape.constant({2, 3, 4, 4}, fv);
  auto f2 = tape.constant({2, 3, 4, 4}, fv);
  CHECK(losses::feature_distill(tape, {f1}, {f2}).item() == 0.0);

  // student = teacher + delta at one coordinate of every sample: distance is
  // exactly delta for that stage
  {
    auto sv = fv;
    const double delta = 0.37;
    sv[0] += delta;
    sv[3 * 4 * 4] += delta;  // second sample, first coordinate
    auto fs = tape.constant({2, 3, 4, 4}, sv);
    CHECK(losses::feature_distill(tape, {f1}, {fs}).item() ==
          doctest::Approx(delta).epsilon(1e-9));
  }

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng r2(seed * 433);
    const int n = 3;
    std::vector<std::vector<double>> ta, tb;
    std::vector<Tensor<double>> tt, ts;
    for (int s = 0; s < 2; ++s) {
      ta.push_back(testutil::random_values(r2, n * 5));
      tb.push_back(testutil::random_values(r2, n * 5));
      tt.push_back(tape.constant({n, 5}, ta.back()));
      ts.push_back(tape.constant({n, 5}, tb.back()));
    }
    CHECK(losses::feature_distill(tape, tt, ts).item() ==
          doctest::Approx(oracles::pairwise_l2(ta, tb, n)).epsilon(1e-6));
  }

  CHECK_THROWS_AS(losses::feature_distill(tape, {f1, f1}, {f2}), DimensionError);
}

TEST_CASE("embedding_distill: bound and oracle") {
  Tape<double> tape;
  Rng rng(31);
  const int n = 4, d = 8;
  auto za = random_embeddings(rng, n, d);
  auto zb = random_embeddings(rng, n, d);
  auto ta = tape.constant({n, d}, za);
  auto tb = tape.constant({n, d}, zb);
  CHECK(losses::embedding_distill(tape, {ta}, {ta}).item() == 0.0);
  // unit rows: every per-sample distance is at most 2, so the mean is too
  CHECK(losses::embedding_distill(tape, {ta}, {tb}).item() <= 2.0 + 1e-9);
  CHECK(losses::embedding_distill(tape, {ta}, {tb}).item() ==
        doctest::Approx(oracles::pairwise_l2({za}, {zb}, n)).epsilon(1e-6));
}

TEST_CASE("dcds_loss reductions and oracle") {
  LossWeights w;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    Rng rng(seed * 619);
    const int n = 2, classes = 4, heads = 2, d = 6;
    Tape<double> tape;
    auto student = fake_taps(tape, rng, 2 * n, classes, heads, d);
    auto teacher = fake_taps(tape, rng, 2 * n, classes, heads, d);
    std::vector<int> labels = {1, 2};

    w.lambda2 = 0.0;
    w.lambda3 = 0.0;
    auto reduced = losses::dcds_loss(tape, student, teacher, labels, w, ContrastKind::SimCLR);
    auto base = losses::cds_loss(tape, student, labels, w, ContrastKind::SimCLR);
    CHECK(reduced.total.item() == doctest::Approx(base.total.item()).epsilon(1e-7));

    w.lambda2 = 0.5;
    w.lambda3 = 0.9;
    auto bundle = losses::dcds_loss(tape, student, teacher, labels, w, ContrastKind::SimCLR);
    std::vector<std::vector<double>> te, se;
    for (const auto& z : teacher.aux_embeddings) te.push_back(z.values());
    for (const auto& z : student.aux_embeddings) se.push_back(z.values());
    const double expect =
        base.total.item() + 0.5 * oracles::pairwise_l2(te, se, 2 * n) +
        0.9 * oracles::kl_soft(student.final_logits.values(), teacher.final_logits.values(),
                               2 * n, classes, w.temperature);
    CHECK(bundle.total.item() == doctest::Approx(expect).epsilon(1e-6));
    check_bundle_invariants(bundle, w);
  }

  // teacher identical to student: both distillation components vanish
  {
    Rng rng(41);
    Tape<double> tape;
    auto student = fake_taps(tape, rng, 4, 3, 2, 5);
    nn::TapOutputs<double> teacher;
    teacher.final_logits = tape.constant(student.final_logits.shape(),
                                         student.final_logits.values());
    teacher.stage_features = student.stage_features;
    for (const auto& z : student.aux_embeddings)
      teacher.aux_embeddings.push_back(tape.constant(z.shape(), z.values()));
    LossWeights w2;
    auto bundle = losses::dcds_loss(tape, student, teacher, {0, 1}, w2, ContrastKind::SimCLR);
    CHECK(std::abs(bundle.value("embed_distill")) < 1e-12);
    CHECK(std::abs(bundle.value("kl_final")) < 1e-12);
  }

  // head-count mismatch is a config error
  {
    Rng rng(43);
    Tape<double> tape;
    auto student = fake_taps(tape, rng, 4, 3, 2, 5);
    auto teacher = fake_taps(tape, rng, 4, 3, 1, 5);
    LossWeights w2;
    CHECK_THROWS_AS(losses::dcds_loss(tape, student, teacher, {0, 1}, w2, ContrastKind::SimCLR),
                    ConfigError);
  }
}

TEST_CASE("kd_feature_loss composition") {
  Rng rng(47);
  LossWeights w;
  w.lambda2 = 0.6;
  Tape<double> tape;
  const int n = 3, c = 4;
  auto logits = tape.variable({n, c}, testutil::random_values(rng, long(n) * c));
  std::vector<int> labels = {0, 3, 1};
  std::vector<std::vector<double>> tv, sv;
  std::vector<Tensor<double>> tf, sf;
  for (int s = 0; s < 2; ++s) {
    tv.push_back(testutil::random_values(rng, n * 6));
    sv.push_back(testutil::random_values(rng, n * 6));
    tf.push_back(tape.constant({n, 6}, tv.back()));
    sf.push_back(tape.variable({n, 6}, sv.back()));
  }
  auto bundle = losses::kd_feature_loss(tape, logits, tf, sf, labels, w);
  const double expect = oracles::cross_entropy(logits.values(), labels, n, c) +
                        0.6 * oracles::pairwise_l2(tv, sv, n);
  CHECK(bundle.total.item() == doctest::Approx(expect).epsilon(1e-6));
  check_bundle_invariants(bundle, w);
}

TEST_CASE("gradient suite: every loss passes finite-difference checks") {
  for (const auto& entry : gradsuite::loss_entries()) {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
      auto res = entry.run(seed * 7000 + 23);
      INFO(entry.name, " seed ", seed, " worst: ", res.worst_where);
      CHECK(res.ok);
    }
  }
}
