// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "protomm/losses.hpp"
#include "protomm/prototypes.hpp"

using namespace protomm;
using namespace protomm::test;

namespace {

ViewBundle<double> random_bundle(int m, int a, int b, int p, Rng& rng) {
  ViewBundle<double> out;
  out.modalities = m;
  out.views = a;
  for (int i = 0; i < m * a; ++i) {
    out.probs.push_back(random_probs(b, p, rng));
    out.targets.push_back(random_probs(b, p, rng));
  }
  return out;
}

ViewBundle<double> uniform_bundle(int m, int a, int b, int p) {
  ViewBundle<double> out;
  out.modalities = m;
  out.views = a;
  for (int i = 0; i < m * a; ++i) {
    out.probs.push_back(Mat<double>::Constant(b, p, 1.0 / p));
    out.targets.push_back(Mat<double>::Constant(b, p, 1.0 / p));
  }
  return out;
}

double ce(const Mat<double>& v, const Mat<double>& u) { return -(v.array() * u.array().log()).sum() / v.rows(); }

// Brute-force NT-Xent over all 2B anchors.
double nt_xent_oracle(const Mat<double>& a, const Mat<double>& b, double tau) {
  const int n = static_cast<int>(a.rows());
  Mat<double> all(2 * n, a.cols());
  all << a, b;
  double total = 0;
  for (int i = 0; i < 2 * n; ++i) {
    const int pos = i < n ? i + n : i - n;
    double denom = 0;
    for (int k = 0; k < 2 * n; ++k) {
      if (k != i) denom += std::exp(all.row(i).dot(all.row(k)) / tau);
    }
    total += -std::log(std::exp(all.row(i).dot(all.row(pos)) / tau) / denom);
  }
  return total / (2 * n);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("ce_term examples") {
  Mat<double> v(1, 3), u(1, 3);
  v << 0, 1, 0;
  u << 0, 1, 0;
  CHECK(ce_term(v, u) == doctest::Approx(0.0));
  Mat<double> half = Mat<double>::Constant(1, 2, 0.5);
  CHECK(ce_term(half, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("ce_term is bounded below by the target entropy") {
  Rng rng = derive_rng(1, {});
  for (int trial = 0; trial < 200; ++trial) {
    const Mat<double> v = random_probs(3, 6, rng);
    const Mat<double> u = random_probs(3, 6, rng);
    const double entropy = ce_term(v, v);
    CHECK(entropy == doctest::Approx(ce(v, v)).epsilon(1e-12));
    CHECK(ce_term(v, u) >= entropy - 1e-9);
  }
}

TEST_CASE("ce_term_grad matches finite differences") {
  Rng rng = derive_rng(2, {});
  const Mat<double> v = random_probs(3, 4, rng);
  Mat<double> u = random_probs(3, 4, rng);
  auto f = [&] { return ce_term(v, u); };
  CHECK(rel_error(ce_term_grad(v, u), central_difference(u, f)) < 1e-7);
}

TEST_CASE("term counts match a pair-enumeration oracle") {
  for (int m = 1; m <= 4; ++m) {
    for (int a = 1; a <= 4; ++a) {
      std::set<std::tuple<int, int, int, int>> within, between;
      for (int i = 0; i < m; ++i)
        for (int n = 0; n < m; ++n)
          for (int x = 0; x < a; ++x)
            for (int y = 0; y < a; ++y) {
              if (i == n && x != y) within.insert({i, x, n, y});
              if (i != n) between.insert({i, x, n, y});
            }
      const auto w = within_mod_terms(m, a);
      const auto b = between_mod_terms(m, a);
      CHECK(static_cast<int>(w.size()) == m * a * (a - 1));
      CHECK(static_cast<int>(b.size()) == m * (m - 1) * a * a);
      std::set<std::tuple<int, int, int, int>> gw, gb;
      for (const auto& t : w) gw.insert({t.pred_modality, t.pred_view, t.target_modality, t.target_view});
      for (const auto& t : b) gb.insert({t.pred_modality, t.pred_view, t.target_modality, t.target_view});
      CHECK(gw == within);
      CHECK(gb == between);
    }
  }
  CHECK(between_mod_terms(2, 1).size() == 2);
  CHECK(within_mod_terms(2, 2).size() == 4);
  CHECK(between_mod_terms(2, 2).size() == 8);
}

TEST_CASE("uniform closed forms") {
  const auto u = uniform_bundle(2, 2, 3, 4);
  CHECK(within_mod_loss(u) == doctest::Approx(4 * std::log(4.0)).epsilon(1e-12));
  CHECK(between_mod_loss(u) == doctest::Approx(8 * std::log(4.0)).epsilon(1e-12));
  CHECK(std::abs(mpp_loss(u, 0.5) - 1.5 * std::log(4.0)) < 1e-9);
  CHECK(mpp_loss(u, 0.5) == doctest::Approx(2.0794).epsilon(1e-4));
}

TEST_CASE("alpha = 1 is the per-modality swapped-prediction sum") {
  Rng rng = derive_rng(3, {});
  const auto b = random_bundle(2, 2, 4, 5, rng);
  CHECK(std::abs(mpp_loss(b, 1.0) - within_mod_loss(b) / 4.0) < 1e-12);
  double sum = 0;
  for (int m = 0; m < 2; ++m) {
    ViewBundle<double> single;
    single.modalities = 1;
    single.views = 2;
    single.probs = {b.u(m, 0), b.u(m, 1)};
    single.targets = {b.v(m, 0), b.v(m, 1)};
    sum += within_mod_loss(single);
    CHECK(mpp_loss(single, 1.0) == doctest::Approx(within_mod_loss(single) / 2.0).epsilon(1e-12));
  }
  CHECK(std::abs(mpp_loss(b, 1.0) * 4.0 - sum) < 1e-9);
}

TEST_CASE("mpp_loss is linear in the two components") {
  Rng rng = derive_rng(4, {});
  const auto b = random_bundle(2, 3, 4, 5, rng);
  const double w = within_mod_loss(b), bt = between_mod_loss(b);
  for (double alpha : {0.0, 0.25, 0.5, 1.0}) {
    CHECK(mpp_loss(b, alpha) == doctest::Approx((alpha * w + (1 - alpha) * bt) / 6.0).epsilon(1e-12));
  }
  const auto single_view = random_bundle(2, 1, 4, 5, rng);
  CHECK_NOTHROW(mpp_loss(single_view, 0.0));
  const auto single_mod = random_bundle(1, 2, 4, 5, rng);
  CHECK_NOTHROW(mpp_loss(single_mod, 1.0));
}

TEST_CASE("symmetric bundles give equal within and between term averages") {
  Rng rng = derive_rng(5, {});
  const Mat<double> u = random_probs(4, 5, rng), v = random_probs(4, 5, rng);
  ViewBundle<double> b;
  b.modalities = 2;
  b.views = 2;
  for (int i = 0; i < 4; ++i) {
    b.probs.push_back(u);
    b.targets.push_back(v);
  }
  CHECK(within_mod_loss(b) / 4.0 == doctest::Approx(between_mod_loss(b) / 8.0).epsilon(1e-12));
}

TEST_CASE("mpp_loss is invariant to relabeling views and modalities") {
  Rng rng = derive_rng(6, {});
  const auto b = random_bundle(3, 3, 4, 5, rng);
  const double base = mpp_loss(b, 0.3);
  std::vector<int> mods{0, 1, 2}, views{0, 1, 2};
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(mods.begin(), mods.end(), rng);
    std::shuffle(views.begin(), views.end(), rng);
    ViewBundle<double> p;
    p.modalities = 3;
    p.views = 3;
    for (int m = 0; m < 3; ++m) {
      for (int a = 0; a < 3; ++a) {
        p.probs.push_back(b.u(mods[m], views[a]));
        p.targets.push_back(b.v(mods[m], views[a]));
      }
    }
    CHECK(mpp_loss(p, 0.3) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("mpp gradients match finite differences through embeddings and prototypes") {
  Rng rng = derive_rng(7, {});
  const int e = 8, p = 4, b = 4;
  AssignmentConfig acfg;
  acfg.temperature = 0.3;
  std::vector<Mat<double>> z;
  for (int i = 0; i < 4; ++i) z.push_back(unit_rows(b, e, rng));
  Mat<double> protos = unit_rows(p, e, rng).transpose();
  std::vector<Mat<double>> targets;
  for (const auto& zi : z) targets.push_back(sinkhorn_targets(project(zi, PrototypeBank<double>{protos}), acfg));
  auto bundle = [&] {
    ViewBundle<double> out;
    out.modalities = 2;
    out.views = 2;
    for (const auto& zi : z) out.probs.push_back(soft_probs<double>(zi * protos, acfg.temperature));
    out.targets = targets;
    return out;
  };
  for (double alpha : {0.0, 0.5, 1.0}) {
    auto loss = [&] { return mpp_loss(bundle(), alpha); };
    const auto bd = bundle();
    const auto du = mpp_loss_grad(bd, alpha);
    Mat<double> dp = Mat<double>::Zero(e, p);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const Mat<double> ds = soft_probs_backward(bd.probs[i], du[i], acfg.temperature);
      CHECK(rel_error(ds * protos.transpose(), central_difference(z[i], loss)) < 1e-4);
      dp += z[i].transpose() * ds;
    }
    CHECK(rel_error(dp, central_difference(protos, loss)) < 1e-4);
  }
}

TEST_CASE("nt_xent matches the brute-force oracle") {
  Rng rng = derive_rng(8, {});
  for (int trial = 0; trial < 5; ++trial) {
    const Mat<double> a = unit_rows(5, 6, rng), b = unit_rows(5, 6, rng);
    CHECK(nt_xent(a, b, 0.2).value == doctest::Approx(nt_xent_oracle(a, b, 0.2)).epsilon(1e-12));
  }
}

TEST_CASE("nt_xent with mutually orthogonal embeddings") {
  // every logit is zero, so each anchor sees one positive among three candidates
  const Mat<double> eye = Mat<double>::Identity(4, 4);
  const Mat<double> a = eye.topRows(2), b = eye.bottomRows(2);
  CHECK(nt_xent(a, b, 1.0).value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(nt_xent_oracle(a, b, 1.0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("nt_xent sharp limit and rotation invariance") {
  const Mat<double> eye = Mat<double>::Identity(3, 3);
  CHECK(nt_xent(eye, eye, 0.01).value < 1e-10);
  Rng rng = derive_rng(9, {});
  const Mat<double> a = unit_rows(4, 5, rng), b = unit_rows(4, 5, rng);
  const Eigen::HouseholderQR<Mat<double>> qr(gaussian(5, 5, rng));
  const Mat<double> q = qr.householderQ();
  CHECK(nt_xent<double>(a * q, b * q, 0.1).value == doctest::Approx(nt_xent(a, b, 0.1).value).epsilon(1e-10));
}

TEST_CASE("nt_xent gradients match finite differences") {
  Rng rng = derive_rng(10, {});
  Mat<double> a = unit_rows(4, 8, rng), b = unit_rows(4, 8, rng);
  const auto r = nt_xent(a, b, 0.1);
  auto f = [&] { return nt_xent(a, b, 0.1).value; };
  CHECK(rel_error(r.grad_first, central_difference(a, f)) < 1e-4);
  CHECK(rel_error(r.grad_second, central_difference(b, f)) < 1e-4);
}

TEST_CASE("clip_loss behaviour") {
  const Mat<double> one = Mat<double>::Identity(1, 3);
  CHECK_THROWS_AS(clip_loss(one, one, 0.0), Error);
  const Mat<double> eye = Mat<double>::Identity(3, 3);
  CHECK(clip_loss(eye, eye, std::log(0.01)).value < 1e-10);

  Rng rng = derive_rng(11, {});
  const Mat<double> a = unit_rows(5, 4, rng), b = unit_rows(5, 4, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 5, rng);
  const Mat<double> pa = perm * a, pb = perm * b;
  CHECK(clip_loss(pa, pb, 0.2).value == doctest::Approx(clip_loss(a, b, 0.2).value).epsilon(1e-12));
}

TEST_CASE("clip_loss gradients match finite differences") {
  Rng rng = derive_rng(12, {});
  Mat<double> a = unit_rows(4, 8, rng), b = unit_rows(4, 8, rng);
  double lt = std::log(0.5);
  const auto r = clip_loss(a, b, lt);
  auto f = [&] { return clip_loss(a, b, lt).value; };
  CHECK(rel_error(r.grad_first, central_difference(a, f)) < 1e-4);
  CHECK(rel_error(r.grad_second, central_difference(b, f)) < 1e-4);
  const double h = 1e-6;
  const double numeric = (clip_loss(a, b, lt + h).value - clip_loss(a, b, lt - h).value) / (2 * h);
  CHECK(r.grad_log_temperature == doctest::Approx(numeric).epsilon(1e-6));
}

TEST_CASE("slip decomposes into its parts") {
  Rng rng = derive_rng(13, {});
  std::vector<std::array<Mat<double>, 2>> emb(2);
  for (auto& m : emb) m = {unit_rows(4, 6, rng), unit_rows(4, 6, rng)};
  const double lt = 0.0;
  const auto full = slip_loss(emb, 0.1, lt);
  const double parts = nt_xent(emb[0][0], emb[0][1], 0.1).value + nt_xent(emb[1][0], emb[1][1], 0.1).value +
                       clip_loss(emb[0][0], emb[1][0], lt).value;
  CHECK(full.value == doctest::Approx(parts).epsilon(1e-12));
  CHECK(slip_loss(emb, 0.1, lt, true, false).value ==
        doctest::Approx(nt_xent(emb[0][0], emb[0][1], 0.1).value + nt_xent(emb[1][0], emb[1][1], 0.1).value));
  CHECK(slip_loss(emb, 0.1, lt, false, true).value == doctest::Approx(clip_loss(emb[0][0], emb[1][0], lt).value));
}

TEST_CASE("loss config bounds name their keys") {
  LossConfig c;
  c.alpha = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("loss.alpha"), ConfigError);
  c.alpha = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
