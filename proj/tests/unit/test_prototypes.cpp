// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "protomm/prototypes.hpp"

using namespace protomm;
using namespace protomm::test;

namespace {

double log_sum_exp(const Eigen::ArrayXd& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v - mx).exp().sum());
}

// Log-domain dual iteration for the entropic plan with uniform marginals; rows scaled to sum to one.
Mat<double> transport_oracle(const Mat<double>& s, double eps, double tol = 1e-14) {
  const int b = static_cast<int>(s.rows()), p = static_cast<int>(s.cols());
  const Eigen::ArrayXXd logk = s.array() / eps;
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(b), g = Eigen::ArrayXd::Zero(p);
  for (int it = 0; it < 200000; ++it) {
    Eigen::ArrayXd g2(p), f2(b);
    for (int j = 0; j < p; ++j) g2(j) = -std::log(double(p)) - log_sum_exp(logk.col(j) + f);
    for (int i = 0; i < b; ++i) f2(i) = -std::log(double(b)) - log_sum_exp(logk.row(i).transpose() + g2);
    const double change = std::max((f2 - f).abs().maxCoeff(), (g2 - g).abs().maxCoeff());
    f = f2;
    g = g2;
    if (it > 5 && change < tol) break;
  }
  Mat<double> out(b, p);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < p; ++j) out(i, j) = b * std::exp(logk(i, j) + f(i) + g(j));
  }
  return out;
}

}  // namespace

TEST_SUITE("prototypes") {

TEST_CASE("scores are dot products with the prototype columns") {
  Rng rng = derive_rng(1, {});
  const Mat<double> z = unit_rows(2, 6, rng);
  PrototypeBank<double> bank{unit_rows(3, 6, rng).transpose()};
  const Mat<double> s = project(z, bank);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int e = 0; e < 6; ++e) dot += z(i, e) * bank.matrix(e, j);
      CHECK(std::abs(s(i, j) - dot) < 1e-12);
    }
  }
  Mat<double> aligned = bank.matrix.col(1).transpose();
  CHECK(project(aligned, bank)(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  Mat<double> ortho = Mat<double>::Zero(1, 6);
  ortho(0, 0) = -bank.matrix(1, 0);
  ortho(0, 1) = bank.matrix(0, 0);
  CHECK(std::abs(project(ortho, bank)(0, 0)) < 1e-12);
}

TEST_CASE("soft_probs examples") {
  const Mat<double> zero = Mat<double>::Zero(1, 4);
  CHECK((soft_probs(zero, 0.1).array() - 0.25).abs().maxCoeff() < 1e-15);
  Mat<double> row(1, 2);
  row << 1, 2;
  const Mat<double> u = soft_probs(row, 1.0);
  CHECK(u(0, 0) == doctest::Approx(1 / (1 + std::exp(1.0))).epsilon(1e-12));
  CHECK(u(0, 1) == doctest::Approx(std::exp(1.0) / (1 + std::exp(1.0))).epsilon(1e-12));
}

TEST_CASE("soft_probs rows are distributions with a temperature-invariant argmax") {
  Rng rng = derive_rng(2, {});
  for (double tau : {1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3}) {
    const Mat<double> s = gaussian(5, 7, rng, 3.0);
    const Mat<double> u = soft_probs(s, tau);
    CHECK(u.allFinite());
    CHECK((u.array() >= 0).all());
    CHECK((u.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    for (int i = 0; i < 5; ++i) {
      Eigen::Index a, b;
      s.row(i).maxCoeff(&a);
      u.row(i).maxCoeff(&b);
      CHECK(a == b);
    }
  }
}

TEST_CASE("soft_probs_backward matches finite differences") {
  Rng rng = derive_rng(3, {});
  Mat<double> s = gaussian(3, 5, rng);
  const Mat<double> w = gaussian(3, 5, rng);
  const double tau = 0.7;
  auto f = [&] { return (soft_probs(s, tau).array() * w.array()).sum(); };
  const Mat<double> analytic = soft_probs_backward<double>(soft_probs(s, tau), w, tau);
  CHECK(rel_error(analytic, central_difference(s, f)) < 1e-7);
}

TEST_CASE("sinkhorn fixed points") {
  AssignmentConfig cfg;
  const Mat<double> flat = Mat<double>::Constant(4, 4, 0.3);
  CHECK((sinkhorn_targets(flat, cfg).array() - 0.25).abs().maxCoeff() < 1e-12);

  cfg.sinkhorn_iters = 200;
  const Mat<double> diag = 10.0 * Mat<double>::Identity(2, 2);
  const Mat<double> v = sinkhorn_targets(diag, cfg);
  CHECK((v - Mat<double>::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((v - transport_oracle(diag, cfg.sinkhorn_epsilon, 1e-12)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sinkhorn is equivariant to row permutations") {
  Rng rng = derive_rng(4, {});
  const Mat<double> s = gaussian(6, 5, rng, 0.3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 6, rng);
  AssignmentConfig cfg;
  const Mat<double> permuted = perm * s;
  CHECK((sinkhorn_targets(permuted, cfg) - perm * sinkhorn_targets(s, cfg)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sinkhorn converges to the entropic transport plan") {
  AssignmentConfig cfg;
  cfg.sinkhorn_iters = 2000;
  for (int trial = 0; trial < 8; ++trial) {
    Rng rng = derive_rng(5, {static_cast<std::uint64_t>(trial)});
    const Mat<double> s = unit_rows(8, 16, rng) * unit_rows(16, 16, rng).transpose();
    const Mat<double> v = sinkhorn_targets(s, cfg);
    CHECK((v - transport_oracle(s, cfg.sinkhorn_epsilon)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((v.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((v.colwise().sum().array() - 0.5).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("column-mass dispersion decreases with every iteration") {
  AssignmentConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng = derive_rng(6, {static_cast<std::uint64_t>(trial)});
    const Mat<double> s = unit_rows(8, 16, rng) * unit_rows(16, 64, rng).transpose();
    SinkhornTrace trace;
    sinkhorn_targets(s, cfg, &trace);
    REQUIRE(trace.column_mass_dispersion.size() == static_cast<std::size_t>(cfg.sinkhorn_iters) + 1);
    for (std::size_t i = 1; i < trace.column_mass_dispersion.size(); ++i) {
      CHECK(trace.column_mass_dispersion[i] < trace.column_mass_dispersion[i - 1]);
    }
  }
}

TEST_CASE("epsilon limits: hard matching and uniform") {
  Rng rng = derive_rng(7, {});
  Mat<double> s = 0.1 * gaussian(4, 4, rng);
  s += Mat<double>::Identity(4, 4);
  AssignmentConfig sharp;
  sharp.sinkhorn_epsilon = 0.01;
  sharp.sinkhorn_iters = 500;
  CHECK((sinkhorn_targets(s, sharp) - Mat<double>::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-3);
  AssignmentConfig flat;
  flat.sinkhorn_epsilon = 1e6;
  CHECK((sinkhorn_targets(s, flat).array() - 0.25).abs().maxCoeff() < 1e-5);
}

TEST_CASE("assignment config bounds name their keys") {
  AssignmentConfig c;
  c.temperature = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("prototypes.temperature"), ConfigError);
  c = {};
  c.sinkhorn_epsilon = -1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("prototypes.sinkhorn_epsilon"), ConfigError);
  c = {};
  c.sinkhorn_iters = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("prototypes.sinkhorn_iters"), ConfigError);
}

TEST_CASE("renormalize_prototypes") {
  PrototypeBank<double> bank{Mat<double>::Zero(4, 2)};
  bank.matrix.col(0) << 3, 4, 0, 0;
  bank.matrix.col(1) << 0, 0, 0, 0;
  renormalize_prototypes(bank, 1);
  CHECK(bank.matrix(0, 0) == doctest::Approx(0.6));
  CHECK(bank.matrix(1, 0) == doctest::Approx(0.8));
  CHECK(bank.matrix.col(1).norm() == doctest::Approx(1.0).epsilon(1e-12));

  auto init = init_prototypes<double>(8, 5, 3);
  const Mat<double> before = init.matrix;
  renormalize_prototypes(init);
  CHECK((init.matrix - before).cwiseAbs().maxCoeff() < 1e-12);
  for (int j = 0; j < 5; ++j) CHECK(init.matrix.col(j).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

}  // TEST_SUITE
