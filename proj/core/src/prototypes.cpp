// SPDX-License-Identifier: Apache-2.0
#include "protomm/prototypes.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

namespace protomm {

namespace {

template <typename S>
double column_dispersion(const Mat<S>& plan, double scale) {
  const Vec<S> mass = plan.colwise().sum().transpose() * static_cast<S>(scale);
  const double mean = static_cast<double>(mass.mean());
  return std::sqrt(static_cast<double>((mass.array() - static_cast<S>(mean)).square().mean()));
}

}  // namespace

void AssignmentConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("prototypes.temperature", "must be positive");
  if (!(sinkhorn_epsilon > 0.0)) throw ConfigError("prototypes.sinkhorn_epsilon", "must be positive");
  if (sinkhorn_iters < 1) throw ConfigError("prototypes.sinkhorn_iters", "must be >= 1");
}

template <typename S>
PrototypeBank<S> init_prototypes(int dim, int count, std::uint64_t seed) {
  if (dim < 1 || count < 1) throw Error("init_prototypes: dim and count must be positive");
  Rng rng = derive_rng(seed, {0x9e0});
  std::normal_distribution<double> n(0.0, 1.0);
  PrototypeBank<S> bank;
  bank.matrix.resize(dim, count);
  for (Eigen::Index i = 0; i < bank.matrix.size(); ++i) bank.matrix.data()[i] = static_cast<S>(n(rng));
  renormalize_prototypes(bank, seed);
  return bank;
}

template <typename S>
Mat<S> project(const Mat<S>& embeddings, const PrototypeBank<S>& bank) {
  if (embeddings.cols() != bank.matrix.rows()) {
    throw Error("project: embedding dim " + std::to_string(embeddings.cols()) +
                " != prototype dim " + std::to_string(bank.matrix.rows()));
  }
  return embeddings * bank.matrix;
}

template <typename S>
Mat<S> soft_probs(const Mat<S>& scores, double temperature) {
  if (!(temperature > 0.0)) throw Error("soft_probs: temperature must be positive");
  Mat<S> z = scores / static_cast<S>(temperature);
  const Vec<S> row_max = z.rowwise().maxCoeff();
  z.colwise() -= row_max;
  z = z.array().exp().matrix();
  const Vec<S> sums = z.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * z;
}

template <typename S>
Mat<S> soft_probs_backward(const Mat<S>& probs, const Mat<S>& grad_probs, double temperature) {
  const Vec<S> inner = (probs.array() * grad_probs.array()).rowwise().sum();
  Mat<S> g = grad_probs;
  g.colwise() -= inner;
  return (probs.array() * g.array()).matrix() / static_cast<S>(temperature);
}

template <typename S>
Mat<S> sinkhorn_targets(const Mat<S>& scores, const AssignmentConfig& cfg, SinkhornTrace* trace) {
  cfg.validate();
  const Eigen::Index b = scores.rows();
  const Eigen::Index p = scores.cols();
  if (b < 1 || p < 1) throw Error("sinkhorn_targets: empty score matrix");

  Mat<S> q = scores / static_cast<S>(cfg.sinkhorn_epsilon);
  q.array() -= q.maxCoeff();
  q = q.array().exp().matrix();
  q /= q.sum();
  if (trace) {
    trace->column_mass_dispersion.clear();
    trace->column_mass_dispersion.push_back(column_dispersion(q, static_cast<double>(b)));
  }
  const S col_mass = S(1) / static_cast<S>(p);
  const S row_mass = S(1) / static_cast<S>(b);
  for (int it = 0; it < cfg.sinkhorn_iters; ++it) {
    const RowVec<S> cols = q.colwise().sum();
    q.array().rowwise() *= (col_mass / cols.array());
    const Vec<S> rows = q.rowwise().sum();
    q.array().colwise() *= (row_mass / rows.array());
    if (trace) trace->column_mass_dispersion.push_back(column_dispersion(q, static_cast<double>(b)));
  }
  return q * static_cast<S>(b);
}

template <typename S>
void renormalize_prototypes(PrototypeBank<S>& bank, std::uint64_t reseed) {
  for (Eigen::Index j = 0; j < bank.matrix.cols(); ++j) {
    const S n = bank.matrix.col(j).norm();
    if (n > S(0) && std::isfinite(static_cast<double>(n))) {
      bank.matrix.col(j) /= n;
      continue;
    }
    spdlog::warn("prototype column {} has zero or non-finite norm; redrawing", j);
    Rng rng = derive_rng(reseed, {0xdead, static_cast<std::uint64_t>(j)});
    std::normal_distribution<double> dist(0.0, 1.0);
    do {
      for (Eigen::Index i = 0; i < bank.matrix.rows(); ++i) {
        bank.matrix(i, j) = static_cast<S>(dist(rng));
      }
    } while (bank.matrix.col(j).norm() == S(0));
    bank.matrix.col(j).normalize();
  }
}

#define PROTOMM_INSTANTIATE(S)                                                              \
  template PrototypeBank<S> init_prototypes<S>(int, int, std::uint64_t);                    \
  template Mat<S> project<S>(const Mat<S>&, const PrototypeBank<S>&);                       \
  template Mat<S> soft_probs<S>(const Mat<S>&, double);                                     \
  template Mat<S> soft_probs_backward<S>(const Mat<S>&, const Mat<S>&, double);             \
  template Mat<S> sinkhorn_targets<S>(const Mat<S>&, const AssignmentConfig&, SinkhornTrace*); \
  template void renormalize_prototypes<S>(PrototypeBank<S>&, std::uint64_t);

PROTOMM_INSTANTIATE(float)
PROTOMM_INSTANTIATE(double)

}  // namespace protomm
