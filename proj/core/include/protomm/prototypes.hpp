// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "protomm/common.hpp"

namespace protomm {

struct AssignmentConfig {
  double temperature = 0.1;        // τ for the prediction softmax
  double sinkhorn_epsilon = 0.05;  // ε for the target kernel exp(S/ε)
  int sinkhorn_iters = 3;

  void validate() const;
};

/// Shared prototype matrix, one unit-norm column per prototype (E × P).
template <typename S>
struct PrototypeBank {
  Mat<S> matrix;

  int dim() const { return static_cast<int>(matrix.rows()); }
  int count() const { return static_cast<int>(matrix.cols()); }
};

/// Columns drawn from a standard normal and normalized.
template <typename S>
PrototypeBank<S> init_prototypes(int dim, int count, std::uint64_t seed);

/// Scores S = Z·P for unit-norm embedding rows Z (B × E).
template <typename S>
Mat<S> project(const Mat<S>& embeddings, const PrototypeBank<S>& bank);

/// Row-wise softmax of S/τ, stabilized by the row max.
template <typename S>
Mat<S> soft_probs(const Mat<S>& scores, double temperature);

/// Back-propagates dL/dU through U = softmax(S/τ).
template <typename S>
Mat<S> soft_probs_backward(const Mat<S>& probs, const Mat<S>& grad_probs, double temperature);

/// Per-iteration record of how far the transport plan is from equipartition.
struct SinkhornTrace {
  /// Std-dev of the per-prototype mass (column sums of the B-scaled plan) before
  /// the first and after every iteration.
  std::vector<double> column_mass_dispersion;
};

/// Equipartitioned soft targets.
///
/// K = exp(S/ε − max); K is scaled to unit total mass, then for each iteration
/// its prototype columns are normalized to mass 1/P and its sample rows to mass
/// 1/B. Rows are finally rescaled to sum to 1. The result is a constant with
/// respect to any loss that uses it.
template <typename S>
Mat<S> sinkhorn_targets(const Mat<S>& scores, const AssignmentConfig& cfg,
                        SinkhornTrace* trace = nullptr);

/// Divides every column by its norm; zero columns are redrawn at random (logged).
template <typename S>
void renormalize_prototypes(PrototypeBank<S>& bank, std::uint64_t reseed = 0);

}  // namespace protomm
