// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "protomm/common.hpp"

namespace protomm {

enum class Objective { protomm, simclr, clip, slip };

std::string_view to_string(Objective o);
Objective objective_from_string(std::string_view s);

struct LossConfig {
  double alpha = 0.5;
  Objective objective = Objective::protomm;
  double nt_xent_temperature = 0.1;
  double clip_temperature_init = 1.0;

  void validate() const;
};

/// Floor applied to probabilities before taking logs.
inline constexpr double kLogFloor = 1e-12;

/// Batch-mean cross-entropy −Σ_j V_ij log U_ij. V is the target, U the prediction.
template <typename S>
S ce_term(const Mat<S>& target, const Mat<S>& probs);

/// dℓ/dU with V held constant; zero where U sits on the log floor.
template <typename S>
Mat<S> ce_term_grad(const Mat<S>& target, const Mat<S>& probs);

/// One (prediction, target) pairing of the swapped-prediction objective:
/// U of (pred_modality, pred_view) predicts V of (target_modality, target_view).
struct LossTerm {
  int pred_modality;
  int pred_view;
  int target_modality;
  int target_view;
};

/// Ordered pairs a ≠ b inside each modality: M·A·(A−1) terms.
std::vector<LossTerm> within_mod_terms(int modalities, int views);
/// Every view of modality m against every view of every other modality: M·(M−1)·A² terms.
std::vector<LossTerm> between_mod_terms(int modalities, int views);

/// Probabilities U and Sinkhorn targets V for each (modality, view), stored m·A + a.
template <typename S>
struct ViewBundle {
  int modalities = 0;
  int views = 0;
  std::vector<Mat<S>> probs;
  std::vector<Mat<S>> targets;

  const Mat<S>& u(int m, int a) const { return probs.at(static_cast<std::size_t>(m * views + a)); }
  const Mat<S>& v(int m, int a) const { return targets.at(static_cast<std::size_t>(m * views + a)); }
  void validate() const;
};

template <typename S>
S sum_terms(const ViewBundle<S>& bundle, const std::vector<LossTerm>& terms);

/// Σ_m Σ_a Σ_{b≠a} ℓ(V_m^b, U_m^a). Requires A ≥ 2.
template <typename S>
S within_mod_loss(const ViewBundle<S>& bundle);

/// Σ_m Σ_{n≠m} Σ_a Σ_b ℓ(V_n^b, U_m^a). Requires M ≥ 2.
template <typename S>
S between_mod_loss(const ViewBundle<S>& bundle);

/// (α·within + (1−α)·between) / (A·M). A component whose weight is zero is not
/// evaluated, so α = 1 works for M = 1 and α = 0 works for A = 1.
template <typename S>
S mpp_loss(const ViewBundle<S>& bundle, double alpha);

/// dL_MPP/dU for every (modality, view), indexed like the bundle.
template <typename S>
std::vector<Mat<S>> mpp_loss_grad(const ViewBundle<S>& bundle, double alpha);

/// Loss value plus gradients for the two embedding batches it consumed.
template <typename S>
struct PairLoss {
  S value{};
  Mat<S> grad_first;
  Mat<S> grad_second;
  S grad_log_temperature{};  // only set by clip_loss
};

/// NT-Xent over 2B instances with the paired view as positive and the other
/// 2B−2 instances as negatives, averaged over all anchors.
template <typename S>
PairLoss<S> nt_xent(const Mat<S>& first, const Mat<S>& second, double temperature);

/// Symmetric cross-entropy over the B×B similarity matrix scaled by 1/exp(log_temperature),
/// with matching rows as targets.
template <typename S>
PairLoss<S> clip_loss(const Mat<S>& emb_ppg, const Mat<S>& emb_accel, S log_temperature);

/// Per-modality NT-Xent on (view 0, view 1) plus a cross-modal CLIP term on view 0.
template <typename S>
struct SlipLoss {
  S value{};
  S within{};
  S between{};
  /// [modality][view] gradients, matching the input layout.
  std::vector<std::array<Mat<S>, 2>> grads;
  S grad_log_temperature{};
};

template <typename S>
SlipLoss<S> slip_loss(const std::vector<std::array<Mat<S>, 2>>& embeddings, double nt_temperature,
                      S log_temperature, bool use_within = true, bool use_between = true);

}  // namespace protomm
