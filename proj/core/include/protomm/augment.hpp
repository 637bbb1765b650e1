// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "protomm/signal.hpp"

namespace protomm {

enum class AugName {
  jitter,
  scale,
  rotate3d,
  negate,
  time_reverse,
  channel_shuffle,
  segment_shuffle,
  time_warp,
};

std::string_view to_string(AugName a);
AugName aug_from_string(std::string_view s);

/// One stochastic transform together with its parameters and the modalities it may touch.
///
/// Parameters by transform:
///   jitter           sigma    noise std as a fraction of the per-channel std
///   scale            sigma    std of the per-channel factor around 1
///   segment_shuffle  segments number of equal-length pieces permuted
///   time_warp        knots, sigma   interior spline knots and per-knot log-speed std
struct AugmentationSpec {
  AugName name = AugName::jitter;
  std::map<std::string, double> params;
  std::set<Modality> modalities;

  double param(const std::string& key) const;
  bool applies_to(Modality m) const { return modalities.count(m) != 0; }

  /// Spec with the default parameters and applicability (rotation and channel
  /// shuffle are accelerometer-only).
  static AugmentationSpec with_defaults(AugName name);
};

/// The default eight-transform suite.
std::vector<AugmentationSpec> default_augmentations();

void to_json(nlohmann::json& j, const AugmentationSpec& spec);
void from_json(const nlohmann::json& j, AugmentationSpec& spec);

struct ViewSamplerConfig {
  int num_views = 2;
  std::vector<AugmentationSpec> specs = default_augmentations();

  void validate() const;
  /// Specs applicable to `m`, in declaration order.
  std::vector<const AugmentationSpec*> applicable(Modality m) const;
};

/// Applies one transform. Throws when the transform does not apply to the window's modality.
TimeSeriesWindow apply(const AugmentationSpec& spec, const TimeSeriesWindow& window, Rng& rng);

/// Uniformly random 3×3 rotation (normalized Gaussian quaternion).
Eigen::Matrix3d random_rotation(Rng& rng);

using ViewKey = std::pair<Modality, int>;

/// A views per modality, each an independent uniform draw of one applicable transform.
std::map<ViewKey, TimeSeriesWindow> sample_views(const MultimodalSample& sample,
                                                 const ViewSamplerConfig& cfg, Rng& rng);

/// Index of the transform sample_views would pick next for `m` (exposed for frequency tests).
std::size_t draw_spec_index(const ViewSamplerConfig& cfg, Modality m, Rng& rng);

}  // namespace protomm
