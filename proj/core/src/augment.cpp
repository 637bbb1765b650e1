// SPDX-License-Identifier: Apache-2.0
#include "protomm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <nlohmann/json.hpp>

namespace protomm {

namespace {

constexpr AugName kAll[] = {AugName::jitter,       AugName::scale,
                            AugName::rotate3d,     AugName::negate,
                            AugName::time_reverse, AugName::channel_shuffle,
                            AugName::segment_shuffle, AugName::time_warp};

// Linear read of `x` at fractional index `pos` (clamped to the window).
Eigen::RowVectorXf lerp_row(const Eigen::MatrixXf& x, double pos) {
  const int last = static_cast<int>(x.rows()) - 1;
  pos = std::clamp(pos, 0.0, static_cast<double>(last));
  const int lo = static_cast<int>(std::floor(pos));
  const int hi = std::min(lo + 1, last);
  const float frac = static_cast<float>(pos - lo);
  return (1.0f - frac) * x.row(lo) + frac * x.row(hi);
}

TimeSeriesWindow time_warp(const TimeSeriesWindow& in, int knots, double sigma, Rng& rng) {
  const int t_len = in.length();
  TimeSeriesWindow out = in;
  if (t_len < 2 || sigma == 0.0) return out;
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<double> log_speed(static_cast<std::size_t>(knots) + 2);
  for (auto& v : log_speed) v = n(rng);
  const double step = static_cast<double>(t_len - 1) / (knots + 1);
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline(
      log_speed.begin(), log_speed.end(), 0.0, step, 0.0, 0.0);

  // cumulative warp τ(t) = ∫ exp(spline) dt, rescaled so τ(T−1) = T−1
  std::vector<double> tau(static_cast<std::size_t>(t_len), 0.0);
  for (int t = 1; t < t_len; ++t) {
    const double mid = t - 0.5;
    tau[t] = tau[t - 1] + std::exp(spline(mid));
  }
  const double scale = (t_len - 1) / tau.back();
  for (int t = 0; t < t_len; ++t) out.samples.row(t) = lerp_row(in.samples, tau[t] * scale);
  return out;
}

}  // namespace

std::string_view to_string(AugName a) {
  switch (a) {
    case AugName::jitter: return "jitter";
    case AugName::scale: return "scale";
    case AugName::rotate3d: return "rotate3d";
    case AugName::negate: return "negate";
    case AugName::time_reverse: return "time_reverse";
    case AugName::channel_shuffle: return "channel_shuffle";
    case AugName::segment_shuffle: return "segment_shuffle";
    case AugName::time_warp: return "time_warp";
  }
  return "jitter";
}

AugName aug_from_string(std::string_view s) {
  for (auto a : kAll) {
    if (to_string(a) == s) return a;
  }
  throw Error("unknown augmentation '" + std::string(s) + "'");
}

double AugmentationSpec::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) {
    throw Error("augmentation '" + std::string(to_string(name)) + "' lacks parameter '" + key + "'");
  }
  return it->second;
}

AugmentationSpec AugmentationSpec::with_defaults(AugName name) {
  AugmentationSpec s;
  s.name = name;
  s.modalities = {Modality::PPG, Modality::ACCEL};
  switch (name) {
    case AugName::jitter: s.params = {{"sigma", 0.05}}; break;
    case AugName::scale: s.params = {{"sigma", 0.1}}; break;
    case AugName::segment_shuffle: s.params = {{"segments", 4}}; break;
    case AugName::time_warp: s.params = {{"knots", 4}, {"sigma", 0.2}}; break;
    case AugName::rotate3d:
    case AugName::channel_shuffle: s.modalities = {Modality::ACCEL}; break;
    default: break;
  }
  return s;
}

std::vector<AugmentationSpec> default_augmentations() {
  std::vector<AugmentationSpec> out;
  for (auto a : kAll) out.push_back(AugmentationSpec::with_defaults(a));
  return out;
}

void to_json(nlohmann::json& j, const AugmentationSpec& spec) {
  std::vector<std::string> mods;
  for (auto m : spec.modalities) mods.emplace_back(to_string(m));
  j = {{"name", to_string(spec.name)}, {"params", spec.params}, {"modalities", mods}};
}

void from_json(const nlohmann::json& j, AugmentationSpec& spec) {
  const auto name = aug_from_string(j.at("name").get<std::string>());
  spec = AugmentationSpec::with_defaults(name);
  if (j.contains("params")) {
    for (const auto& [k, v] : j.at("params").items()) {
      if (!spec.params.count(k)) {
        throw Error("augmentation '" + std::string(to_string(name)) + "' has no parameter '" + k + "'");
      }
      spec.params[k] = v.get<double>();
    }
  }
  if (j.contains("modalities")) {
    spec.modalities.clear();
    for (const auto& m : j.at("modalities")) spec.modalities.insert(modality_from_string(m.get<std::string>()));
  }
  if ((name == AugName::rotate3d || name == AugName::channel_shuffle) &&
      spec.modalities.count(Modality::PPG)) {
    throw Error("augmentation '" + std::string(to_string(name)) + "' cannot apply to single-channel PPG");
  }
  if (!spec.modalities.count(Modality::ACCEL)) {
    throw Error("augmentation '" + std::string(to_string(name)) + "' must apply to accel");
  }
}

void ViewSamplerConfig::validate() const {
  if (num_views < 2) throw ConfigError("augmentation.num_views", "must be >= 2");
  for (auto m : {Modality::PPG, Modality::ACCEL}) {
    if (applicable(m).empty()) {
      throw ConfigError("augmentation.transforms", "no transform applies to " + std::string(to_string(m)));
    }
  }
}

std::vector<const AugmentationSpec*> ViewSamplerConfig::applicable(Modality m) const {
  std::vector<const AugmentationSpec*> out;
  for (const auto& s : specs) {
    if (s.applies_to(m)) out.push_back(&s);
  }
  return out;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-12);
  q.normalize();
  return q.toRotationMatrix();
}

TimeSeriesWindow apply(const AugmentationSpec& spec, const TimeSeriesWindow& window, Rng& rng) {
  if (!spec.applies_to(window.modality)) {
    throw Error("augmentation '" + std::string(to_string(spec.name)) + "' does not apply to " +
                std::string(to_string(window.modality)));
  }
  TimeSeriesWindow out = window;
  auto& x = out.samples;
  const int t_len = window.length();
  const int channels = window.channels();

  switch (spec.name) {
    case AugName::jitter: {
      const double rel = spec.param("sigma");
      if (rel == 0.0) break;
      for (int c = 0; c < channels; ++c) {
        const auto col = window.samples.col(c).cast<double>();
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().mean());
        if (sd == 0.0) continue;
        std::normal_distribution<double> n(0.0, rel * sd);
        for (int t = 0; t < t_len; ++t) x(t, c) += static_cast<float>(n(rng));
      }
      break;
    }
    case AugName::scale: {
      const double sigma = spec.param("sigma");
      if (sigma == 0.0) break;
      std::normal_distribution<double> n(1.0, sigma);
      for (int c = 0; c < channels; ++c) x.col(c) *= static_cast<float>(n(rng));
      break;
    }
    case AugName::rotate3d: {
      if (channels != 3) throw Error("rotate3d requires 3 channels");
      const Eigen::Matrix3f r = random_rotation(rng).cast<float>();
      x = window.samples * r.transpose();  // each row x_t ← R x_t
      break;
    }
    case AugName::negate: x = -window.samples; break;
    case AugName::time_reverse: x = window.samples.colwise().reverse(); break;
    case AugName::channel_shuffle: {
      std::vector<int> perm(static_cast<std::size_t>(channels));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (int c = 0; c < channels; ++c) x.col(c) = window.samples.col(perm[c]);
      break;
    }
    case AugName::segment_shuffle: {
      const int k = std::clamp(static_cast<int>(spec.param("segments")), 1, std::max(1, t_len));
      if (k == 1) break;
      std::vector<int> bounds(static_cast<std::size_t>(k) + 1);
      for (int i = 0; i <= k; ++i) bounds[i] = static_cast<int>(static_cast<long>(i) * t_len / k);
      std::vector<int> order(static_cast<std::size_t>(k));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      int row = 0;
      for (int seg : order) {
        const int len = bounds[seg + 1] - bounds[seg];
        x.middleRows(row, len) = window.samples.middleRows(bounds[seg], len);
        row += len;
      }
      break;
    }
    case AugName::time_warp:
      out = time_warp(window, std::max(1, static_cast<int>(spec.param("knots"))),
                      spec.param("sigma"), rng);
      break;
  }
  return out;
}

std::size_t draw_spec_index(const ViewSamplerConfig& cfg, Modality m, Rng& rng) {
  const auto n = cfg.applicable(m).size();
  if (n == 0) throw Error("no augmentation applies to " + std::string(to_string(m)));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  return pick(rng);
}

std::map<ViewKey, TimeSeriesWindow> sample_views(const MultimodalSample& sample,
                                                 const ViewSamplerConfig& cfg, Rng& rng) {
  std::map<ViewKey, TimeSeriesWindow> out;
  for (const auto& [m, w] : sample.windows) {
    const auto specs = cfg.applicable(m);
    for (int a = 0; a < cfg.num_views; ++a) {
      const auto* spec = specs.at(draw_spec_index(cfg, m, rng));
      out.emplace(ViewKey{m, a}, apply(*spec, w, rng));
    }
  }
  return out;
}

}  // namespace protomm
