// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "protomm/augment.hpp"

using namespace protomm;
using namespace protomm::test;

namespace {

double max_diff(const TimeSeriesWindow& a, const TimeSeriesWindow& b) {
  REQUIRE(a.samples.rows() == b.samples.rows());
  REQUIRE(a.samples.cols() == b.samples.cols());
  return (a.samples - b.samples).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("augmentation") {

TEST_CASE("time reversal and negation are involutions") {
  Rng rng = derive_rng(1, {});
  for (Modality m : {Modality::PPG, Modality::ACCEL}) {
    const auto w = random_window(m, 120, rng);
    for (AugName n : {AugName::time_reverse, AugName::negate}) {
      const auto spec = AugmentationSpec::with_defaults(n);
      const auto once = apply(spec, w, rng);
      CHECK(max_diff(once, w) > 0.0);
      CHECK(max_diff(apply(spec, once, rng), w) == 0.0);
    }
  }
}

TEST_CASE("rotation preserves the per-timestep norm") {
  Rng rng = derive_rng(2, {});
  const auto w = random_window(Modality::ACCEL, 300, rng);
  for (int i = 0; i < 20; ++i) {
    const auto r = apply(AugmentationSpec::with_defaults(AugName::rotate3d), w, rng);
    const Eigen::VectorXd before = w.samples.cast<double>().rowwise().norm();
    const Eigen::VectorXd after = r.samples.cast<double>().rowwise().norm();
    CHECK((before - after).cwiseAbs().maxCoeff() < 1e-6);
  }
  const Eigen::Matrix3d q = random_rotation(rng);
  CHECK((q * q.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(q.determinant() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero-strength parameters are the identity") {
  Rng rng = derive_rng(3, {});
  for (Modality m : {Modality::PPG, Modality::ACCEL}) {
    const auto w = random_window(m, 128, rng);
    auto jitter = AugmentationSpec::with_defaults(AugName::jitter);
    jitter.params["sigma"] = 0.0;
    auto scale = AugmentationSpec::with_defaults(AugName::scale);
    scale.params["sigma"] = 0.0;
    auto shuffle = AugmentationSpec::with_defaults(AugName::segment_shuffle);
    shuffle.params["segments"] = 1;
    auto warp = AugmentationSpec::with_defaults(AugName::time_warp);
    warp.params["sigma"] = 0.0;
    for (const auto& s : {jitter, scale, shuffle, warp}) CHECK(max_diff(apply(s, w, rng), w) < 1e-6);
  }
}

TEST_CASE("every transform keeps shape, rate and modality") {
  Rng rng = derive_rng(4, {});
  for (Modality m : {Modality::PPG, Modality::ACCEL}) {
    for (int t : {33, 64, 257}) {
      const auto w = random_window(m, t, rng, 32.0);
      for (const auto& spec : default_augmentations()) {
        if (!spec.applies_to(m)) continue;
        const auto out = apply(spec, w, rng);
        CHECK(out.length() == w.length());
        CHECK(out.channels() == w.channels());
        CHECK(out.sample_rate_hz == w.sample_rate_hz);
        CHECK(out.modality == m);
        CHECK(out.all_finite());
      }
    }
  }
}

TEST_CASE("time warp stays inside the original value range") {
  Rng rng = derive_rng(5, {});
  for (int trial = 0; trial < 25; ++trial) {
    const auto w = random_window(Modality::ACCEL, 200, rng);
    const auto out = apply(AugmentationSpec::with_defaults(AugName::time_warp), w, rng);
    for (int c = 0; c < 3; ++c) {
      const auto col = w.samples.col(c);
      Eigen::VectorXf steps = (col.tail(199) - col.head(199)).cwiseAbs();
      const float step = steps.maxCoeff();
      CHECK(out.samples.col(c).maxCoeff() <= col.maxCoeff() + step);
      CHECK(out.samples.col(c).minCoeff() >= col.minCoeff() - step);
    }
  }
}

TEST_CASE("segment shuffle permutes whole segments") {
  Rng rng = derive_rng(6, {});
  TimeSeriesWindow w;
  w.modality = Modality::PPG;
  w.sample_rate_hz = 50;
  w.samples.resize(100, 1);
  for (int i = 0; i < 100; ++i) w.samples(i, 0) = static_cast<float>(i);
  const auto out = apply(AugmentationSpec::with_defaults(AugName::segment_shuffle), w, rng);
  std::vector<float> sorted(out.samples.data(), out.samples.data() + 100);
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == static_cast<float>(i));
}

TEST_CASE("PPG views never use rotation or channel shuffling") {
  ViewSamplerConfig cfg;
  const auto ppg = cfg.applicable(Modality::PPG);
  CHECK(ppg.size() == 6);
  CHECK(cfg.applicable(Modality::ACCEL).size() == 8);
  for (const auto* s : ppg) {
    CHECK(s->name != AugName::rotate3d);
    CHECK(s->name != AugName::channel_shuffle);
  }
  Rng rng = derive_rng(7, {});
  const auto w = random_window(Modality::PPG, 64, rng);
  CHECK_THROWS_AS(apply(AugmentationSpec::with_defaults(AugName::rotate3d), w, rng), Error);
  CHECK_THROWS_AS(apply(AugmentationSpec::with_defaults(AugName::channel_shuffle), w, rng), Error);
}

TEST_CASE("transform selection is uniform over applicable specs") {
  ViewSamplerConfig cfg;
  for (Modality m : {Modality::PPG, Modality::ACCEL}) {
    const std::size_t k = cfg.applicable(m).size();
    std::vector<long> counts(k, 0);
    Rng rng = derive_rng(8, {static_cast<std::uint64_t>(m)});
    const long n = 100000;
    for (long i = 0; i < n; ++i) ++counts.at(draw_spec_index(cfg, m, rng));
    const double p = 1.0 / k;
    const double sd = std::sqrt(n * p * (1 - p));
    for (long c : counts) CHECK(std::abs(c - n * p) <= 3 * sd);
  }
}

TEST_CASE("sample_views draws A views per modality deterministically") {
  Rng rng = derive_rng(9, {});
  MultimodalSample s;
  s.windows.emplace(Modality::PPG, random_window(Modality::PPG, 96, rng));
  s.windows.emplace(Modality::ACCEL, random_window(Modality::ACCEL, 96, rng));
  ViewSamplerConfig cfg;
  Rng a = derive_rng(10, {}), b = derive_rng(10, {});
  const auto v1 = sample_views(s, cfg, a);
  const auto v2 = sample_views(s, cfg, b);
  CHECK(v1.size() == 4);
  for (const auto& [key, w] : v1) CHECK(max_diff(w, v2.at(key)) == 0.0);
  cfg.num_views = 3;
  CHECK(sample_views(s, cfg, a).size() == 6);
}

TEST_CASE("augmentation specs round-trip through JSON") {
  for (const auto& spec : default_augmentations()) {
    const nlohmann::json j = spec;
    const auto back = j.get<AugmentationSpec>();
    CHECK(back.name == spec.name);
    CHECK(back.params == spec.params);
    CHECK(back.modalities == spec.modalities);
  }
  CHECK_THROWS(nlohmann::json{{"name", "mixup"}}.get<AugmentationSpec>());
}

}  // TEST_SUITE
