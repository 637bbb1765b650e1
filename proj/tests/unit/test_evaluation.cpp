// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "protomm/evaluation.hpp"
#include "protomm/model.hpp"
#include "protomm/synthetic.hpp"
#include "protomm/training.hpp"

using namespace protomm;
using namespace protomm::test;

namespace {

TrainConfig narrow_config(int embed_dim) {
  TrainConfig c;
  c.encoder.base_width = 4;
  c.encoder.embed_dim = embed_dim;
  c.prototype_count = 8;
  c.seed = 3;
  return c;
}

DatasetManifest small_corpus() {
  SyntheticGenConfig g;
  g.n_subjects = 3;
  g.windows_per_subject = 6;
  g.seed = 21;
  return generate_synthetic(g);
}

EmbeddingSet synthetic_set(const Mat<double>& x, const std::vector<int>& labels, int subjects, int classes) {
  EmbeddingSet s;
  s.features = x;
  s.labels = labels;
  for (int c = 0; c < classes; ++c) s.class_names.push_back("c" + std::to_string(c));
  for (int i = 0; i < x.rows(); ++i) {
    s.subjects.push_back("s" + std::to_string(i % subjects));
    s.sample_index.push_back(static_cast<std::size_t>(i));
  }
  return s;
}

// Brute-force F1 from per-class counts.
double oracle_macro_f1(const std::vector<int>& p, const std::vector<int>& y) {
  std::set<int> classes(y.begin(), y.end());
  double sum = 0;
  for (int c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      tp += p[i] == c && y[i] == c;
      fp += p[i] == c && y[i] != c;
      fn += p[i] != c && y[i] == c;
    }
    sum += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return sum / static_cast<double>(classes.size());
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("embedding width follows the composition") {
  const auto data = small_corpus();
  const Model model = init_model(narrow_config(512));
  CHECK(extract_embeddings(model, data, Composition::concat_PA).features.cols() == 1024);
  CHECK(extract_embeddings(model, data, Composition::single_P).features.cols() == 512);
  CHECK(extract_embeddings(model, data, Composition::single_A).features.cols() == 512);
}

TEST_CASE("extraction is bit-identical across calls and batch sizes and leaves the model alone") {
  const auto data = small_corpus();
  const Model model = init_model(narrow_config(16));
  const auto before = fingerprint(model);
  const auto a = extract_embeddings(model, data, Composition::concat_PA, 4);
  const auto b = extract_embeddings(model, data, Composition::concat_PA, 4);
  CHECK(a.features == b.features);
  CHECK(fingerprint(model) == before);
  const auto c = extract_embeddings(model, data, Composition::concat_PA, 7);
  CHECK((a.features - c.features).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(a.features.rows() == static_cast<Eigen::Index>(data.size()));
  CHECK(a.class_names == data.label_set());
  CHECK(a.subjects.size() == data.size());
}

TEST_CASE("missing encoders are reported") {
  const auto data = small_corpus();
  auto cfg = narrow_config(16);
  cfg.modalities = {Modality::PPG};
  cfg.loss.alpha = 1.0;
  const Model model = init_model(cfg);
  CHECK_THROWS_AS(extract_embeddings(model, data, Composition::single_A), Error);
}

TEST_CASE("linearly separable classes reach F1 = 1") {
  Rng rng = derive_rng(31, {});
  const int n = 120;
  Mat<double> x = gaussian(n, 4, rng, 0.1);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % 3;
    x(i, y[i]) += 3.0;
  }
  ProbeConfig cfg;
  const auto r = train_linear_probe(synthetic_set(x, y, 6, 3), cfg);
  CHECK(r.report.macro_f1.mean == doctest::Approx(1.0));
  CHECK(r.report.folds.size() == 5);
  CHECK(r.report.beats_majority);
}

TEST_CASE("shuffled labels stay at chance") {
  Rng rng = derive_rng(32, {});
  const int n = 400;
  const Mat<double> x = gaussian(n, 5, rng);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng() % 2);
  ProbeConfig cfg;
  const auto r = train_linear_probe(synthetic_set(x, y, 8, 2), cfg);
  // per-fold F1 sd is about 0.06 at 80 test windows; three sigma of the 5-fold mean
  CHECK(std::abs(r.report.macro_f1.mean - 0.5) < 0.1);
}

TEST_CASE("affine regression targets give R2 = 1") {
  Rng rng = derive_rng(33, {});
  const int n = 100;
  const Mat<double> x = gaussian(n, 3, rng);
  Vec<double> w(3);
  w << 0.5, -2.0, 1.0;
  const Vec<double> t = (x * w).array() + 60.0;
  EmbeddingSet s = synthetic_set(x, {}, 5, 0);
  s.labels.clear();
  s.targets.assign(t.data(), t.data() + n);
  ProbeConfig cfg;
  cfg.task_type = TaskType::regression;
  cfg.ridge_lambda = 1e-9;
  const auto r = train_linear_probe(s, cfg);
  CHECK(r.report.r2.mean > 1 - 1e-6);
  CHECK(r.report.mae.mean < 1e-3);
  CHECK(r.report.mean_predictor_mae.mean > 0.5);
}

TEST_CASE("ridge with an unpenalized intercept recovers the offset") {
  Rng rng = derive_rng(34, {});
  const Mat<double> x = gaussian(50, 2, rng);
  std::vector<double> t(50);
  for (int i = 0; i < 50; ++i) t[i] = 3 * x(i, 0) + 100;
  const auto probe = fit_ridge(x, t, 1e-8);
  const auto pred = probe.predict_value(x);
  for (int i = 0; i < 50; ++i) CHECK(pred[i] == doctest::Approx(t[i]).epsilon(1e-6));
}

TEST_CASE("metric examples") {
  std::vector<int> y, p;
  // confusion [[8,2],[3,7]]
  for (int i = 0; i < 8; ++i) y.push_back(0), p.push_back(0);
  for (int i = 0; i < 2; ++i) y.push_back(0), p.push_back(1);
  for (int i = 0; i < 3; ++i) y.push_back(1), p.push_back(0);
  for (int i = 0; i < 7; ++i) y.push_back(1), p.push_back(1);
  CHECK(macro_f1(p, y) == doctest::Approx(0.749373).epsilon(1e-6));
  CHECK(macro_f1(p, y) == doctest::Approx(oracle_macro_f1(p, y)).epsilon(1e-12));
  CHECK(accuracy(p, y) == doctest::Approx(0.75));

  const auto per = per_class_f1(p, y, 3);
  CHECK(per[0] == doctest::Approx(16.0 / 21.0));
  CHECK(std::isnan(per[2]));

  std::vector<int> excluded;
  const std::vector<int> y2{0, 0, 1}, p2{0, 2, 1};
  CHECK(macro_f1(p2, y2, &excluded) == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
  CHECK(excluded == std::vector<int>{2});

  CHECK(mae({1, 2, 3}, {2, 2, 5}) == doctest::Approx(1.0));
  CHECK(r2({2, 2, 2}, {1, 2, 3}) == doctest::Approx(0.0));
  CHECK(r2({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(r2({1, 2}, {4, 4}), Error);
}

TEST_CASE("macro-F1 is invariant to sample order and class renaming") {
  Rng rng = derive_rng(35, {});
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 30, k = 4;
    std::vector<int> y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % k);
      p[i] = rng() % 3 == 0 ? static_cast<int>(rng() % k) : y[i];
    }
    const double base = macro_f1(p, y);
    CHECK(base == doctest::Approx(oracle_macro_f1(p, y)).epsilon(1e-12));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> rename(k);
    std::iota(rename.begin(), rename.end(), 0);
    std::shuffle(rename.begin(), rename.end(), rng);
    std::vector<int> y2(n), p2(n);
    for (int i = 0; i < n; ++i) {
      y2[i] = rename[y[order[i]]];
      p2[i] = rename[p[order[i]]];
    }
    CHECK(macro_f1(p2, y2) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("folds with a single training class are skipped and reported") {
  Rng rng = derive_rng(36, {});
  const int n = 30;
  Mat<double> x = gaussian(n, 2, rng);
  EmbeddingSet s = synthetic_set(x, std::vector<int>(n), 3, 2);
  for (int i = 0; i < n; ++i) s.labels[i] = s.subjects[i] == "s2" ? 1 : 0;
  ProbeConfig cfg;
  cfg.folds = 3;
  const auto r = train_linear_probe(s, cfg);
  CHECK(r.report.skipped_folds.size() == 1);
  CHECK(r.report.folds.size() == 2);
}

TEST_CASE("probe config rejects bad values") {
  ProbeConfig c;
  c.folds = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(composition_from_string("P+A") == Composition::concat_PA);
  CHECK(to_string(Composition::single_A) == "A");
  CHECK_THROWS_AS(composition_from_string("PA+"), Error);
}

}  // TEST_SUITE
