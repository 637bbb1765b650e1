// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "protomm/model.hpp"
#include "protomm/synthetic.hpp"
#include "protomm/training.hpp"

using namespace protomm;
using namespace protomm::test;

namespace {

DatasetManifest tiny_corpus(std::uint64_t seed, int subjects = 4) {
  SyntheticGenConfig g;
  g.n_subjects = subjects;
  g.windows_per_subject = 8;
  g.seed = seed;
  return generate_synthetic(g);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.optimizer.learning_rate = 1e-3;
  c.batch_size = 8;
  c.max_epochs = 2;
  c.prototype_count = 8;
  c.encoder.base_width = 4;
  c.encoder.embed_dim = 16;
  c.assignment.temperature = 0.3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("pretraining is deterministic for a fixed seed") {
  const auto train = tiny_corpus(1), val = tiny_corpus(2, 2);
  const auto cfg = tiny_config();
  const auto a = pretrain(train, val, cfg);
  const auto b = pretrain(train, val, cfg);
  REQUIRE(a.step_losses.size() == 8);
  CHECK(a.step_losses == b.step_losses);
  CHECK(fingerprint(a.best) == fingerprint(b.best));
  REQUIRE(a.records.size() == 2);
  CHECK(a.records[1].val_loss == b.records[1].val_loss);
  CHECK(a.config_fingerprint == b.config_fingerprint);

  auto other = cfg;
  other.seed = 6;
  CHECK(pretrain(train, val, other).step_losses != a.step_losses);
}

TEST_CASE("select_best picks the lowest validation loss, earliest on ties") {
  std::vector<CheckpointRecord> r(4);
  const double vals[] = {1.0, 0.5, 0.7, 0.5};
  for (int i = 0; i < 4; ++i) {
    r[i].epoch = i;
    r[i].val_loss = vals[i];
  }
  CHECK(select_best(r).epoch == 1);
  std::swap(r[1], r[3]);
  CHECK(select_best(r).epoch == 1);
  CHECK_THROWS_AS(select_best({}), Error);
}

TEST_CASE("validation_loss leaves the model untouched and is repeatable") {
  const auto val = tiny_corpus(3, 2);
  const auto cfg = tiny_config();
  const Model model = init_model(cfg);
  const auto before = fingerprint(model);
  const double first = validation_loss(model, val, cfg);
  CHECK(fingerprint(model) == before);
  CHECK(validation_loss(model, val, cfg) == first);
  CHECK(std::isfinite(first));
}

TEST_CASE("initial loss sits near log P") {
  const auto train = tiny_corpus(4), val = tiny_corpus(5, 2);
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  const auto r = pretrain(train, val, cfg);
  const double logp = std::log(static_cast<double>(cfg.prototype_count));
  CHECK(r.step_losses.front() > 0.5 * logp);
  CHECK(r.step_losses.front() < 2.0 * logp);
}

TEST_CASE("alpha = 1 averages independent single-modality objectives at the first step") {
  const auto train = tiny_corpus(6), val = tiny_corpus(7, 2);
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  cfg.loss.alpha = 1.0;
  const double joint = pretrain(train, val, cfg).step_losses.front();
  double sum = 0;
  for (auto m : {Modality::PPG, Modality::ACCEL}) {
    auto single = cfg;
    single.modalities = {m};
    sum += pretrain(train, val, single).step_losses.front();
  }
  CHECK(joint == doctest::Approx(sum / 2).epsilon(1e-5));
}

TEST_CASE("prototypes stay unit norm and shapes are preserved") {
  const auto train = tiny_corpus(8), val = tiny_corpus(9, 2);
  const auto cfg = tiny_config();
  const Model init = init_model(cfg);
  const auto r = pretrain(train, val, cfg);
  REQUIRE(r.best.prototypes.has_value());
  const auto& p = r.best.prototypes->matrix;
  CHECK(p.rows() == 16);
  CHECK(p.cols() == 8);
  for (int j = 0; j < p.cols(); ++j) CHECK(std::abs(p.col(j).norm() - 1.0f) < 1e-5f);
  for (auto m : cfg.modalities) {
    const auto& a = init.encoder(m).weights;
    const auto& b = r.best.encoder(m).weights;
    REQUIRE(a.size() == b.size());
    for (std::size_t w = 0; w < a.size(); ++w) {
      CHECK(a[w].shape == b[w].shape);
      CHECK(a[w].data.size() == b[w].data.size());
    }
  }
}

TEST_CASE("frozen prototypes do not move") {
  const auto train = tiny_corpus(10), val = tiny_corpus(11, 2);
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  cfg.freeze_prototypes_epochs = 1;
  const Model init = init_model(cfg);
  const auto r = pretrain(train, val, cfg);
  CHECK((r.best.prototypes->matrix - init.prototypes->matrix).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("contrastive objectives train projection heads") {
  const auto train = tiny_corpus(12), val = tiny_corpus(13, 2);
  for (auto obj : {Objective::simclr, Objective::clip, Objective::slip}) {
    auto cfg = tiny_config();
    cfg.max_epochs = 1;
    cfg.loss.objective = obj;
    const auto r = pretrain(train, val, cfg);
    CHECK_FALSE(r.best.prototypes.has_value());
    CHECK(r.best.heads.size() == 2);
    for (double l : r.step_losses) CHECK(std::isfinite(l));
  }
}

TEST_CASE("run directory layout and checkpoint round trip") {
  TempDir dir("training");
  const auto train = tiny_corpus(14), val = tiny_corpus(15, 2);
  const auto cfg = tiny_config();
  PretrainOptions opts;
  opts.run_dir = dir.path();
  const auto r = pretrain(train, val, cfg, opts);
  CHECK(std::filesystem::exists(dir.path() / "config.json"));
  std::ifstream metrics(dir.path() / "metrics.jsonl");
  int lines = 0;
  for (std::string line; std::getline(metrics, line);) ++lines;
  CHECK(lines == 2);
  for (const auto& rec : r.records) CHECK(std::filesystem::exists(rec.archive / "manifest.json"));

  const auto& best = select_best(r.records);
  CheckpointMeta meta;
  const Model loaded = load_checkpoint(best.archive, &meta);
  CHECK(fingerprint(loaded) == fingerprint(r.best));
  CHECK(meta.metrics.at("epoch").get<int>() == best.epoch);
  CHECK(validation_loss(loaded, val, cfg) == doctest::Approx(best.val_loss).epsilon(1e-9));
}

TEST_CASE("invalid training configs name their keys") {
  auto c = tiny_config();
  c.batch_size = 1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("training.batch_size"), ConfigError);
  c = tiny_config();
  c.optimizer.learning_rate = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("training.learning_rate"), ConfigError);
  c = tiny_config();
  c.modalities = {Modality::PPG};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("loss.alpha"), ConfigError);
  c = tiny_config();
  c.modalities = {Modality::PPG, Modality::PPG};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("pretrain rejects a corpus smaller than one batch") {
  const auto train = tiny_corpus(16, 1), val = tiny_corpus(17, 1);
  auto cfg = tiny_config();
  cfg.batch_size = 16;
  CHECK_THROWS_AS(pretrain(train, val, cfg), Error);
}

}  // TEST_SUITE
