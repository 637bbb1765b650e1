// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "protomm/evaluation.hpp"
#include "protomm/synthetic.hpp"

using namespace protomm;
using namespace protomm::test;

TEST_SUITE("signal") {

TEST_CASE("resample 32 Hz accelerometer window onto 50 Hz") {
  Rng rng = derive_rng(1, {});
  const auto w = random_window(Modality::ACCEL, 256, rng, 32.0);
  const auto r = resample(w, 50.0);
  CHECK(r.length() == 400);
  CHECK(r.channels() == 3);
  CHECK(r.sample_rate_hz == 50.0);
  CHECK(r.modality == Modality::ACCEL);
}

TEST_CASE("resample at the input rate is the identity") {
  Rng rng = derive_rng(2, {});
  const auto w = random_window(Modality::PPG, 97, rng, 64.0);
  const auto r = resample(w, 64.0);
  REQUIRE(r.length() == w.length());
  CHECK((r.samples - w.samples).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("resample keeps a constant signal constant") {
  for (double rate : {17.0, 32.0, 64.0, 700.0}) {
    TimeSeriesWindow w;
    w.sample_rate_hz = rate;
    w.modality = Modality::ACCEL;
    w.samples = Eigen::MatrixXf::Constant(static_cast<int>(rate * 3), 3, 2.5f);
    const auto r = resample(w, 50.0);
    CHECK((r.samples.array() - 2.5f).abs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("resampling a monotone ramp stays inside the original envelope") {
  Rng rng = derive_rng(3, {});
  std::uniform_real_distribution<double> rate(10.0, 200.0);
  for (int trial = 0; trial < 30; ++trial) {
    TimeSeriesWindow w;
    w.sample_rate_hz = rate(rng);
    w.modality = Modality::PPG;
    const int t = 50 + trial * 7;
    w.samples.resize(t, 1);
    for (int i = 0; i < t; ++i) w.samples(i, 0) = static_cast<float>(std::pow(i, 1.3));
    const auto r = resample(w, 50.0);
    const float step = w.samples(t - 1, 0) - w.samples(t - 2, 0);
    CHECK(r.samples.minCoeff() >= w.samples.minCoeff() - 1e-4f);
    CHECK(r.samples.maxCoeff() <= w.samples.maxCoeff() + 1e-4f);
    // the last output sample can fall up to two output periods before the last input sample
    const float reach = step * static_cast<float>(std::ceil(2.0 * w.sample_rate_hz / 50.0));
    CHECK(r.samples.maxCoeff() >= w.samples.maxCoeff() - reach - 1e-3f);
  }
}

TEST_CASE("window counts") {
  CHECK(window_count(60, 8, 2) == 27);
  CHECK(window_count(30, 30, 30) == 1);
  CHECK(window_count(60, 60, 60) == 1);
  CHECK(window_count(5, 8, 2) == 0);
}

TEST_CASE("segment_stream matches the count formula on fuzzed streams") {
  Rng rng = derive_rng(4, {});
  std::uniform_int_distribution<int> dur(8, 120), win(1, 30), str(1, 15);
  for (int trial = 0; trial < 40; ++trial) {
    const double window = win(rng);
    const double duration = std::max<double>(dur(rng), window);
    const double stride = str(rng);
    MultimodalStream s;
    s.subject_id = "s";
    for (Modality m : {Modality::PPG, Modality::ACCEL}) {
      TimeSeriesWindow w;
      w.modality = m;
      w.sample_rate_hz = m == Modality::PPG ? 50.0 : 25.0;
      w.samples = Eigen::MatrixXf::Zero(static_cast<int>(duration * w.sample_rate_hz), channels_for(m));
      s.channels.emplace(m, w);
    }
    const auto out = segment_stream(s, window, stride);
    int expected = 0;
    for (double t = 0; t + window <= duration + 1e-9; t += stride) ++expected;
    CHECK(static_cast<int>(out.size()) == expected);
    CHECK(window_count(duration, window, stride) == expected);
    for (const auto& sample : out) {
      CHECK(sample.at(Modality::PPG).length() == static_cast<int>(window * 50));
      CHECK(sample.at(Modality::ACCEL).length() == static_cast<int>(window * 25));
    }
  }
}

TEST_CASE("segment_stream of a too-short stream is empty") {
  MultimodalStream s;
  TimeSeriesWindow w;
  w.sample_rate_hz = 50.0;
  w.samples = Eigen::MatrixXf::Zero(100, 1);
  s.channels.emplace(Modality::PPG, w);
  CHECK(segment_stream(s, 8.0, 2.0).empty());
}

TEST_CASE("subject folds are deterministic and cover every subject") {
  std::vector<std::string> subjects;
  for (int i = 0; i < 11; ++i) subjects.push_back("S" + std::to_string(i));
  const auto a = subject_folds(subjects, 5, 9);
  const auto b = subject_folds(subjects, 5, 9);
  CHECK(a == b);
  std::map<int, int> sizes;
  for (const auto& [s, f] : a) ++sizes[f];
  CHECK(sizes.size() == 5);
  for (const auto& [f, n] : sizes) CHECK((n == 2 || n == 3));
}

TEST_CASE("split_subjects holds out whole subjects") {
  SyntheticGenConfig g;
  g.n_subjects = 10;
  g.windows_per_subject = 4;
  const auto all = generate_synthetic(g);
  const auto [train, val] = split_subjects(all, 0.2, 3);
  CHECK(train.size() + val.size() == all.size());
  CHECK(val.subjects().size() == 2);
  const auto train_subjects = train.subjects();
  const std::set<std::string> tr(train_subjects.begin(), train_subjects.end());
  for (const auto& s : val.subjects()) CHECK(tr.count(s) == 0);
}

TEST_CASE("synthetic generation is a pure function of its config") {
  SyntheticGenConfig g;
  g.n_subjects = 3;
  g.windows_per_subject = 5;
  g.seed = 42;
  const auto a = generate_synthetic(g);
  const auto b = generate_synthetic(g);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i]->label == b.samples[i]->label);
    for (Modality m : {Modality::PPG, Modality::ACCEL}) {
      CHECK((a.samples[i]->at(m).samples - b.samples[i]->at(m).samples).cwiseAbs().maxCoeff() == 0.0f);
    }
  }
  g.seed = 43;
  const auto c = generate_synthetic(g);
  CHECK((a.samples[0]->at(Modality::PPG).samples - c.samples[0]->at(Modality::PPG).samples).norm() > 0.0f);
}

TEST_CASE("synthetic windows share their start time across modalities") {
  SyntheticGenConfig g;
  g.n_subjects = 2;
  g.windows_per_subject = 6;
  const auto d = generate_synthetic(g);
  for (const auto& s : d.samples) {
    CHECK(s->at(Modality::PPG).length() == s->at(Modality::ACCEL).length());
    CHECK(s->label.has_value());
  }
  CHECK(d.label_set().size() <= 4);
}

TEST_CASE("without a shared component the latent state does not reach the signal") {
  SyntheticGenConfig g;
  g.shared_fraction = 0.0;
  g.noise_sigma = 0.0;
  for (Modality m : {Modality::PPG, Modality::ACCEL}) {
    Rng r1 = derive_rng(5, {}), r2 = derive_rng(5, {});
    const auto a = render_synthetic_window(g, m, 0, 2, SubjectTraits{}, r1);
    const auto b = render_synthetic_window(g, m, 3, 2, SubjectTraits{}, r2);
    CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("noise-free two-state windows are linearly separable per modality") {
  SyntheticGenConfig g;
  g.n_latent_states = 2;
  g.noise_sigma = 0.0;
  g.n_subjects = 4;
  g.windows_per_subject = 40;
  const auto d = generate_synthetic(g);
  for (Modality m : {Modality::PPG, Modality::ACCEL}) {
    const int t = d.samples[0]->at(m).length();
    const int c = d.samples[0]->at(m).channels();
    Mat<double> x(static_cast<int>(d.size()), t * c);
    std::vector<int> y;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Eigen::MatrixXf& s = d.samples[i]->at(m).samples;
      x.row(static_cast<int>(i)) = Eigen::Map<const Eigen::VectorXf>(s.data(), s.size()).cast<double>().transpose();
      y.push_back(*d.samples[i]->label == synthetic_label(0) ? 0 : 1);
    }
    ProbeConfig pc;
    pc.logistic_l2 = 1e-8;
    pc.max_iterations = 2000;
    const auto probe = fit_logistic(x, y, 2, pc);
    CHECK(accuracy(probe.predict_class(x), y) == 1.0);
  }
}

TEST_CASE("manifest validation") {
  DatasetManifest d;
  d.task = Task::stress2;
  auto s = std::make_shared<MultimodalSample>();
  s->subject_id = "a";
  d.samples.push_back(s);
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("no label"), Error);
  d.task = Task::none;
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("no windows"), Error);
  TimeSeriesWindow w;
  w.modality = Modality::ACCEL;
  w.samples = Eigen::MatrixXf::Zero(10, 1);
  s->windows.emplace(Modality::ACCEL, w);
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("channels"), Error);
  s->windows.at(Modality::ACCEL).samples = Eigen::MatrixXf::Zero(10, 3);
  CHECK_NOTHROW(d.validate());
  s->label = "x";
  CHECK_THROWS_AS(d.validate(), Error);
}

}  // TEST_SUITE
