// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "protomm/dataset_io.hpp"
#include "protomm/synthetic.hpp"

using namespace protomm;
using namespace protomm::test;
namespace fs = std::filesystem;

namespace {

// E4 CSV: start timestamp row, rate row, then samples.
std::string e4_csv(double rate, double seconds, int channels, double start = 1500000000.0) {
  std::ostringstream o;
  o.precision(12);
  for (int c = 0; c < channels; ++c) o << (c ? "," : "") << start;
  o << "\n";
  for (int c = 0; c < channels; ++c) o << (c ? "," : "") << rate;
  o << "\n";
  const int n = static_cast<int>(rate * seconds);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) o << (c ? "," : "") << std::sin(0.01 * i + c) * (channels == 3 ? 64 : 1);
    o << "\n";
  }
  return o.str();
}

void wesad_subject(const fs::path& root, const std::string& s) {
  write_text(root / s / (s + "_E4_Data") / "BVP.csv", e4_csv(64.0, 720.0, 1));
  write_text(root / s / (s + "_E4_Data") / "ACC.csv", e4_csv(32.0, 720.0, 3));
  write_text(root / s / (s + "_quest.csv"),
             "# Subj;" + s + "\n"
             "# ORDER;Base;TSST;Medi 1;Fun;sRead\n"
             "# START;0.30;3.00;5.30;7.30;10.00\n"
             "# END;3.00;5.30;7.30;10.00;11.00\n");
}

void dalia_subject(const fs::path& root, const std::string& s) {
  write_text(root / s / (s + "_E4") / "BVP.csv", e4_csv(64.0, 200.0, 1));
  write_text(root / s / (s + "_E4") / "ACC.csv", e4_csv(32.0, 200.0, 3));
  write_text(root / s / (s + "_activity.csv"),
             "# SUBJECT_ID," + s + "\n# BASELINE,0\n# STAIRS,20\n# SOCCER,40\n# CYCLING,60\n# DRIVING,80\n"
             "# LUNCH,100\n# WALKING,120\n# WORKING,140\n# NO_ACTIVITY,160\n");
  std::string hr;
  for (int i = 0; i < 97; ++i) hr += std::to_string(60.0 + i * 0.5) + "\n";
  write_text(root / s / (s + "_hr.csv"), hr);
}

}  // namespace

TEST_SUITE("dataset_io") {

TEST_CASE("manifest round trip preserves samples bit for bit") {
  TempDir dir("manifest");
  SyntheticGenConfig g;
  g.n_subjects = 2;
  g.windows_per_subject = 3;
  const auto d = generate_synthetic(g);
  write_manifest(d, dir.path() / "syn.json");
  CHECK(fs::exists(dir.path() / "syn.bin"));
  CHECK(records_path_for(dir.path() / "syn.json") == dir.path() / "syn.bin");
  const auto r = read_manifest(dir.path() / "syn.json");
  CHECK(r.task == d.task);
  CHECK(r.sample_rate_hz == d.sample_rate_hz);
  REQUIRE(r.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(r.samples[i]->subject_id == d.samples[i]->subject_id);
    CHECK(r.samples[i]->label == d.samples[i]->label);
    CHECK(r.samples[i]->window_start_s == d.samples[i]->window_start_s);
    for (Modality m : {Modality::PPG, Modality::ACCEL}) {
      CHECK((r.samples[i]->at(m).samples - d.samples[i]->at(m).samples).cwiseAbs().maxCoeff() == 0.0f);
    }
  }
  const auto sidecar = nlohmann::json::parse(std::ifstream(dir.path() / "syn.json"));
  for (const char* key : {"samples", "split", "task", "sample_rate_hz"}) CHECK(sidecar.contains(key));
}

TEST_CASE("E4 reader scales accelerometer counts to g") {
  TempDir dir("e4");
  write_text(dir.path() / "ACC.csv", "100,100,100\n32,32,32\n64,-64,0\n32,0,128\n");
  double start = 0;
  const auto w = read_e4_csv(dir.path() / "ACC.csv", Modality::ACCEL, &start);
  CHECK(start == 100.0);
  CHECK(w.sample_rate_hz == 32.0);
  REQUIRE(w.length() == 2);
  CHECK(w.samples(0, 0) == 1.0f);
  CHECK(w.samples(0, 1) == -1.0f);
  CHECK(w.samples(1, 2) == 2.0f);
}

TEST_CASE("WESAD binary and four-class stress labels") {
  TempDir dir("wesad");
  wesad_subject(dir.path(), "S2");
  wesad_subject(dir.path(), "S3");
  fs::create_directories(dir.path() / "S4");  // incomplete subject is skipped

  const auto two = load_wesad(dir.path(), Task::stress2);
  CHECK(two.label_set() == std::vector<std::string>{labels::kNonStress, labels::kStress});
  CHECK(two.subjects().size() == 2);
  // Base 2.5 min → 2, TSST 2.5 min → 2, Fun 2.5 min → 2 one-minute windows per subject
  CHECK(two.size() == 12);
  for (const auto& s : two.samples) {
    CHECK(s->at(Modality::PPG).length() == 3000);
    CHECK(s->at(Modality::ACCEL).length() == 3000);
    CHECK(s->at(Modality::PPG).sample_rate_hz == 50.0);
  }
  const auto four = load_wesad(dir.path(), Task::stress4);
  CHECK(four.label_set().size() == 4);
  CHECK_THROWS_AS(load_wesad(dir.path(), Task::activity9), Error);
}

TEST_CASE("DaLiA activity windows and heart-rate targets") {
  TempDir dir("dalia");
  dalia_subject(dir.path(), "S1");
  const auto act = load_dalia(dir.path(), Task::activity9);
  CHECK(act.label_set().size() == 9);
  CHECK(act.size() == static_cast<std::size_t>(window_count(200.0, 8.0, 2.0)));
  for (const auto& s : act.samples) {
    CHECK(s->at(Modality::PPG).length() == 400);
    CHECK(s->at(Modality::ACCEL).length() == 400);
  }
  const auto hr = load_dalia(dir.path(), Task::hr_regression);
  CHECK(hr.size() == 97);
  for (const auto& s : hr.samples) CHECK(*s->target > 0.0);
}

TEST_CASE("ingested windows share their start time across modalities") {
  TempDir dir("wesad_align");
  wesad_subject(dir.path(), "S5");
  const auto d = load_wesad(dir.path(), Task::stress4);
  std::set<double> starts;
  for (const auto& s : d.samples) starts.insert(s->window_start_s);
  CHECK(starts.size() == d.size());
}

}  // TEST_SUITE
