// SPDX-License-Identifier: Apache-2.0
#include "protomm/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

namespace protomm {

std::string_view to_string(Modality m) { return m == Modality::PPG ? "ppg" : "accel"; }

Modality modality_from_string(std::string_view name) {
  if (name == "ppg" || name == "PPG" || name == "P") return Modality::PPG;
  if (name == "accel" || name == "ACCEL" || name == "A") return Modality::ACCEL;
  throw Error("unknown modality '" + std::string(name) + "'");
}

int channels_for(Modality m) { return m == Modality::PPG ? 1 : 3; }

const TimeSeriesWindow& MultimodalSample::at(Modality m) const {
  auto it = windows.find(m);
  if (it == windows.end()) {
    throw Error("sample from subject '" + subject_id + "' has no " + std::string(to_string(m)) +
                " window");
  }
  return it->second;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::stress2: return "stress2";
    case Task::stress4: return "stress4";
    case Task::activity2: return "activity2";
    case Task::activity9: return "activity9";
    case Task::hr_regression: return "hr_regression";
    case Task::synthetic_state: return "synthetic_state";
    case Task::none: return "none";
  }
  return "none";
}

Split split_from_string(std::string_view s) {
  for (auto v : {Split::train, Split::val, Split::test}) {
    if (to_string(v) == s) return v;
  }
  throw Error("unknown split '" + std::string(s) + "'");
}

Task task_from_string(std::string_view s) {
  for (auto v : {Task::stress2, Task::stress4, Task::activity2, Task::activity9,
                 Task::hr_regression, Task::synthetic_state, Task::none}) {
    if (to_string(v) == s) return v;
  }
  throw Error("unknown task '" + std::string(s) + "'");
}

bool is_regression(Task t) { return t == Task::hr_regression; }

std::vector<std::string> DatasetManifest::subjects() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (seen.insert(s->subject_id).second) out.push_back(s->subject_id);
  }
  return out;
}

std::vector<std::string> DatasetManifest::label_set() const {
  std::set<std::string> labels;
  for (const auto& s : samples) {
    if (s->label) labels.insert(*s->label);
  }
  return {labels.begin(), labels.end()};
}

DatasetManifest DatasetManifest::filter_subjects(const std::vector<std::string>& keep) const {
  std::set<std::string> keep_set(keep.begin(), keep.end());
  DatasetManifest out;
  out.split = split;
  out.task = task;
  out.sample_rate_hz = sample_rate_hz;
  for (const auto& s : samples) {
    if (keep_set.count(s->subject_id)) out.samples.push_back(s);
  }
  return out;
}

void DatasetManifest::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    const bool labelled = s.label.has_value() || s.target.has_value();
    if (task == Task::none && labelled) {
      throw Error("sample " + std::to_string(i) + " carries a label but task is none");
    }
    if (task != Task::none && !labelled) {
      throw Error("sample " + std::to_string(i) + " has no label for task " +
                  std::string(to_string(task)));
    }
    if (s.windows.empty()) throw Error("sample " + std::to_string(i) + " has no windows");
    for (const auto& [m, w] : s.windows) {
      if (w.channels() != channels_for(m)) {
        throw Error("sample " + std::to_string(i) + ": " + std::string(to_string(m)) +
                    " window has " + std::to_string(w.channels()) + " channels");
      }
      if (!w.all_finite()) throw Error("sample " + std::to_string(i) + " has non-finite values");
    }
  }
}

double MultimodalStream::duration_s() const {
  if (channels.empty()) return 0.0;
  double d = std::numeric_limits<double>::infinity();
  for (const auto& [m, w] : channels) d = std::min(d, w.duration_s());
  return d;
}

TimeSeriesWindow resample(const TimeSeriesWindow& window, double target_hz) {
  if (!(target_hz > 0.0)) throw Error("resample: target_hz must be positive");
  if (window.length() == 0) throw Error("resample: empty window");
  if (!window.all_finite()) throw Error("resample: window contains non-finite values");

  const int t_in = window.length();
  const double ratio = window.sample_rate_hz / target_hz;
  const int t_out = static_cast<int>(std::lround(t_in * target_hz / window.sample_rate_hz));

  TimeSeriesWindow out;
  out.sample_rate_hz = target_hz;
  out.modality = window.modality;
  out.samples.resize(t_out, window.channels());
  for (int k = 0; k < t_out; ++k) {
    const double pos = std::min<double>(k * ratio, t_in - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, t_in - 1);
    const float frac = static_cast<float>(pos - lo);
    if (frac == 0.0f) {
      out.samples.row(k) = window.samples.row(lo);
    } else {
      out.samples.row(k) =
          (1.0f - frac) * window.samples.row(lo) + frac * window.samples.row(hi);
    }
  }
  return out;
}

int window_count(double duration_s, double window_s, double stride_s) {
  if (!(stride_s > 0.0)) throw Error("stride must be positive");
  if (duration_s + 1e-9 < window_s) return 0;
  return static_cast<int>(std::floor((duration_s - window_s) / stride_s + 1e-9)) + 1;
}

std::vector<MultimodalSample> segment_stream(const MultimodalStream& stream, double window_s,
                                             double stride_s) {
  if (!(stride_s > 0.0)) throw Error("segment_stream: stride_s must be positive");
  if (!(window_s > 0.0)) throw Error("segment_stream: window_s must be positive");
  const double duration = stream.duration_s();
  const int count = window_count(duration, window_s, stride_s);
  std::vector<MultimodalSample> out;
  if (count == 0) {
    spdlog::warn("segment_stream: subject '{}' stream of {:.3f}s is shorter than a {:.3f}s window",
                 stream.subject_id, duration, window_s);
    return out;
  }
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double start = i * stride_s;
    MultimodalSample sample;
    sample.subject_id = stream.subject_id;
    sample.window_start_s = stream.start_s + start;
    for (const auto& [m, w] : stream.channels) {
      const int first = static_cast<int>(std::lround(start * w.sample_rate_hz));
      const int len = static_cast<int>(std::lround(window_s * w.sample_rate_hz));
      const int avail = std::min(len, w.length() - first);
      TimeSeriesWindow cut;
      cut.modality = m;
      cut.sample_rate_hz = w.sample_rate_hz;
      cut.samples.resize(len, w.channels());
      cut.samples.topRows(avail) = w.samples.middleRows(first, avail);
      // rounding at the final boundary can leave one sample short; hold the last value
      for (int r = avail; r < len; ++r) cut.samples.row(r) = w.samples.row(w.length() - 1);
      sample.windows.emplace(m, std::move(cut));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

std::map<std::string, int> subject_folds(const std::vector<std::string>& subjects, int folds,
                                         std::uint64_t seed) {
  if (folds < 2) throw Error("subject_folds: need at least 2 folds");
  std::vector<std::string> order(subjects);
  std::sort(order.begin(), order.end());
  Rng rng = derive_rng(seed, {0x5f01d5});
  std::shuffle(order.begin(), order.end(), rng);
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = static_cast<int>(i % folds);
  return out;
}

std::pair<DatasetManifest, DatasetManifest> split_subjects(const DatasetManifest& all,
                                                           double val_fraction,
                                                           std::uint64_t seed) {
  auto subjects = all.subjects();
  if (subjects.size() < 2) throw Error("split_subjects: need at least two subjects");
  std::sort(subjects.begin(), subjects.end());
  Rng rng = derive_rng(seed, {0x7a1});
  std::shuffle(subjects.begin(), subjects.end(), rng);
  auto n_val = static_cast<std::size_t>(std::lround(val_fraction * subjects.size()));
  n_val = std::clamp<std::size_t>(n_val, 1, subjects.size() - 1);
  std::vector<std::string> val(subjects.begin(), subjects.begin() + n_val);
  std::vector<std::string> train(subjects.begin() + n_val, subjects.end());
  auto tr = all.filter_subjects(train);
  auto va = all.filter_subjects(val);
  tr.split = Split::train;
  va.split = Split::val;
  return {tr, va};
}

}  // namespace protomm
