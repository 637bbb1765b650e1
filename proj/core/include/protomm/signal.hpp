// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protomm/common.hpp"

namespace protomm {

enum class Modality { PPG, ACCEL };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view name);
/// Channel count fixed per modality: 1 for PPG, 3 for ACCEL.
int channels_for(Modality m);

/// A T×C block of samples for one modality, stored column-per-channel.
struct TimeSeriesWindow {
  Eigen::MatrixXf samples;  // T rows, C columns
  double sample_rate_hz = 0.0;
  Modality modality = Modality::PPG;

  int length() const { return static_cast<int>(samples.rows()); }
  int channels() const { return static_cast<int>(samples.cols()); }
  double duration_s() const { return length() / sample_rate_hz; }
  bool all_finite() const { return samples.allFinite(); }
};

/// Temporally aligned per-modality windows for one interval.
struct MultimodalSample {
  std::map<Modality, TimeSeriesWindow> windows;
  std::optional<std::string> label;   // classification tasks
  std::optional<double> target;       // regression tasks
  std::string subject_id;
  double window_start_s = 0.0;

  bool has(Modality m) const { return windows.count(m) != 0; }
  const TimeSeriesWindow& at(Modality m) const;
};

enum class Split { train, val, test };
enum class Task { stress2, stress4, activity2, activity9, hr_regression, synthetic_state, none };

std::string_view to_string(Split s);
std::string_view to_string(Task t);
Split split_from_string(std::string_view s);
Task task_from_string(std::string_view s);
bool is_regression(Task t);

using SamplePtr = std::shared_ptr<const MultimodalSample>;

/// Ordered, immutable-after-construction collection of samples.
struct DatasetManifest {
  std::vector<SamplePtr> samples;
  Split split = Split::train;
  Task task = Task::none;
  double sample_rate_hz = 50.0;

  std::size_t size() const { return samples.size(); }
  std::vector<std::string> subjects() const;
  /// Sorted distinct classification labels.
  std::vector<std::string> label_set() const;
  /// Keeps samples whose subject is in `keep`; order preserved.
  DatasetManifest filter_subjects(const std::vector<std::string>& keep) const;
  /// Throws if labels are missing for a labelled task or present for Task::none.
  void validate() const;
};

/// A continuous recording per modality; rates may differ across modalities.
struct MultimodalStream {
  std::map<Modality, TimeSeriesWindow> channels;
  std::string subject_id;
  double start_s = 0.0;

  double duration_s() const;
};

/// Linear interpolation onto a grid at `target_hz`.
TimeSeriesWindow resample(const TimeSeriesWindow& window, double target_hz);

/// Number of windows segment_stream produces for a stream of `duration_s`.
int window_count(double duration_s, double window_s, double stride_s);

/// Cuts every modality on the same wall-clock boundaries 0, stride, 2·stride, ...
/// Returns an empty list (with a logged warning) when the stream is shorter than a window.
std::vector<MultimodalSample> segment_stream(const MultimodalStream& stream, double window_s,
                                             double stride_s);

/// Splits subjects into `folds` groups deterministically; returns fold index per subject.
std::map<std::string, int> subject_folds(const std::vector<std::string>& subjects, int folds,
                                         std::uint64_t seed);

/// Holds out round(fraction·n_subjects) subjects (at least one) as validation.
std::pair<DatasetManifest, DatasetManifest> split_subjects(const DatasetManifest& all,
                                                           double val_fraction,
                                                           std::uint64_t seed);

}  // namespace protomm
