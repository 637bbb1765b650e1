// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "protomm/signal.hpp"

namespace protomm {

/// Sidecar + record file pair.
///
/// `<stem>.json` holds {samples, split, task, sample_rate_hz}; each sample entry
/// records subject, start time, label/target, the byte offset of its record and
/// the shape of every modality block. `<stem>.bin` holds, per sample and per
/// modality in the order listed, a T×C block of little-endian float32 values in
/// timestep-major order.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& json_path);
DatasetManifest read_manifest(const std::filesystem::path& json_path);

std::filesystem::path records_path_for(const std::filesystem::path& json_path);

/// WESAD wrist (E4) export: `<root>/S<k>/S<k>_E4_Data/{BVP,ACC}.csv` and
/// `<root>/S<k>/S<k>_quest.csv` session annotations. BVP serves as PPG.
/// Sessions are cut into non-overlapping 60 s windows and resampled to 50 Hz.
DatasetManifest load_wesad(const std::filesystem::path& root, Task task);

/// PPG-DaLiA export: `<root>/S<k>/S<k>_E4/{BVP,ACC}.csv`, `<root>/S<k>/S<k>_activity.csv`
/// and, for heart-rate regression, `<root>/S<k>/S<k>_hr.csv` (one reference value per
/// 8 s / 2 s window, as distributed in the dataset's label array).
DatasetManifest load_dalia(const std::filesystem::path& root, Task task);

/// Label names produced by the adapters.
namespace labels {
inline constexpr const char* kStress = "Stress";
inline constexpr const char* kNonStress = "Non-stress";
inline constexpr const char* kBaseline = "Baseline";
inline constexpr const char* kAmusement = "Amusement";
inline constexpr const char* kMeditation = "Meditation";
inline constexpr const char* kTransient = "TRANSIENT";
}  // namespace labels

/// Reads an Empatica E4 CSV: first row start timestamp(s), second row rate, then samples.
TimeSeriesWindow read_e4_csv(const std::filesystem::path& path, Modality modality,
                             double* start_unix_s = nullptr);

}  // namespace protomm
