// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "protomm/evaluation.hpp"
#include "protomm/interpret.hpp"
#include "protomm/synthetic.hpp"
#include "protomm/training.hpp"

namespace protomm {

enum class DatasetKind { synthetic, wesad, dalia };

std::string_view to_string(DatasetKind d);
DatasetKind dataset_kind_from_string(std::string_view s);

struct DataConfig {
  DatasetKind dataset = DatasetKind::synthetic;
  std::string root;          // raw dataset directory for ingest
  std::string manifest;      // pre-training / probing manifest
  std::string val_manifest;  // empty: hold out val_fraction of subjects
  double val_fraction = 0.1;
  std::vector<Modality> modalities{Modality::PPG, Modality::ACCEL};
  Task task = Task::none;
  SyntheticGenConfig synthetic;
};

/// Every knob of a run, grouped in the sections of the JSON config file.
struct ExperimentConfig {
  DataConfig data;
  ViewSamplerConfig augmentation;
  EncoderConfig encoder;
  int prototype_count = 512;
  AssignmentConfig assignment;
  int freeze_prototypes_epochs = 0;
  LossConfig loss;
  AdamConfig optimizer;
  int batch_size = 256;
  int max_epochs = 100;
  double wall_clock_budget_hours = 96.0;
  std::uint64_t seed = 0;
  ProbeConfig evaluation;
  InterpretConfig interpret;

  /// Dotted key path → "paper", "default" or "config" (set by the file or a flag).
  std::map<std::string, std::string> origins;

  TrainConfig train_config() const;
  void validate() const;
};

/// Strict parse: unknown keys and ill-typed values raise ConfigError naming the key path.
/// A top-level "_origins" object (as written by to_json) is accepted and ignored.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig default_config();

/// Resolved config with every value filled in plus an "_origins" map.
nlohmann::json to_json(const ExperimentConfig& cfg);

void to_json(nlohmann::json& j, const AdamConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void to_json(nlohmann::json& j, const ViewSamplerConfig& c);
void to_json(nlohmann::json& j, const SyntheticGenConfig& c);

}  // namespace protomm
