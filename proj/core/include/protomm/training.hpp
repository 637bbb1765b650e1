// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protomm/augment.hpp"
#include "protomm/encoder.hpp"
#include "protomm/losses.hpp"
#include "protomm/model.hpp"
#include "protomm/optim.hpp"
#include "protomm/prototypes.hpp"

namespace protomm {

struct TrainConfig {
  AdamConfig optimizer;  // learning_rate 1e-5, no weight decay
  int batch_size = 256;
  int max_epochs = 100;
  double wall_clock_budget_hours = 96.0;
  std::uint64_t seed = 0;
  LossConfig loss;
  AssignmentConfig assignment;
  int prototype_count = 512;
  std::vector<Modality> modalities{Modality::PPG, Modality::ACCEL};
  /// Template for every modality's encoder; in_channels is set per modality.
  EncoderConfig encoder;
  ViewSamplerConfig views;
  /// Prototypes receive no updates during the first N epochs (0 = never frozen).
  int freeze_prototypes_epochs = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);

/// One per finished epoch.
struct CheckpointRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::filesystem::path archive;  // empty when the run keeps checkpoints in memory
  std::uint64_t config_fingerprint = 0;
};

/// Raised when a training step produces a NaN or infinite loss.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(int epoch, int batch, double value);
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

struct PretrainResult {
  std::vector<CheckpointRecord> records;
  std::vector<double> step_losses;
  /// Model of the record picked by select_best.
  Model best;
  std::uint64_t config_fingerprint = 0;
};

/// Optional observer called after every optimizer step with (epoch, batch, loss).
using StepObserver = std::function<void(int, int, double)>;

/// Fresh model for `cfg`: per-modality encoders seeded by (seed, modality), plus
/// the prototype bank (protomm) or projection heads (contrastive objectives).
Model init_model(const TrainConfig& cfg);

struct PretrainOptions {
  /// When non-empty, receives `config.json`, `metrics.jsonl` and one checkpoint
  /// directory per epoch under `checkpoints/`.
  std::filesystem::path run_dir;
  /// Written as `config.json` and stored in checkpoints; defaults to to_json(cfg).
  nlohmann::json resolved_config;
  StepObserver observer;
};

/// Self-supervised pre-training. Labels in the manifests are ignored.
PretrainResult pretrain(const DatasetManifest& train, const DatasetManifest& val, const TrainConfig& cfg,
                        const PretrainOptions& options = {});

/// Mean objective over `data` in evaluation mode with view draws fixed by
/// (seed, sample index, modality). Never mutates `model`.
double validation_loss(const Model& model, const DatasetManifest& data, const TrainConfig& cfg);

/// Lowest val_loss; ties go to the earliest epoch.
const CheckpointRecord& select_best(const std::vector<CheckpointRecord>& records);

}  // namespace protomm
