// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "protomm/encoder.hpp"
#include "protomm/losses.hpp"
#include "protomm/prototypes.hpp"

namespace protomm {

/// Single linear layer E→E followed by L2 normalization (contrastive baselines).
template <typename S>
struct ProjectionHead {
  Mat<S> weight;  // out × in
  Vec<S> bias;

  static ProjectionHead init(int dim, std::uint64_t seed);
};

template <typename S>
struct HeadCache {
  Mat<S> input;
  Mat<S> output;
  Vec<S> norms;
};

template <typename S>
Mat<S> head_forward(const ProjectionHead<S>& head, const Mat<S>& x, HeadCache<S>* cache);

/// Returns dL/dx; accumulates into `grad_weight` and `grad_bias`.
template <typename S>
Mat<S> head_backward(const ProjectionHead<S>& head, const HeadCache<S>& cache, const Mat<S>& grad,
                     Mat<S>& grad_weight, Vec<S>& grad_bias);

/// Everything a pre-training run learns: one encoder per modality plus either
/// the shared prototype bank (ProtoMM) or projection heads and a learnable
/// log-temperature (contrastive baselines).
struct Model {
  std::vector<Modality> modalities;
  std::map<Modality, EncoderParams<float>> encoders;
  std::optional<PrototypeBank<float>> prototypes;
  std::map<Modality, ProjectionHead<float>> heads;
  float clip_log_temperature = 0.0f;

  const EncoderParams<float>& encoder(Modality m) const;
  int embed_dim() const;
};

/// Checkpoint directory: `manifest.json` (configs, metrics, architecture notes and
/// one entry per named block with shape and byte offset) plus `params.bin`
/// holding the blocks as little-endian float32.
struct CheckpointMeta {
  nlohmann::json config;   // resolved run configuration
  nlohmann::json metrics;  // e.g. {epoch, train_loss, val_loss}
  AssignmentConfig assignment;
};

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir, CheckpointMeta* meta = nullptr);

/// 64-bit FNV-1a of a JSON document's canonical dump.
std::uint64_t fingerprint(const nlohmann::json& doc);
/// Fingerprint over every parameter and buffer byte of a model.
std::uint64_t fingerprint(const Model& model);

}  // namespace protomm
