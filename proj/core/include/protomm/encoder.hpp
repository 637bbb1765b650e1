// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "protomm/signal.hpp"

namespace protomm {

/// 1D bottleneck ResNet: strided stem, `block_layout` bottleneck blocks per stage
/// (stride on the first block of every stage), global max pooling over time,
/// a linear projection to `embed_dim` and L2 normalization.
struct EncoderConfig {
  int in_channels = 1;
  int kernel_size = 11;
  int stride = 2;
  int embed_dim = 512;
  std::vector<int> block_layout{2, 2, 2, 2};
  int base_width = 64;
  int expansion = 4;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  /// Shortest input for which every strided stage still sees one full stride.
  int min_length() const;
  void validate() const;
  int final_channels() const;

  bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

template <typename S>
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  Vec<S> data;
};

/// Trainable weights plus batch-norm running statistics of one encoder.
template <typename S>
struct EncoderParams {
  EncoderConfig config;
  std::uint64_t seed = 0;
  std::vector<NamedTensor<S>> weights;
  std::vector<NamedTensor<S>> buffers;

  std::size_t parameter_count() const;
  const NamedTensor<S>& weight(std::string_view name) const;

  template <typename T>
  EncoderParams<T> cast() const {
    EncoderParams<T> out;
    out.config = config;
    out.seed = seed;
    for (const auto& w : weights) out.weights.push_back({w.name, w.shape, w.data.template cast<T>()});
    for (const auto& b : buffers) out.buffers.push_back({b.name, b.shape, b.data.template cast<T>()});
    return out;
  }
};

/// Gradient storage parallel to EncoderParams::weights.
template <typename S>
using ParamGrads = std::vector<Vec<S>>;

template <typename S>
ParamGrads<S> zero_grads(const EncoderParams<S>& params);

/// Throws (with the audited count) unless the layout audits to 26 weighted layers.
template <typename S>
EncoderParams<S> init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Same initialization without the 26-layer audit; for width/depth-reduced test networks.
template <typename S>
EncoderParams<S> init_encoder_unchecked(const EncoderConfig& config, std::uint64_t seed);

/// Weighted layers on the main path (stem, three convs per bottleneck, head
/// linear), found by walking the layer plan. Projection shortcuts are not counted.
int audit_weighted_layers(const EncoderConfig& config);

/// Batch of equal-length windows stacked as a (B·T)×C matrix, sample-major.
template <typename S>
struct InputBatch {
  Mat<S> data;
  int batch = 0;
  int length = 0;
};

template <typename S>
InputBatch<S> pack_batch(const std::vector<const TimeSeriesWindow*>& windows);

/// Concatenates channels of several modalities (early fusion). All must share T.
template <typename S>
InputBatch<S> pack_fused_batch(const std::vector<std::vector<const TimeSeriesWindow*>>& per_modality);

template <typename S>
struct ConvBNCache {
  Mat<S> cols;      // im2col matrix, or the raw input for 1×1/stride-1 convs
  Mat<S> xhat;
  RowVec<S> inv_std;
  int t_in = 0;
  int t_out = 0;
};

template <typename S>
struct BlockCache {
  ConvBNCache<S> reduce, spatial, expand, shortcut;
  Mat<S> h1, h2, out;
  bool has_shortcut = false;
  int t_in = 0;
  int t_out = 0;
};

template <typename S>
struct EncoderCache {
  int batch = 0;
  bool training = false;
  ConvBNCache<S> stem;
  Mat<S> stem_out;
  std::vector<BlockCache<S>> blocks;
  std::vector<int> argmax;  // per (sample, channel) winning row
  Mat<S> pooled;            // B × C_final
  Mat<S> pre_norm;          // B × E
  Vec<S> norms;
  Mat<S> output;            // B × E, unit rows
};

enum class Mode { train, eval };

/// Forward pass returning B×E unit-norm embeddings.
///
/// In train mode batch statistics are used and, when `update_running_stats`
/// is set, the running statistics in `params.buffers` are updated.
template <typename S>
Mat<S> encoder_forward(EncoderParams<S>& params, const InputBatch<S>& input, Mode mode,
                       EncoderCache<S>* cache, bool update_running_stats = true);

/// Evaluation-mode forward; never mutates parameters.
template <typename S>
Mat<S> encode_batch(const EncoderParams<S>& params, const InputBatch<S>& input);

/// Single-window convenience wrapper around encode_batch.
template <typename S>
Vec<S> encode(const EncoderParams<S>& params, const TimeSeriesWindow& window);

/// Accumulates parameter gradients of a loss with upstream `grad_output` (B×E).
/// Returns the gradient with respect to the input batch.
template <typename S>
Mat<S> encoder_backward(const EncoderParams<S>& params, const EncoderCache<S>& cache,
                        const Mat<S>& grad_output, ParamGrads<S>& grads);

/// Row-wise L2 normalization helpers shared with the projection heads.
template <typename S>
Mat<S> normalize_rows(const Mat<S>& x, Vec<S>* norms = nullptr);
template <typename S>
Mat<S> normalize_rows_backward(const Mat<S>& normalized, const Vec<S>& norms, const Mat<S>& grad);

}  // namespace protomm
