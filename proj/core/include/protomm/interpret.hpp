// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protomm/model.hpp"
#include "protomm/signal.hpp"

namespace protomm {

struct CentroidSet {
  int k = 0;
  Mat<double> centroids;                 // k × E, unit rows
  std::vector<int> assignment;           // per prototype
  std::vector<std::vector<int>> members; // per centroid, ascending
  std::vector<double> wcss_history;      // after every assignment step
  int iterations = 0;
};

/// Euclidean k-means on the rows of `points` with k-means++ seeding.
/// Empty clusters are reseeded from the point farthest from its centroid.
CentroidSet kmeans(const Mat<double>& points, int k, std::uint64_t seed, int max_iterations = 300);

/// k-means over the prototype columns of `bank`.
CentroidSet cluster_prototypes(const PrototypeBank<float>& bank, int k, std::uint64_t seed);

struct Neighbor {
  std::size_t index = 0;  // row of the searched embedding set
  double similarity = 0.0;
};

/// The `top_k` rows of `embeddings` (unit rows) with the largest cosine similarity
/// to `query`, descending, ties broken by the lower row index.
std::vector<Neighbor> nearest_segments(const Vec<double>& query, const Mat<double>& embeddings, int top_k = 3);

struct TsneConfig {
  double perplexity = 5.0;  // lowered automatically for tiny point sets
  int iterations = 1000;
  double learning_rate = 100.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
};

/// Exact t-SNE of the rows of `points` into two dimensions; deterministic given seed.
Mat<double> tsne_2d(const Mat<double>& points, std::uint64_t seed, const TsneConfig& cfg = {});

/// P_count × 2 coordinates of the prototype columns.
Mat<double> project_2d(const PrototypeBank<float>& bank, std::uint64_t seed, const TsneConfig& cfg = {});

/// Rows `prototype_index,x,y,centroid_id` under a header line.
void write_coords_csv(const std::filesystem::path& path, const Mat<double>& coords, const std::vector<int>& centroid_of);

/// Fraction of neighbors sharing the most common label among each centroid's
/// neighbors, averaged over centroids that have labelled neighbors.
double label_consistency(const std::vector<std::vector<std::optional<std::string>>>& neighbor_labels);

struct InterpretConfig {
  int k = 15;
  int top_k = 3;
  std::uint64_t seed = 0;
  /// Retrieve separately per modality (default) or from one pooled set.
  bool per_modality = true;

  void validate() const;
};

struct InterpretSummary {
  CentroidSet clusters;
  Mat<double> coords;
  /// Keyed by modality name, or "joint".
  std::map<std::string, double> consistency;
};

/// Writes coords.csv, neighbors.json and consistency.json into `out_dir`.
InterpretSummary run_interpret(const Model& model, const DatasetManifest& data, const InterpretConfig& cfg,
                               const std::filesystem::path& out_dir);

}  // namespace protomm
