// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "protomm/model.hpp"
#include "protomm/signal.hpp"

namespace protomm {

/// Which frozen embeddings feed the probe: PPG only, accelerometer only, or both concatenated.
enum class Composition { single_P, single_A, concat_PA };
enum class TaskType { classification, regression };

std::string_view to_string(Composition c);  // "P", "A", "P+A"
Composition composition_from_string(std::string_view s);
std::string_view to_string(TaskType t);
TaskType task_type_from_string(std::string_view s);
std::vector<Modality> modalities_of(Composition c);

struct ProbeConfig {
  Composition composition = Composition::concat_PA;
  TaskType task_type = TaskType::classification;
  int folds = 5;
  std::uint64_t fold_seed = 0;
  /// L2 penalty on the logistic weights (standardized features).
  double logistic_l2 = 1e-4;
  int max_iterations = 500;
  double ridge_lambda = 1e-3;

  void validate() const;
};

/// Frozen embeddings with the metadata the probes need; row i came from sample `sample_index[i]`.
struct EmbeddingSet {
  Mat<double> features;  // N × D
  std::vector<int> labels;               // class ids into class_names (classification)
  std::vector<std::string> class_names;  // sorted
  std::vector<double> targets;           // regression targets
  std::vector<std::string> subjects;
  std::vector<std::size_t> sample_index;
  std::size_t skipped = 0;  // samples lacking a required modality
};

/// Encodes every sample in evaluation mode and stacks the per-modality embeddings
/// (pre-projection-head) in composition order. Never mutates the model.
EmbeddingSet extract_embeddings(const Model& model, const DatasetManifest& data, Composition composition,
                                int batch_size = 256);

/// Affine map on standardized features.
struct LinearProbe {
  TaskType task_type = TaskType::classification;
  Vec<double> mean;
  Vec<double> scale;
  Mat<double> weight;  // D × K (K = classes, or 1 for regression)
  Vec<double> bias;    // K

  Mat<double> decision(const Mat<double>& x) const;
  std::vector<int> predict_class(const Mat<double>& x) const;
  std::vector<double> predict_value(const Mat<double>& x) const;
};

/// Multinomial logistic regression fitted by L-BFGS.
LinearProbe fit_logistic(const Mat<double>& x, const std::vector<int>& labels, int n_classes, const ProbeConfig& cfg);
/// Closed-form ridge regression; the intercept is not penalized.
LinearProbe fit_ridge(const Mat<double>& x, const std::vector<double>& targets, double lambda);

struct FoldMetrics {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  // classification
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  double train_macro_f1 = 0.0;
  double majority_accuracy = 0.0;
  // regression
  double mae = 0.0;
  double r2 = 0.0;
  double train_r2 = 0.0;
  double mean_predictor_mae = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct ProbeReport {
  TaskType task_type = TaskType::classification;
  Composition composition = Composition::concat_PA;
  std::size_t n_samples = 0;
  std::size_t n_skipped_samples = 0;
  std::size_t n_features = 0;
  std::vector<std::string> class_names;
  std::vector<FoldMetrics> folds;
  std::vector<std::string> skipped_folds;  // reasons
  MeanStd macro_f1, accuracy, train_macro_f1, majority_accuracy;
  MeanStd mae, r2, train_r2, mean_predictor_mae;
  bool beats_majority = false;  // accuracy above the majority-class baseline
};

void to_json(nlohmann::json& j, const ProbeReport& r);

struct ProbeResult {
  LinearProbe probe;  // fitted on every sample
  ProbeReport report;
};

/// Subject-wise k-fold probe evaluation. Folds whose training part has a single
/// class (or a single distinct target) are skipped and listed in the report.
ProbeResult train_linear_probe(const EmbeddingSet& data, const ProbeConfig& cfg);

/// Per-class F1 for every class id in [0, n_classes); classes absent from `labels` get NaN.
std::vector<double> per_class_f1(const std::vector<int>& preds, const std::vector<int>& labels, int n_classes);
/// Unweighted mean F1 over classes with support; unsupported classes are skipped with a warning
/// and listed in `excluded` when given.
double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels, std::vector<int>* excluded = nullptr);
double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);
double mae(const std::vector<double>& preds, const std::vector<double>& targets);
/// 1 − SS_res/SS_tot; throws when the targets are constant.
double r2(const std::vector<double>& preds, const std::vector<double>& targets);

}  // namespace protomm
