// SPDX-License-Identifier: Apache-2.0
#include "protomm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace protomm {

using nlohmann::json;

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a == 0 || b == 0) throw Error(std::string(what) + ": empty input");
  if (a != b) throw Error(std::string(what) + ": predictions and references differ in length");
}

Mat<double> rows_of(const Mat<double>& x, const std::vector<std::size_t>& idx) {
  Mat<double> out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

// Column means and standard deviations; constant columns get scale 1.
void standardizer(const Mat<double>& x, Vec<double>& mean, Vec<double>& scale) {
  mean = x.colwise().mean().transpose();
  scale = ((x.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (!(scale[j] > 1e-12)) scale[j] = 1.0;
  }
}

Mat<double> standardize(const Mat<double>& x, const Vec<double>& mean, const Vec<double>& scale) {
  return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

class SoftmaxObjective final : public ceres::FirstOrderFunction {
 public:
  SoftmaxObjective(const Mat<double>& x, const std::vector<int>& labels, int n_classes, double l2)
      : x_(x), n_classes_(n_classes), l2_(l2), onehot_(Mat<double>::Zero(x.rows(), n_classes)) {
    for (std::size_t i = 0; i < labels.size(); ++i) onehot_(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }

  bool Evaluate(const double* params, double* cost, double* gradient) const override {
    const Eigen::Index d = x_.cols();
    const Eigen::Map<const Mat<double>> w(params, d, n_classes_);
    const Eigen::Map<const Vec<double>> b(params + d * n_classes_, n_classes_);
    Mat<double> logits = x_ * w;
    logits.rowwise() += b.transpose();
    const Vec<double> row_max = logits.rowwise().maxCoeff();
    logits.colwise() -= row_max;
    const Vec<double> lse = logits.array().exp().rowwise().sum().log();
    logits.colwise() -= lse;  // now log-probabilities
    const double n = static_cast<double>(x_.rows());
    *cost = -(onehot_.array() * logits.array()).sum() / n + 0.5 * l2_ * w.squaredNorm();
    if (gradient) {
      const Mat<double> dlogits = (logits.array().exp().matrix() - onehot_) / n;
      Eigen::Map<Mat<double>> gw(gradient, d, n_classes_);
      Eigen::Map<Vec<double>> gb(gradient + d * n_classes_, n_classes_);
      gw = x_.transpose() * dlogits + l2_ * w;
      gb = dlogits.colwise().sum().transpose();
    }
    return true;
  }

  int NumParameters() const override { return static_cast<int>((x_.cols() + 1) * n_classes_); }

 private:
  const Mat<double>& x_;
  int n_classes_;
  double l2_;
  Mat<double> onehot_;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return {std::nan(""), std::nan("")};
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

json to_json_ms(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

}  // namespace

std::string_view to_string(Composition c) {
  switch (c) {
    case Composition::single_P: return "P";
    case Composition::single_A: return "A";
    case Composition::concat_PA: return "P+A";
  }
  return "P+A";
}

Composition composition_from_string(std::string_view s) {
  if (s == "P" || s == "single_P") return Composition::single_P;
  if (s == "A" || s == "single_A") return Composition::single_A;
  if (s == "P+A" || s == "concat_PA") return Composition::concat_PA;
  throw Error("unknown composition '" + std::string(s) + "' (expected P, A or P+A)");
}

std::string_view to_string(TaskType t) { return t == TaskType::classification ? "classification" : "regression"; }

TaskType task_type_from_string(std::string_view s) {
  if (s == "classification") return TaskType::classification;
  if (s == "regression") return TaskType::regression;
  throw Error("unknown task type '" + std::string(s) + "'");
}

std::vector<Modality> modalities_of(Composition c) {
  switch (c) {
    case Composition::single_P: return {Modality::PPG};
    case Composition::single_A: return {Modality::ACCEL};
    case Composition::concat_PA: return {Modality::PPG, Modality::ACCEL};
  }
  return {};
}

void ProbeConfig::validate() const {
  if (folds < 2) throw ConfigError("evaluation.folds", "must be at least 2");
  if (!(logistic_l2 >= 0.0)) throw ConfigError("evaluation.logistic_l2", "must be non-negative");
  if (max_iterations < 1) throw ConfigError("evaluation.max_iterations", "must be positive");
  if (!(ridge_lambda >= 0.0)) throw ConfigError("evaluation.ridge_lambda", "must be non-negative");
}

EmbeddingSet extract_embeddings(const Model& model, const DatasetManifest& data, Composition composition,
                                int batch_size) {
  if (batch_size < 1) throw Error("extract_embeddings: batch_size must be positive");
  const auto mods = modalities_of(composition);
  for (auto m : mods) {
    if (!model.encoders.count(m)) {
      throw Error("checkpoint has no " + std::string(to_string(m)) + " encoder; composition " +
                  std::string(to_string(composition)) + " cannot be extracted");
    }
  }
  std::vector<std::size_t> kept;
  EmbeddingSet out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool complete = std::all_of(mods.begin(), mods.end(), [&](Modality m) { return data.samples[i]->has(m); });
    if (complete) {
      kept.push_back(i);
    } else {
      ++out.skipped;
    }
  }
  if (out.skipped) spdlog::warn("extract_embeddings: skipped {} samples lacking a required modality", out.skipped);

  int width = 0;
  for (auto m : mods) width += model.encoder(m).config.embed_dim;
  out.features.resize(static_cast<Eigen::Index>(kept.size()), width);
  int col = 0;
  for (auto m : mods) {
    const auto& enc = model.encoder(m);
    const int e = enc.config.embed_dim;
    for (std::size_t start = 0; start < kept.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(kept.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<const TimeSeriesWindow*> windows;
      for (std::size_t k = start; k < end; ++k) windows.push_back(&data.samples[kept[k]]->at(m));
      const Mat<float> z = encode_batch<float>(enc, pack_batch<float>(windows));
      out.features.block(static_cast<Eigen::Index>(start), col, z.rows(), e) = z.cast<double>();
    }
    col += e;
  }

  std::set<std::string> names;
  for (auto i : kept) {
    if (data.samples[i]->label) names.insert(*data.samples[i]->label);
  }
  out.class_names.assign(names.begin(), names.end());
  for (auto i : kept) {
    const auto& s = *data.samples[i];
    out.sample_index.push_back(i);
    out.subjects.push_back(s.subject_id);
    if (s.label) {
      out.labels.push_back(static_cast<int>(
          std::lower_bound(out.class_names.begin(), out.class_names.end(), *s.label) - out.class_names.begin()));
    }
    if (s.target) out.targets.push_back(*s.target);
  }
  return out;
}

Mat<double> LinearProbe::decision(const Mat<double>& x) const {
  Mat<double> out = standardize(x, mean, scale) * weight;
  out.rowwise() += bias.transpose();
  return out;
}

std::vector<int> LinearProbe::predict_class(const Mat<double>& x) const {
  const Mat<double> d = decision(x);
  std::vector<int> out(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) d.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<double> LinearProbe::predict_value(const Mat<double>& x) const {
  const Mat<double> d = decision(x);
  return std::vector<double>(d.data(), d.data() + d.rows());
}

LinearProbe fit_logistic(const Mat<double>& x, const std::vector<int>& labels, int n_classes, const ProbeConfig& cfg) {
  if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) {
    throw Error("fit_logistic: features and labels differ in length");
  }
  LinearProbe probe;
  probe.task_type = TaskType::classification;
  standardizer(x, probe.mean, probe.scale);
  const Mat<double> xs = standardize(x, probe.mean, probe.scale);
  std::vector<double> params(static_cast<std::size_t>((x.cols() + 1) * n_classes), 0.0);

  ceres::GradientProblem problem(new SoftmaxObjective(xs, labels, n_classes, cfg.logistic_l2));
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = cfg.max_iterations;
  options.function_tolerance = 1e-12;
  options.gradient_tolerance = 1e-9;
  options.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, params.data(), &summary);

  probe.weight = Eigen::Map<const Mat<double>>(params.data(), x.cols(), n_classes);
  probe.bias = Eigen::Map<const Vec<double>>(params.data() + x.cols() * n_classes, n_classes);
  return probe;
}

LinearProbe fit_ridge(const Mat<double>& x, const std::vector<double>& targets, double lambda) {
  if (static_cast<std::size_t>(x.rows()) != targets.size() || targets.empty()) {
    throw Error("fit_ridge: features and targets differ in length");
  }
  LinearProbe probe;
  probe.task_type = TaskType::regression;
  standardizer(x, probe.mean, probe.scale);
  const Mat<double> xs = standardize(x, probe.mean, probe.scale);
  const Eigen::Map<const Vec<double>> t(targets.data(), static_cast<Eigen::Index>(targets.size()));
  // Centered features make the intercept the target mean and leave it unpenalized.
  const double t_mean = t.mean();
  Mat<double> gram = xs.transpose() * xs;
  gram.diagonal().array() += lambda;
  const Vec<double> w = gram.ldlt().solve(xs.transpose() * (t.array() - t_mean).matrix());
  probe.weight = w;
  probe.bias = Vec<double>::Constant(1, t_mean);
  return probe;
}

ProbeResult train_linear_probe(const EmbeddingSet& data, const ProbeConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(data.features.rows());
  const bool classify = cfg.task_type == TaskType::classification;
  if (n == 0) throw Error("train_linear_probe: no embeddings");
  if (data.subjects.size() != n) throw Error("train_linear_probe: subject list does not match the embeddings");
  if (classify) {
    if (data.labels.size() != n) throw Error("train_linear_probe: every sample needs a class label");
    if (std::set<int>(data.labels.begin(), data.labels.end()).size() < 2) {
      throw Error("train_linear_probe: classification needs at least two classes");
    }
  } else {
    if (data.targets.size() != n) throw Error("train_linear_probe: every sample needs a regression target");
    if (std::set<double>(data.targets.begin(), data.targets.end()).size() < 2) {
      throw Error("train_linear_probe: regression needs at least two distinct targets");
    }
  }
  const int n_classes = classify ? static_cast<int>(std::max<std::size_t>(
                                       data.class_names.size(),
                                       static_cast<std::size_t>(*std::max_element(data.labels.begin(), data.labels.end()) + 1)))
                                 : 1;

  std::vector<std::string> subjects(data.subjects.begin(), data.subjects.end());
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 2) throw Error("train_linear_probe: subject-wise folds need at least two subjects");
  int folds = cfg.folds;
  if (static_cast<int>(subjects.size()) < folds) {
    spdlog::warn("train_linear_probe: {} subjects for {} folds; using {} folds", subjects.size(), folds,
                 subjects.size());
    folds = static_cast<int>(subjects.size());
  }
  const auto fold_of = subject_folds(subjects, folds, cfg.fold_seed);

  ProbeResult result;
  auto& report = result.report;
  report.task_type = cfg.task_type;
  report.composition = cfg.composition;
  report.n_samples = n;
  report.n_skipped_samples = data.skipped;
  report.n_features = static_cast<std::size_t>(data.features.cols());
  report.class_names = data.class_names;

  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < n; ++i) (fold_of.at(data.subjects[i]) == f ? te : tr).push_back(i);
    if (te.empty() || tr.empty()) {
      report.skipped_folds.push_back("fold " + std::to_string(f) + ": empty split");
      continue;
    }
    FoldMetrics fm;
    fm.fold = f;
    fm.n_train = tr.size();
    fm.n_test = te.size();
    const Mat<double> xtr = rows_of(data.features, tr);
    const Mat<double> xte = rows_of(data.features, te);
    if (classify) {
      const auto ytr = pick(data.labels, tr);
      const auto yte = pick(data.labels, te);
      if (std::set<int>(ytr.begin(), ytr.end()).size() < 2) {
        report.skipped_folds.push_back("fold " + std::to_string(f) + ": single-class training split");
        spdlog::warn("train_linear_probe: fold {} skipped (single-class training split)", f);
        continue;
      }
      const auto probe = fit_logistic(xtr, ytr, n_classes, cfg);
      const auto pte = probe.predict_class(xte);
      fm.macro_f1 = macro_f1(pte, yte);
      fm.accuracy = accuracy(pte, yte);
      fm.train_macro_f1 = macro_f1(probe.predict_class(xtr), ytr);
      std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
      for (int y : ytr) ++counts[static_cast<std::size_t>(y)];
      const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      fm.majority_accuracy = accuracy(std::vector<int>(yte.size(), majority), yte);
    } else {
      const auto ytr = pick(data.targets, tr);
      const auto yte = pick(data.targets, te);
      if (std::set<double>(ytr.begin(), ytr.end()).size() < 2 || std::set<double>(yte.begin(), yte.end()).size() < 2) {
        report.skipped_folds.push_back("fold " + std::to_string(f) + ": constant targets");
        spdlog::warn("train_linear_probe: fold {} skipped (constant targets)", f);
        continue;
      }
      const auto probe = fit_ridge(xtr, ytr, cfg.ridge_lambda);
      const auto pte = probe.predict_value(xte);
      fm.mae = mae(pte, yte);
      fm.r2 = r2(pte, yte);
      fm.train_r2 = r2(probe.predict_value(xtr), ytr);
      double mean_tr = 0.0;
      for (double y : ytr) mean_tr += y;
      mean_tr /= static_cast<double>(ytr.size());
      fm.mean_predictor_mae = mae(std::vector<double>(yte.size(), mean_tr), yte);
    }
    report.folds.push_back(fm);
  }
  if (report.folds.empty()) throw Error("train_linear_probe: every fold was skipped");

  auto collect = [&](double FoldMetrics::*field) {
    std::vector<double> v;
    for (const auto& fm : report.folds) v.push_back(fm.*field);
    return mean_std(v);
  };
  if (classify) {
    report.macro_f1 = collect(&FoldMetrics::macro_f1);
    report.accuracy = collect(&FoldMetrics::accuracy);
    report.train_macro_f1 = collect(&FoldMetrics::train_macro_f1);
    report.majority_accuracy = collect(&FoldMetrics::majority_accuracy);
    report.beats_majority = report.accuracy.mean > report.majority_accuracy.mean;
    result.probe = fit_logistic(data.features, data.labels, n_classes, cfg);
  } else {
    report.mae = collect(&FoldMetrics::mae);
    report.r2 = collect(&FoldMetrics::r2);
    report.train_r2 = collect(&FoldMetrics::train_r2);
    report.mean_predictor_mae = collect(&FoldMetrics::mean_predictor_mae);
    report.beats_majority = report.mae.mean < report.mean_predictor_mae.mean;
    result.probe = fit_ridge(data.features, data.targets, cfg.ridge_lambda);
  }
  return result;
}

void to_json(json& j, const ProbeReport& r) {
  j = json{{"task_type", to_string(r.task_type)},
           {"composition", to_string(r.composition)},
           {"n_samples", r.n_samples},
           {"n_skipped_samples", r.n_skipped_samples},
           {"n_features", r.n_features},
           {"skipped_folds", r.skipped_folds}};
  json folds = json::array();
  for (const auto& f : r.folds) {
    json fj{{"fold", f.fold}, {"n_train", f.n_train}, {"n_test", f.n_test}};
    if (r.task_type == TaskType::classification) {
      fj.update({{"macro_f1", f.macro_f1},
                 {"accuracy", f.accuracy},
                 {"train_macro_f1", f.train_macro_f1},
                 {"majority_accuracy", f.majority_accuracy}});
    } else {
      fj.update({{"mae", f.mae}, {"r2", f.r2}, {"train_r2", f.train_r2}, {"mean_predictor_mae", f.mean_predictor_mae}});
    }
    folds.push_back(fj);
  }
  j["folds"] = folds;
  if (r.task_type == TaskType::classification) {
    j["class_names"] = r.class_names;
    j["macro_f1"] = to_json_ms(r.macro_f1);
    j["accuracy"] = to_json_ms(r.accuracy);
    j["train_macro_f1"] = to_json_ms(r.train_macro_f1);
    j["majority_baseline_accuracy"] = to_json_ms(r.majority_accuracy);
    j["beats_majority_baseline"] = r.beats_majority;
  } else {
    j["mae"] = to_json_ms(r.mae);
    j["r2"] = to_json_ms(r.r2);
    j["train_r2"] = to_json_ms(r.train_r2);
    j["mean_predictor_mae"] = to_json_ms(r.mean_predictor_mae);
    j["beats_mean_predictor"] = r.beats_majority;
  }
}

std::vector<double> per_class_f1(const std::vector<int>& preds, const std::vector<int>& labels, int n_classes) {
  check_lengths(preds.size(), labels.size(), "per_class_f1");
  std::vector<double> tp(static_cast<std::size_t>(n_classes)), fp(tp.size()), fn(tp.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n_classes || labels[i] < 0 || labels[i] >= n_classes) {
      throw Error("per_class_f1: class id out of range");
    }
    if (preds[i] == labels[i]) {
      tp[static_cast<std::size_t>(preds[i])] += 1;
    } else {
      fp[static_cast<std::size_t>(preds[i])] += 1;
      fn[static_cast<std::size_t>(labels[i])] += 1;
    }
  }
  std::vector<double> f1(tp.size());
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const double support = tp[c] + fn[c];
    f1[c] = support > 0 ? 2 * tp[c] / (2 * tp[c] + fp[c] + fn[c]) : std::nan("");
  }
  return f1;
}

double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels, std::vector<int>* excluded) {
  check_lengths(preds.size(), labels.size(), "macro_f1");
  // Dense re-indexing keeps arbitrary (even negative) class ids working.
  std::map<int, int> dense;
  for (int v : labels) dense.emplace(v, 0);
  for (int v : preds) dense.emplace(v, 0);
  int k = 0;
  for (auto& [id, slot] : dense) slot = k++;
  std::vector<int> p, l;
  for (int v : preds) p.push_back(dense[v]);
  for (int v : labels) l.push_back(dense[v]);
  const auto f1 = per_class_f1(p, l, k);
  double sum = 0.0;
  int used = 0;
  for (const auto& [id, slot] : dense) {
    if (std::isnan(f1[static_cast<std::size_t>(slot)])) {
      spdlog::warn("macro_f1: class {} has no support and is excluded", id);
      if (excluded) excluded->push_back(id);
      continue;
    }
    sum += f1[static_cast<std::size_t>(slot)];
    ++used;
  }
  return sum / used;
}

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  check_lengths(preds.size(), labels.size(), "accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double mae(const std::vector<double>& preds, const std::vector<double>& targets) {
  check_lengths(preds.size(), targets.size(), "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

double r2(const std::vector<double>& preds, const std::vector<double>& targets) {
  check_lengths(preds.size(), targets.size(), "r2");
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= static_cast<double>(targets.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ss_res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw Error("r2: targets are constant");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace protomm
