// SPDX-License-Identifier: Apache-2.0
#include "protomm/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace protomm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double wcss(const Mat<double>& points, const Mat<double>& centers, const std::vector<int>& assignment) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    s += (points.row(i) - centers.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return s;
}

// Nearest center per point; returns true when any assignment changed.
bool assign(const Mat<double>& points, const Mat<double>& centers, std::vector<int>& assignment) {
  bool changed = false;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    if (assignment[static_cast<std::size_t>(i)] != best) {
      assignment[static_cast<std::size_t>(i)] = best;
      changed = true;
    }
  }
  return changed;
}

Mat<double> kmeanspp(const Mat<double>& points, int k, Rng& rng) {
  const auto n = points.rows();
  Mat<double> centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  Vec<double> d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
      while (d2[chosen] <= 0.0 && chosen > 0) --chosen;
    } else {
      chosen = first(rng);
    }
    centers.row(c) = points.row(chosen);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

// Symmetrized affinities with per-point bandwidths found by bisection on the perplexity.
Mat<double> tsne_affinities(const Mat<double>& points, double perplexity) {
  const auto n = points.rows();
  Mat<double> d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) d2.row(i) = (points.rowwise() - points.row(i)).rowwise().squaredNorm().transpose();
  const double target = std::log(perplexity);
  Mat<double> p = Mat<double>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), beta = 1.0;
    for (int it = 0; it < 200; ++it) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double v = std::exp(-beta * d2(i, j));
        p(i, j) = v;
        sum += v;
        weighted += v * d2(i, j);
      }
      if (sum <= 0.0) {
        // Bandwidth too narrow for any neighbor to register.
        hi = beta;
        beta = (lo + hi) / 2.0;
        continue;
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      p.row(i) /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-6) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (lo + hi) / 2.0;
      } else {
        hi = beta;
        beta = (lo + hi) / 2.0;
      }
    }
    p(i, i) = 0.0;
  }
  Mat<double> sym = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  return sym.cwiseMax(1e-12);
}

}  // namespace

CentroidSet kmeans(const Mat<double>& points, int k, std::uint64_t seed, int max_iterations) {
  const auto n = points.rows();
  if (k < 1 || k > n) throw Error("kmeans: k must lie in [1, " + std::to_string(n) + "]");
  Rng rng = derive_rng(seed, {0x6b6d});
  Mat<double> centers = kmeanspp(points, k, rng);
  CentroidSet out;
  out.k = k;
  out.assignment.assign(static_cast<std::size_t>(n), -1);
  assign(points, centers, out.assignment);
  out.wcss_history.push_back(wcss(points, centers, out.assignment));

  for (int it = 0; it < max_iterations; ++it) {
    Mat<double> sums = Mat<double>::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(out.assignment[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(out.assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Move the empty centroid onto the point worst served by its current centroid.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto a = out.assignment[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] < 2) continue;
        const double d = (points.row(i) - centers.row(a)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      spdlog::info("kmeans: centroid {} lost all members; reseeded from point {}", c, far);
      --counts[static_cast<std::size_t>(out.assignment[static_cast<std::size_t>(far)])];
      out.assignment[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      centers.row(c) = points.row(far);
    }
    const bool changed = assign(points, centers, out.assignment);
    out.wcss_history.push_back(wcss(points, centers, out.assignment));
    out.iterations = it + 1;
    if (!changed) break;
  }

  // Final means for the settled assignment, then unit norm for cosine retrieval.
  out.members.assign(static_cast<std::size_t>(k), {});
  Mat<double> sums = Mat<double>::Zero(k, points.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = out.assignment[static_cast<std::size_t>(i)];
    out.members[static_cast<std::size_t>(a)].push_back(static_cast<int>(i));
    sums.row(a) += points.row(i);
  }
  out.centroids = sums;
  for (int c = 0; c < k; ++c) {
    const double norm = out.centroids.row(c).norm();
    if (norm > 0.0) out.centroids.row(c) /= norm;
  }
  return out;
}

CentroidSet cluster_prototypes(const PrototypeBank<float>& bank, int k, std::uint64_t seed) {
  if (k > bank.count()) throw Error("cluster_prototypes: k exceeds the prototype count");
  return kmeans(bank.matrix.transpose().cast<double>(), k, seed);
}

std::vector<Neighbor> nearest_segments(const Vec<double>& query, const Mat<double>& embeddings, int top_k) {
  if (top_k < 1) throw Error("nearest_segments: top_k must be positive");
  if (embeddings.cols() != query.size()) throw Error("nearest_segments: query and embeddings differ in dimension");
  const auto n = static_cast<std::size_t>(embeddings.rows());
  auto want = static_cast<std::size_t>(top_k);
  if (n < want) {
    spdlog::warn("nearest_segments: only {} embeddings for top_k = {}", n, top_k);
    want = n;
  }
  const double qn = query.norm();
  const Vec<double> sims = embeddings * query / (qn > 0.0 ? qn : 1.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = sims[static_cast<Eigen::Index>(a)];
                      const double sb = sims[static_cast<Eigen::Index>(b)];
                      return sa > sb || (sa == sb && a < b);
                    });
  std::vector<Neighbor> out;
  for (std::size_t r = 0; r < want; ++r) {
    out.push_back({order[r], std::clamp(sims[static_cast<Eigen::Index>(order[r])], -1.0, 1.0)});
  }
  return out;
}

Mat<double> tsne_2d(const Mat<double>& points, std::uint64_t seed, const TsneConfig& cfg) {
  const auto n = points.rows();
  if (n < 3) throw Error("tsne_2d: at least three points are required");
  const double perplexity = std::min(cfg.perplexity, (static_cast<double>(n) - 1.0) / 3.0);
  const Mat<double> p = tsne_affinities(points, perplexity);

  Rng rng = derive_rng(seed, {0x75e});
  std::normal_distribution<double> init(0.0, 1e-4);
  Mat<double> y(n, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = init(rng);
  Mat<double> velocity = Mat<double>::Zero(n, 2);
  Mat<double> gains = Mat<double>::Ones(n, 2);

  for (int it = 0; it < cfg.iterations; ++it) {
    const double exaggeration = it < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    const double momentum = it < cfg.exaggeration_iters ? 0.5 : 0.8;
    Mat<double> num(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      num.row(i) = (1.0 / (1.0 + (y.rowwise() - y.row(i)).rowwise().squaredNorm().array())).transpose();
    }
    num.diagonal().setZero();
    const double z = num.sum();
    const Mat<double> q = (num / z).cwiseMax(1e-12);
    const Mat<double> w = ((exaggeration * p - q).array() * num.array()).matrix();
    Mat<double> grad(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      grad.row(i) = 4.0 * (w.row(i) * (y.rowwise() - y.row(i)) * -1.0);
    }
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      const bool same_sign = (grad.data()[i] > 0) == (velocity.data()[i] > 0);
      gains.data()[i] = std::max(0.01, same_sign ? gains.data()[i] * 0.8 : gains.data()[i] + 0.2);
    }
    velocity = momentum * velocity - cfg.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

Mat<double> project_2d(const PrototypeBank<float>& bank, std::uint64_t seed, const TsneConfig& cfg) {
  if (bank.count() < 3) throw Error("project_2d: at least three prototypes are required");
  return tsne_2d(bank.matrix.transpose().cast<double>(), seed, cfg);
}

void write_coords_csv(const fs::path& path, const Mat<double>& coords, const std::vector<int>& centroid_of) {
  if (static_cast<std::size_t>(coords.rows()) != centroid_of.size()) {
    throw Error("write_coords_csv: one centroid id per row is required");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(9);
  out << "prototype_index,x,y,centroid_id\n";
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    out << i << ',' << coords(i, 0) << ',' << coords(i, 1) << ',' << centroid_of[static_cast<std::size_t>(i)] << '\n';
  }
}

double label_consistency(const std::vector<std::vector<std::optional<std::string>>>& neighbor_labels) {
  double total = 0.0;
  int counted = 0;
  for (const auto& labels : neighbor_labels) {
    std::map<std::string, int> counts;
    int labelled = 0;
    for (const auto& l : labels) {
      if (!l) continue;
      ++counts[*l];
      ++labelled;
    }
    if (labelled == 0) continue;
    int top = 0;
    for (const auto& [name, c] : counts) top = std::max(top, c);
    total += static_cast<double>(top) / labelled;
    ++counted;
  }
  return counted ? total / counted : std::nan("");
}

void InterpretConfig::validate() const {
  if (k < 1) throw ConfigError("interpret.k", "must be positive");
  if (top_k < 1) throw ConfigError("interpret.top_k", "must be positive");
}

InterpretSummary run_interpret(const Model& model, const DatasetManifest& data, const InterpretConfig& cfg,
                               const fs::path& out_dir) {
  cfg.validate();
  if (!model.prototypes) throw Error("interpret: the checkpoint has no prototype bank");
  const auto& bank = *model.prototypes;
  if (cfg.k > bank.count()) throw ConfigError("interpret.k", "exceeds the prototype count");
  fs::create_directories(out_dir);

  InterpretSummary summary;
  summary.clusters = cluster_prototypes(bank, cfg.k, cfg.seed);
  summary.coords = project_2d(bank, cfg.seed);
  write_coords_csv(out_dir / "coords.csv", summary.coords, summary.clusters.assignment);

  struct Pool {
    std::string name;
    Mat<double> embeddings;
    std::vector<std::pair<std::size_t, Modality>> refs;
  };
  std::vector<Pool> pools;
  for (auto m : model.modalities) {
    Pool pool{std::string(to_string(m)), {}, {}};
    std::vector<const TimeSeriesWindow*> windows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data.samples[i]->has(m)) continue;
      windows.push_back(&data.samples[i]->at(m));
      pool.refs.emplace_back(i, m);
    }
    if (windows.empty()) continue;
    pool.embeddings.resize(static_cast<Eigen::Index>(windows.size()), model.embed_dim());
    constexpr std::size_t kBatch = 256;
    for (std::size_t s = 0; s < windows.size(); s += kBatch) {
      const std::size_t e = std::min(windows.size(), s + kBatch);
      const std::vector<const TimeSeriesWindow*> part(windows.begin() + static_cast<std::ptrdiff_t>(s),
                                                      windows.begin() + static_cast<std::ptrdiff_t>(e));
      pool.embeddings.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) =
          encode_batch<float>(model.encoder(m), pack_batch<float>(part)).cast<double>();
    }
    pools.push_back(std::move(pool));
  }
  if (!cfg.per_modality && pools.size() > 1) {
    Pool joint{"joint", {}, {}};
    Eigen::Index rows = 0;
    for (const auto& p : pools) rows += p.embeddings.rows();
    joint.embeddings.resize(rows, model.embed_dim());
    Eigen::Index at = 0;
    for (const auto& p : pools) {
      joint.embeddings.middleRows(at, p.embeddings.rows()) = p.embeddings;
      at += p.embeddings.rows();
      joint.refs.insert(joint.refs.end(), p.refs.begin(), p.refs.end());
    }
    pools = {std::move(joint)};
  }

  json neighbors = json::object();
  json consistency = json::object();
  for (const auto& pool : pools) {
    json per_centroid = json::array();
    std::vector<std::vector<std::optional<std::string>>> labels_per_centroid;
    for (int c = 0; c < cfg.k; ++c) {
      const auto hits = nearest_segments(summary.clusters.centroids.row(c).transpose(), pool.embeddings, cfg.top_k);
      json list = json::array();
      std::vector<std::optional<std::string>> labels;
      for (const auto& h : hits) {
        const auto& [sample, modality] = pool.refs[h.index];
        const auto& s = *data.samples[sample];
        labels.push_back(s.label);
        list.push_back({{"sample", sample},
                        {"modality", to_string(modality)},
                        {"subject_id", s.subject_id},
                        {"window_start_s", s.window_start_s},
                        {"similarity", h.similarity},
                        {"label", s.label ? json(*s.label) : json(nullptr)}});
      }
      labels_per_centroid.push_back(std::move(labels));
      per_centroid.push_back({{"centroid", c},
                              {"prototypes", summary.clusters.members[static_cast<std::size_t>(c)]},
                              {"neighbors", list}});
    }
    neighbors[pool.name] = per_centroid;
    const double rate = label_consistency(labels_per_centroid);
    summary.consistency[pool.name] = rate;
    consistency[pool.name] = std::isnan(rate) ? json(nullptr) : json(rate);
  }
  std::ofstream(out_dir / "neighbors.json") << neighbors.dump(2) << '\n';
  std::ofstream(out_dir / "consistency.json")
      << json{{"k", cfg.k}, {"top_k", cfg.top_k}, {"per_modality", cfg.per_modality},
              {"label_consistency", consistency}}.dump(2)
      << '\n';
  return summary;
}

}  // namespace protomm
