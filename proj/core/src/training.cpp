// SPDX-License-Identifier: Apache-2.0
#include "protomm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

namespace protomm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream ids for derive_rng.
constexpr std::uint64_t kEncoderStream = 1;
constexpr std::uint64_t kPrototypeStream = 2;
constexpr std::uint64_t kHeadStream = 3;
constexpr std::uint64_t kShuffleStream = 4;
constexpr std::uint64_t kTrainViewStream = 5;
constexpr std::uint64_t kValViewStream = 6;
constexpr std::uint64_t kReseedStream = 7;

std::uint64_t modality_id(Modality m) { return static_cast<std::uint64_t>(m); }

// views[modality position][view][sample in batch]
using BatchViews = std::vector<std::vector<std::vector<TimeSeriesWindow>>>;

BatchViews draw_views(const DatasetManifest& data, const std::vector<std::size_t>& idx, const TrainConfig& cfg,
                      std::uint64_t stream, std::uint64_t epoch) {
  const auto n_mod = cfg.modalities.size();
  const auto n_views = static_cast<std::size_t>(cfg.views.num_views);
  BatchViews out(n_mod, std::vector<std::vector<TimeSeriesWindow>>(n_views, std::vector<TimeSeriesWindow>(idx.size())));
  const auto n = static_cast<std::ptrdiff_t>(idx.size() * n_mod);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t job = 0; job < n; ++job) {
    const auto i = static_cast<std::size_t>(job) / n_mod;
    const auto mi = static_cast<std::size_t>(job) % n_mod;
    const Modality m = cfg.modalities[mi];
    Rng rng = derive_rng(cfg.seed, {stream, epoch, idx[i], modality_id(m)});
    const auto specs = cfg.views.applicable(m);
    const auto& window = data.samples[idx[i]]->at(m);
    for (std::size_t a = 0; a < n_views; ++a) {
      const auto* spec = specs.at(draw_spec_index(cfg.views, m, rng));
      out[mi][a][i] = apply(*spec, window, rng);
    }
  }
  return out;
}

InputBatch<float> pack(const std::vector<TimeSeriesWindow>& windows) {
  std::vector<const TimeSeriesWindow*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return pack_batch<float>(ptrs);
}

struct StepGrads {
  std::vector<ParamGrads<float>> encoders;  // by modality position
  Mat<float> prototypes;
  std::vector<Mat<float>> head_weights;
  std::vector<Vec<float>> head_biases;
  float log_temperature = 0.0f;
};

StepGrads zero_step_grads(const Model& model, const TrainConfig& cfg) {
  StepGrads g;
  for (auto m : cfg.modalities) {
    g.encoders.push_back(zero_grads(model.encoder(m)));
    if (!model.heads.empty()) {
      const auto& h = model.heads.at(m);
      g.head_weights.push_back(Mat<float>::Zero(h.weight.rows(), h.weight.cols()));
      g.head_biases.push_back(Vec<float>::Zero(h.bias.size()));
    }
  }
  if (model.prototypes) g.prototypes = Mat<float>::Zero(model.prototypes->dim(), model.prototypes->count());
  return g;
}

// Evaluates the configured objective on one batch of views. With `train` set,
// encoders run in training mode and `grads` receives the full backward pass.
double run_objective(Model& model, const BatchViews& views, const TrainConfig& cfg, bool train, StepGrads* grads) {
  const auto n_mod = cfg.modalities.size();
  const int n_views = cfg.views.num_views;
  const bool contrastive = cfg.loss.objective != Objective::protomm;
  // CLIP consumes only the first view of each modality.
  const int used_views = cfg.loss.objective == Objective::clip ? 1 : n_views;

  std::vector<std::vector<Mat<float>>> z(n_mod);
  std::vector<std::vector<EncoderCache<float>>> caches(n_mod);
  for (std::size_t mi = 0; mi < n_mod; ++mi) {
    auto& enc = model.encoders.at(cfg.modalities[mi]);
    caches[mi].resize(static_cast<std::size_t>(used_views));
    for (int a = 0; a < used_views; ++a) {
      const auto batch = pack(views[mi][static_cast<std::size_t>(a)]);
      z[mi].push_back(train ? encoder_forward<float>(enc, batch, Mode::train, &caches[mi][static_cast<std::size_t>(a)])
                            : encode_batch<float>(enc, batch));
    }
  }

  std::vector<std::vector<Mat<float>>> dz(n_mod);
  double loss = 0.0;
  if (!contrastive) {
    const auto& bank = *model.prototypes;
    ViewBundle<float> bundle;
    bundle.modalities = static_cast<int>(n_mod);
    bundle.views = n_views;
    for (std::size_t mi = 0; mi < n_mod; ++mi) {
      for (int a = 0; a < n_views; ++a) {
        const Mat<float> s = project(z[mi][static_cast<std::size_t>(a)], bank);
        bundle.probs.push_back(soft_probs(s, cfg.assignment.temperature));
        bundle.targets.push_back(sinkhorn_targets(s, cfg.assignment));
      }
    }
    loss = mpp_loss(bundle, cfg.loss.alpha);
    if (grads) {
      const auto du = mpp_loss_grad(bundle, cfg.loss.alpha);
      for (std::size_t mi = 0; mi < n_mod; ++mi) {
        for (int a = 0; a < n_views; ++a) {
          const auto k = mi * static_cast<std::size_t>(n_views) + static_cast<std::size_t>(a);
          const Mat<float> ds = soft_probs_backward(bundle.probs[k], du[k], cfg.assignment.temperature);
          dz[mi].push_back(ds * bank.matrix.transpose());
          grads->prototypes.noalias() += z[mi][static_cast<std::size_t>(a)].transpose() * ds;
        }
      }
    }
  } else {
    std::vector<std::array<Mat<float>, 2>> h(n_mod);
    std::vector<std::array<HeadCache<float>, 2>> hcache(n_mod);
    for (std::size_t mi = 0; mi < n_mod; ++mi) {
      const auto& head = model.heads.at(cfg.modalities[mi]);
      for (int a = 0; a < used_views; ++a) {
        h[mi][static_cast<std::size_t>(a)] =
            head_forward(head, z[mi][static_cast<std::size_t>(a)], &hcache[mi][static_cast<std::size_t>(a)]);
      }
      if (used_views == 1) h[mi][1] = h[mi][0];
    }
    const bool within = cfg.loss.objective != Objective::clip;
    const bool between = cfg.loss.objective != Objective::simclr;
    const auto r = slip_loss(h, cfg.loss.nt_xent_temperature, model.clip_log_temperature, within, between);
    loss = r.value;
    if (grads) {
      for (std::size_t mi = 0; mi < n_mod; ++mi) {
        const auto& head = model.heads.at(cfg.modalities[mi]);
        for (int a = 0; a < used_views; ++a) {
          dz[mi].push_back(head_backward(head, hcache[mi][static_cast<std::size_t>(a)],
                                         r.grads[mi][static_cast<std::size_t>(a)], grads->head_weights[mi],
                                         grads->head_biases[mi]));
        }
      }
      grads->log_temperature += r.grad_log_temperature;
    }
  }

  if (grads) {
    for (std::size_t mi = 0; mi < n_mod; ++mi) {
      const auto& enc = model.encoders.at(cfg.modalities[mi]);
      for (int a = 0; a < used_views; ++a) {
        encoder_backward(enc, caches[mi][static_cast<std::size_t>(a)], dz[mi][static_cast<std::size_t>(a)],
                         grads->encoders[mi]);
      }
    }
  }
  return loss;
}

void check_manifest(const DatasetManifest& data, const TrainConfig& cfg, const char* which) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (auto m : cfg.modalities) {
      if (!data.samples[i]->has(m)) {
        throw Error(std::string(which) + " sample " + std::to_string(i) + " lacks modality " +
                    std::string(to_string(m)));
      }
      const auto& w = data.samples[i]->at(m);
      const auto& first = data.samples[0]->at(m);
      if (w.length() != first.length() || w.channels() != channels_for(m)) {
        throw Error(std::string(which) + " sample " + std::to_string(i) + " has a " + std::string(to_string(m)) +
                    " window of shape " + std::to_string(w.length()) + "x" + std::to_string(w.channels()) +
                    "; all windows of a modality must share one shape");
      }
    }
  }
}

std::string epoch_dir_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d", epoch);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("training.learning_rate", "must be positive");
  if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("training.weight_decay", "must be non-negative");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("training.beta1", "must lie in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("training.beta2", "must lie in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw ConfigError("training.eps", "must be positive");
  if (batch_size < 2) throw ConfigError("training.batch_size", "must be at least 2");
  if (max_epochs < 1) throw ConfigError("training.max_epochs", "must be at least 1");
  if (!(wall_clock_budget_hours > 0.0)) throw ConfigError("training.wall_clock_budget_hours", "must be positive");
  if (prototype_count < 1) throw ConfigError("prototypes.count", "must be positive");
  if (freeze_prototypes_epochs < 0) throw ConfigError("prototypes.freeze_epochs", "must be non-negative");
  loss.validate();
  assignment.validate();
  views.validate();
  encoder.validate();
  if (modalities.empty()) throw ConfigError("data.modalities", "at least one modality is required");
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (modalities[i] == modalities[j]) throw ConfigError("data.modalities", "modalities must be distinct");
    }
  }
  const bool single = modalities.size() == 1;
  if (loss.objective == Objective::protomm && single && loss.alpha != 1.0) {
    throw ConfigError("loss.alpha", "a single-modality run needs alpha = 1 (no cross-modal terms exist)");
  }
  if ((loss.objective == Objective::clip || loss.objective == Objective::slip) && modalities.size() != 2) {
    throw ConfigError("loss.objective", std::string(to_string(loss.objective)) + " needs exactly two modalities");
  }
  if (loss.objective != Objective::protomm && views.num_views != 2) {
    throw ConfigError("augmentation.num_views", "contrastive objectives use exactly two views");
  }
}

NonFiniteLoss::NonFiniteLoss(int epoch, int batch, double value)
    : Error("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) + ", batch " +
            std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

Model init_model(const TrainConfig& cfg) {
  cfg.validate();
  Model model;
  model.modalities = cfg.modalities;
  for (auto m : cfg.modalities) {
    EncoderConfig ec = cfg.encoder;
    ec.in_channels = channels_for(m);
    const std::uint64_t seed = derive_rng(cfg.seed, {kEncoderStream, modality_id(m)})();
    model.encoders.emplace(m, init_encoder<float>(ec, seed));
    if (cfg.loss.objective != Objective::protomm) {
      const std::uint64_t head_seed = derive_rng(cfg.seed, {kHeadStream, modality_id(m)})();
      model.heads.emplace(m, ProjectionHead<float>::init(ec.embed_dim, head_seed));
    }
  }
  if (cfg.loss.objective == Objective::protomm) {
    const std::uint64_t seed = derive_rng(cfg.seed, {kPrototypeStream})();
    model.prototypes = init_prototypes<float>(cfg.encoder.embed_dim, cfg.prototype_count, seed);
  } else {
    model.clip_log_temperature = static_cast<float>(std::log(cfg.loss.clip_temperature_init));
  }
  return model;
}

double validation_loss(const Model& model, const DatasetManifest& data, const TrainConfig& cfg) {
  if (data.size() < 2) throw Error("validation set must hold at least two samples");
  check_manifest(data, cfg, "validation");
  // encode_batch never writes to the encoder; run_objective is shared with training.
  Model& view = const_cast<Model&>(model);
  double total = 0.0;
  std::size_t seen = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < data.size();) {
    std::size_t end = std::min(data.size(), start + bs);
    // a lone trailing sample joins this batch; contrastive losses need B >= 2
    if (data.size() - end == 1) ++end;
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto views = draw_views(data, idx, cfg, kValViewStream, 0);
    total += run_objective(view, views, cfg, false, nullptr) * static_cast<double>(idx.size());
    seen += idx.size();
    start = end;
  }
  return total / static_cast<double>(seen);
}

PretrainResult pretrain(const DatasetManifest& train, const DatasetManifest& val, const TrainConfig& cfg,
                        const PretrainOptions& options) {
  cfg.validate();
  if (val.size() == 0) throw Error("pretrain: the validation set is empty");
  if (train.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw Error("pretrain: " + std::to_string(train.size()) + " training samples do not fill one batch of " +
                std::to_string(cfg.batch_size));
  }
  check_manifest(train, cfg, "training");
  check_manifest(val, cfg, "validation");

  json resolved = options.resolved_config;
  if (resolved.is_null()) resolved = cfg;
  PretrainResult result;
  result.config_fingerprint = fingerprint(json(cfg));

  const fs::path& run_dir = options.run_dir;
  std::ofstream metrics_log;
  if (!run_dir.empty()) {
    fs::create_directories(run_dir / "checkpoints");
    std::ofstream(run_dir / "config.json") << resolved.dump(2) << '\n';
    metrics_log.open(run_dir / "metrics.jsonl");
    if (!metrics_log) throw Error("cannot write metrics log into '" + run_dir.string() + "'");
  }

  Model model = init_model(cfg);
  Adam<float> enc_opt(cfg.optimizer);
  Adam<float> proto_opt(cfg.optimizer);
  Adam<float> head_opt(cfg.optimizer);

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = train.size() / bs;
  const auto t0 = std::chrono::steady_clock::now();
  const double budget_s = cfg.wall_clock_budget_hours * 3600.0;
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  bool out_of_time = false;
  std::optional<double> best_val;
  long global_step = 0;

  for (int epoch = 0; epoch < cfg.max_epochs && !out_of_time; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = derive_rng(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const bool prototypes_frozen = epoch < cfg.freeze_prototypes_epochs;

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b * bs),
                                         order.begin() + static_cast<std::ptrdiff_t>((b + 1) * bs));
      const auto views = draw_views(train, idx, cfg, kTrainViewStream, static_cast<std::uint64_t>(epoch));
      StepGrads grads = zero_step_grads(model, cfg);
      const double loss = run_objective(model, views, cfg, true, &grads);
      if (!std::isfinite(loss)) throw NonFiniteLoss(epoch, static_cast<int>(b), loss);

      std::vector<AdamSlot<float>> enc_slots;
      for (std::size_t mi = 0; mi < cfg.modalities.size(); ++mi) {
        auto& enc = model.encoders.at(cfg.modalities[mi]);
        for (std::size_t w = 0; w < enc.weights.size(); ++w) {
          enc_slots.push_back(adam_slot(enc.weights[w].data, grads.encoders[mi][w]));
        }
      }
      enc_opt.step(enc_slots);
      if (model.prototypes) {
        if (!prototypes_frozen) proto_opt.step({adam_slot(model.prototypes->matrix, grads.prototypes)});
        renormalize_prototypes(*model.prototypes,
                               derive_rng(cfg.seed, {kReseedStream, static_cast<std::uint64_t>(global_step)})());
      } else {
        std::vector<AdamSlot<float>> head_slots;
        for (std::size_t mi = 0; mi < cfg.modalities.size(); ++mi) {
          auto& head = model.heads.at(cfg.modalities[mi]);
          head_slots.push_back(adam_slot(head.weight, grads.head_weights[mi]));
          head_slots.push_back(adam_slot(head.bias, grads.head_biases[mi]));
        }
        if (cfg.loss.objective != Objective::simclr) {
          head_slots.push_back({&model.clip_log_temperature, &grads.log_temperature, 1});
        }
        head_opt.step(head_slots);
      }

      result.step_losses.push_back(loss);
      if (options.observer) options.observer(epoch, static_cast<int>(b), loss);
      epoch_loss += loss;
      ++steps;
      ++global_step;
      if (elapsed() > budget_s) {
        spdlog::warn("wall-clock budget of {} h reached during epoch {}", cfg.wall_clock_budget_hours, epoch);
        out_of_time = true;
        break;
      }
    }

    CheckpointRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(steps);
    rec.val_loss = validation_loss(model, val, cfg);
    rec.config_fingerprint = result.config_fingerprint;
    if (!std::isfinite(rec.val_loss)) throw NonFiniteLoss(epoch, -1, rec.val_loss);
    const double wall = elapsed();
    spdlog::info("epoch {}: train_loss {:.5f} val_loss {:.5f} ({:.1f} s)", epoch, rec.train_loss, rec.val_loss,
                 wall);

    if (!run_dir.empty()) {
      rec.archive = run_dir / "checkpoints" / epoch_dir_name(epoch);
      CheckpointMeta meta;
      meta.config = resolved;
      meta.metrics = {{"epoch", epoch},
                      {"train_loss", rec.train_loss},
                      {"val_loss", rec.val_loss},
                      {"wall_s", wall},
                      {"config_fingerprint", rec.config_fingerprint}};
      meta.assignment = cfg.assignment;
      save_checkpoint(model, meta, rec.archive);
      metrics_log << json{{"epoch", epoch}, {"train_loss", rec.train_loss}, {"val_loss", rec.val_loss},
                          {"wall_s", wall}}.dump()
                  << '\n';
      metrics_log.flush();
    }
    if (!best_val || rec.val_loss < *best_val) {
      best_val = rec.val_loss;
      result.best = model;
    }
    result.records.push_back(rec);
  }
  return result;
}

const CheckpointRecord& select_best(const std::vector<CheckpointRecord>& records) {
  if (records.empty()) throw Error("select_best: no checkpoint records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].val_loss < records[best].val_loss ||
        (records[i].val_loss == records[best].val_loss && records[i].epoch < records[best].epoch)) {
      best = i;
    }
  }
  return records[best];
}

}  // namespace protomm
