// SPDX-License-Identifier: Apache-2.0
#include "protomm/config.hpp"

#include <fstream>
#include <functional>
#include <set>

namespace protomm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPaper = "paper";
constexpr const char* kDefault = "default";

// Walks one JSON object, recording which keys were consumed and where each value came from.
class Reader {
 public:
  Reader(const json& j, std::string path, std::map<std::string, std::string>& origins)
      : j_(j), path_(std::move(path)), origins_(origins) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void field(const std::string& key, T& out, const char* origin,
             const std::function<T(const json&)>& convert = [](const json& v) { return v.get<T>(); }) {
    seen_.insert(key);
    const auto kp = key_path(key);
    if (!j_.contains(key)) {
      origins_[kp] = origin;
      return;
    }
    try {
      out = convert(j_.at(key));
    } catch (const ConfigError&) {
      throw;
    } catch (const json::exception& e) {
      throw ConfigError(kp, std::string("ill-typed value (") + e.what() + ")");
    } catch (const Error& e) {
      throw ConfigError(kp, e.what());
    }
    origins_[kp] = "config";
  }

  /// Runs `body` on the nested object `key` (an empty object when absent).
  void section(const std::string& key, const std::function<void(Reader&)>& body) {
    seen_.insert(key);
    static const json empty = json::object();
    Reader sub(j_.contains(key) ? j_.at(key) : empty, key_path(key), origins_);
    body(sub);
    sub.finish();
  }

  void ignore(const std::string& key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(key_path(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::map<std::string, std::string>& origins_;
  std::set<std::string> seen_;
};

std::vector<Modality> parse_modalities(const json& v) {
  std::vector<Modality> out;
  for (const auto& m : v) out.push_back(modality_from_string(m.get<std::string>()));
  return out;
}

std::vector<std::string> modality_names(const std::vector<Modality>& ms) {
  std::vector<std::string> out;
  for (auto m : ms) out.emplace_back(to_string(m));
  return out;
}

json encoder_section(const EncoderConfig& c) {
  json j = c;
  j.erase("in_channels");
  return j;
}

json prototypes_section(int count, const AssignmentConfig& a, int freeze) {
  return {{"count", count},
          {"temperature", a.temperature},
          {"sinkhorn_epsilon", a.sinkhorn_epsilon},
          {"sinkhorn_iters", a.sinkhorn_iters},
          {"freeze_epochs", freeze}};
}

json training_section(const AdamConfig& o, int batch, int epochs, double budget, std::uint64_t seed) {
  json j = o;
  j.update({{"batch_size", batch}, {"max_epochs", epochs}, {"wall_clock_budget_hours", budget}, {"seed", seed}});
  return j;
}

}  // namespace

std::string_view to_string(DatasetKind d) {
  switch (d) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::wesad: return "wesad";
    case DatasetKind::dalia: return "dalia";
  }
  return "synthetic";
}

DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "synthetic") return DatasetKind::synthetic;
  if (s == "wesad") return DatasetKind::wesad;
  if (s == "dalia" || s == "ppg-dalia") return DatasetKind::dalia;
  throw Error("unknown dataset '" + std::string(s) + "' (expected synthetic, wesad or dalia)");
}

void to_json(json& j, const AdamConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps}};
}

void to_json(json& j, const LossConfig& c) {
  j = {{"objective", to_string(c.objective)},
       {"alpha", c.alpha},
       {"nt_xent_temperature", c.nt_xent_temperature},
       {"clip_temperature_init", c.clip_temperature_init}};
}

void to_json(json& j, const ViewSamplerConfig& c) {
  j = {{"num_views", c.num_views}, {"transforms", c.specs}};
}

void to_json(json& j, const SyntheticGenConfig& c) {
  j = {{"n_subjects", c.n_subjects},
       {"n_latent_states", c.n_latent_states},
       {"shared_fraction", c.shared_fraction},
       {"duration_s", c.duration_s},
       {"sample_rate_hz", c.sample_rate_hz},
       {"noise_sigma", c.noise_sigma},
       {"seed", c.seed},
       {"windows_per_subject", c.windows_per_subject},
       {"n_private_states", c.n_private_states},
       {"stay_probability", c.stay_probability}};
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"data", {{"modalities", modality_names(c.modalities)}}},
       {"augmentation", c.views},
       {"encoder", encoder_section(c.encoder)},
       {"prototypes", prototypes_section(c.prototype_count, c.assignment, c.freeze_prototypes_epochs)},
       {"loss", c.loss},
       {"training", training_section(c.optimizer, c.batch_size, c.max_epochs, c.wall_clock_budget_hours, c.seed)}};
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.optimizer = optimizer;
  t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.wall_clock_budget_hours = wall_clock_budget_hours;
  t.seed = seed;
  t.loss = loss;
  t.assignment = assignment;
  t.prototype_count = prototype_count;
  t.modalities = data.modalities;
  t.encoder = encoder;
  t.views = augmentation;
  t.freeze_prototypes_epochs = freeze_prototypes_epochs;
  return t;
}

void ExperimentConfig::validate() const {
  train_config().validate();
  if (!(data.val_fraction > 0.0 && data.val_fraction < 1.0)) {
    throw ConfigError("data.val_fraction", "must lie in (0, 1)");
  }
  data.synthetic.validate();
  evaluation.validate();
  interpret.validate();
  if (interpret.k > prototype_count) throw ConfigError("interpret.k", "exceeds prototypes.count");
}

ExperimentConfig default_config() { return parse_config(json::object()); }

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  auto& o = c.origins;
  Reader root(doc, "", o);
  root.ignore("_origins");

  root.section("data", [&](Reader& r) {
    r.field<DatasetKind>("dataset", c.data.dataset, kDefault,
                         [](const json& v) { return dataset_kind_from_string(v.get<std::string>()); });
    r.field("root", c.data.root, kDefault);
    r.field("manifest", c.data.manifest, kDefault);
    r.field("val_manifest", c.data.val_manifest, kDefault);
    r.field("val_fraction", c.data.val_fraction, kDefault);
    r.field<std::vector<Modality>>("modalities", c.data.modalities, kPaper, parse_modalities);
    r.field<Task>("task", c.data.task, kDefault, [](const json& v) { return task_from_string(v.get<std::string>()); });
    r.section("synthetic", [&](Reader& s) {
      auto& g = c.data.synthetic;
      s.field("n_subjects", g.n_subjects, kDefault);
      s.field("n_latent_states", g.n_latent_states, kDefault);
      s.field("shared_fraction", g.shared_fraction, kDefault);
      s.field("duration_s", g.duration_s, kDefault);
      s.field("sample_rate_hz", g.sample_rate_hz, kDefault);
      s.field("noise_sigma", g.noise_sigma, kDefault);
      s.field("seed", g.seed, kDefault);
      s.field("windows_per_subject", g.windows_per_subject, kDefault);
      s.field("n_private_states", g.n_private_states, kDefault);
      s.field("stay_probability", g.stay_probability, kDefault);
    });
  });

  root.section("augmentation", [&](Reader& r) {
    r.field("num_views", c.augmentation.num_views, kDefault);
    r.field<std::vector<AugmentationSpec>>("transforms", c.augmentation.specs, kPaper, [](const json& v) {
      std::vector<AugmentationSpec> specs;
      for (std::size_t i = 0; i < v.size(); ++i) {
        try {
          specs.push_back(v.at(i).get<AugmentationSpec>());
        } catch (const Error& e) {
          throw ConfigError("augmentation.transforms[" + std::to_string(i) + "]", e.what());
        }
      }
      return specs;
    });
  });

  root.section("encoder", [&](Reader& r) {
    auto& e = c.encoder;
    r.field("kernel_size", e.kernel_size, kPaper);
    r.field("stride", e.stride, kPaper);
    r.field("embed_dim", e.embed_dim, kPaper);
    r.field("block_layout", e.block_layout, kDefault);
    r.field("base_width", e.base_width, kDefault);
    r.field("expansion", e.expansion, kDefault);
    r.field("bn_momentum", e.bn_momentum, kDefault);
    r.field("bn_eps", e.bn_eps, kDefault);
  });

  root.section("prototypes", [&](Reader& r) {
    r.field("count", c.prototype_count, kDefault);
    r.field("temperature", c.assignment.temperature, kDefault);
    r.field("sinkhorn_epsilon", c.assignment.sinkhorn_epsilon, kDefault);
    r.field("sinkhorn_iters", c.assignment.sinkhorn_iters, kDefault);
    r.field("freeze_epochs", c.freeze_prototypes_epochs, kDefault);
  });

  root.section("loss", [&](Reader& r) {
    r.field<Objective>("objective", c.loss.objective, kPaper,
                       [](const json& v) { return objective_from_string(v.get<std::string>()); });
    r.field("alpha", c.loss.alpha, kPaper);
    r.field("nt_xent_temperature", c.loss.nt_xent_temperature, kPaper);
    r.field("clip_temperature_init", c.loss.clip_temperature_init, kPaper);
  });

  root.section("training", [&](Reader& r) {
    r.field("learning_rate", c.optimizer.learning_rate, kPaper);
    r.field("weight_decay", c.optimizer.weight_decay, kPaper);
    r.field("beta1", c.optimizer.beta1, kDefault);
    r.field("beta2", c.optimizer.beta2, kDefault);
    r.field("eps", c.optimizer.eps, kDefault);
    r.field("batch_size", c.batch_size, kPaper);
    r.field("max_epochs", c.max_epochs, kPaper);
    r.field("wall_clock_budget_hours", c.wall_clock_budget_hours, kPaper);
    r.field("seed", c.seed, kDefault);
  });

  root.section("evaluation", [&](Reader& r) {
    auto& e = c.evaluation;
    r.field<Composition>("composition", e.composition, kPaper,
                         [](const json& v) { return composition_from_string(v.get<std::string>()); });
    r.field<TaskType>("task_type", e.task_type, kDefault,
                      [](const json& v) { return task_type_from_string(v.get<std::string>()); });
    r.field("folds", e.folds, kDefault);
    r.field("fold_seed", e.fold_seed, kDefault);
    r.field("logistic_l2", e.logistic_l2, kDefault);
    r.field("max_iterations", e.max_iterations, kDefault);
    r.field("ridge_lambda", e.ridge_lambda, kDefault);
  });

  root.section("interpret", [&](Reader& r) {
    r.field("k", c.interpret.k, kPaper);
    r.field("top_k", c.interpret.top_k, kPaper);
    r.field("seed", c.interpret.seed, kDefault);
    r.field("per_modality", c.interpret.per_modality, kDefault);
  });

  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json data = {{"dataset", to_string(c.data.dataset)},
               {"root", c.data.root},
               {"manifest", c.data.manifest},
               {"val_manifest", c.data.val_manifest},
               {"val_fraction", c.data.val_fraction},
               {"modalities", modality_names(c.data.modalities)},
               {"task", to_string(c.data.task)},
               {"synthetic", c.data.synthetic}};
  json j = json(c.train_config());
  j["data"] = data;
  j["evaluation"] = {{"composition", to_string(c.evaluation.composition)},
                     {"task_type", to_string(c.evaluation.task_type)},
                     {"folds", c.evaluation.folds},
                     {"fold_seed", c.evaluation.fold_seed},
                     {"logistic_l2", c.evaluation.logistic_l2},
                     {"max_iterations", c.evaluation.max_iterations},
                     {"ridge_lambda", c.evaluation.ridge_lambda}};
  j["interpret"] = {{"k", c.interpret.k},
                    {"top_k", c.interpret.top_k},
                    {"seed", c.interpret.seed},
                    {"per_modality", c.interpret.per_modality}};
  j["_origins"] = c.origins;
  return j;
}

}  // namespace protomm
