// SPDX-License-Identifier: Apache-2.0
// protomm: ingest, synth, pretrain, probe, interpret and selftest from one entrypoint.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "protomm/acceptance.hpp"
#include "protomm/config.hpp"
#include "protomm/dataset_io.hpp"
#include "protomm/evaluation.hpp"
#include "protomm/interpret.hpp"
#include "protomm/logging.hpp"
#include "protomm/synthetic.hpp"
#include "protomm/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace protomm;

namespace {

constexpr const char* kDataRootEnv = "PROTOMM_DATA_ROOT";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string log_level = "info";
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void require_exists(const fs::path& p, const std::string& what) {
  if (p.empty()) throw Error(what + " is required");
  if (!fs::exists(p)) throw Error(what + " '" + p.string() + "' does not exist");
}

fs::path default_data_root() {
  const char* env = std::getenv(kDataRootEnv);
  return env ? fs::path(env) : fs::path();
}

/// Config file (or an empty document) with command-line overrides written into
/// their sections, so every value passes the same schema validation.
class ConfigBuilder {
 public:
  explicit ConfigBuilder(const Common& c) : doc_(c.config.empty() ? json::object() : read_json(c.config)) {
    if (c.seed) set("training", "seed", *c.seed);
  }

  template <typename T>
  void set(const std::string& section, const std::string& key, const T& value) {
    doc_[section][key] = value;
  }
  void set_synthetic(const std::string& key, const json& value) { doc_["data"]["synthetic"][key] = value; }

  ExperimentConfig build() const { return parse_config(doc_); }

 private:
  json doc_;
};

/// `<dir>/config.json` + `<dir>/protomm.log` for directory outputs;
/// `<stem>.config.json` + `<stem>.log` beside file outputs.
struct RunFiles {
  fs::path config;
  fs::path log;

  static RunFiles for_dir(const fs::path& dir) { return {dir / "config.json", dir / "protomm.log"}; }
  static RunFiles beside(const fs::path& file) {
    const auto stem = file.parent_path() / file.stem();
    return {fs::path(stem.string() + ".config.json"), fs::path(stem.string() + ".log")};
  }
};

void start_run(const RunFiles& files, const ExperimentConfig& cfg, const std::string& command) {
  configure_logging(files.log);
  write_json(files.config, to_json(cfg));
  log_info(command + ": resolved config written to " + files.config.string());
}

int cmd_ingest(const Common& c, const std::string& dataset, std::string root, const std::string& task) {
  if (root.empty()) root = default_data_root().string();
  ConfigBuilder b(c);
  if (!dataset.empty()) b.set("data", "dataset", dataset);
  if (!root.empty()) b.set("data", "root", root);
  if (!task.empty()) b.set("data", "task", task);
  const auto cfg = b.build();
  if (c.out.empty()) throw Error("--out is required");
  if (cfg.data.dataset == DatasetKind::synthetic) throw ConfigError("data.dataset", "ingest needs wesad or dalia");
  require_exists(cfg.data.root, "data root");
  start_run(RunFiles::beside(c.out), cfg, "ingest");
  const auto manifest = cfg.data.dataset == DatasetKind::wesad ? load_wesad(cfg.data.root, cfg.data.task)
                                                              : load_dalia(cfg.data.root, cfg.data.task);
  if (manifest.size() == 0) throw Error("ingest: no windows produced from '" + cfg.data.root + "'");
  write_manifest(manifest, c.out);
  log_info("ingest: wrote " + std::to_string(manifest.size()) + " samples to " + c.out);
  return 0;
}

int cmd_synth(const Common& c) {
  ConfigBuilder b(c);
  if (c.seed) b.set_synthetic("seed", *c.seed);
  const auto cfg = b.build();
  if (c.out.empty()) throw Error("--out is required");
  start_run(RunFiles::beside(c.out), cfg, "synth");
  const auto manifest = generate_synthetic(cfg.data.synthetic);
  write_manifest(manifest, c.out);
  log_info("synth: wrote " + std::to_string(manifest.size()) + " samples to " + c.out);
  return 0;
}

int cmd_pretrain(const Common& c, const std::string& data) {
  ConfigBuilder b(c);
  if (!data.empty()) b.set("data", "manifest", data);
  const auto cfg = b.build();
  if (c.out.empty()) throw Error("--out is required");
  require_exists(cfg.data.manifest, "data manifest");
  if (!cfg.data.val_manifest.empty()) require_exists(cfg.data.val_manifest, "validation manifest");
  start_run(RunFiles::for_dir(c.out), cfg, "pretrain");

  const auto all = read_manifest(cfg.data.manifest);
  DatasetManifest train, val;
  if (cfg.data.val_manifest.empty()) {
    std::tie(train, val) = split_subjects(all, cfg.data.val_fraction, cfg.seed);
  } else {
    train = all;
    val = read_manifest(cfg.data.val_manifest);
  }
  PretrainOptions opts;
  opts.run_dir = c.out;
  opts.resolved_config = to_json(cfg);
  const auto result = pretrain(train, val, cfg.train_config(), opts);
  const auto& best = select_best(result.records);

  CheckpointMeta meta;
  meta.config = opts.resolved_config;
  meta.metrics = {{"epoch", best.epoch}, {"train_loss", best.train_loss}, {"val_loss", best.val_loss}};
  meta.assignment = cfg.assignment;
  save_checkpoint(result.best, meta, fs::path(c.out) / "best");
  std::ostringstream msg;
  msg << "pretrain: best epoch " << best.epoch << " val_loss " << best.val_loss << ", checkpoint "
      << (fs::path(c.out) / "best").string();
  log_info(msg.str());
  std::cout << "final val_loss " << result.records.back().val_loss << "\n";
  return 0;
}

int cmd_probe(const Common& c, const std::string& checkpoint, const std::string& data, const std::string& composition) {
  ConfigBuilder b(c);
  if (!data.empty()) b.set("data", "manifest", data);
  if (!composition.empty()) b.set("evaluation", "composition", composition);
  if (c.seed) b.set("evaluation", "fold_seed", *c.seed);
  auto cfg = b.build();
  if (c.out.empty()) throw Error("--out is required");
  require_exists(checkpoint, "checkpoint");
  require_exists(cfg.data.manifest, "data manifest");
  const auto manifest = read_manifest(cfg.data.manifest);
  if (cfg.origins["evaluation.task_type"] != "config") {
    cfg.evaluation.task_type = is_regression(manifest.task) ? TaskType::regression : TaskType::classification;
  }
  start_run(RunFiles::beside(c.out), cfg, "probe");
  const auto model = load_checkpoint(checkpoint);
  const auto emb = extract_embeddings(model, manifest, cfg.evaluation.composition);
  const auto result = train_linear_probe(emb, cfg.evaluation);
  json report = result.report;
  report["checkpoint"] = checkpoint;
  report["data"] = cfg.data.manifest;
  report["task"] = to_string(manifest.task);
  write_json(c.out, report);
  std::ostringstream msg;
  msg << "probe: " << to_string(cfg.evaluation.composition) << " on " << to_string(manifest.task);
  if (cfg.evaluation.task_type == TaskType::classification) {
    msg << " macro-F1 " << result.report.macro_f1.mean << " ± " << result.report.macro_f1.std;
  } else {
    msg << " MAE " << result.report.mae.mean << " ± " << result.report.mae.std;
  }
  log_info(msg.str());
  return 0;
}

int cmd_interpret(const Common& c, const std::string& checkpoint, const std::string& data, std::optional<int> k,
                  std::optional<int> top_k) {
  ConfigBuilder b(c);
  if (!data.empty()) b.set("data", "manifest", data);
  if (k) b.set("interpret", "k", *k);
  if (top_k) b.set("interpret", "top_k", *top_k);
  if (c.seed) b.set("interpret", "seed", *c.seed);
  require_exists(checkpoint, "checkpoint");
  const auto model = load_checkpoint(checkpoint);
  // the bank size comes from the checkpoint, not from this config
  if (model.prototypes) b.set("prototypes", "count", model.prototypes->count());
  const auto cfg = b.build();
  if (c.out.empty()) throw Error("--out is required");
  require_exists(cfg.data.manifest, "data manifest");
  start_run(RunFiles::for_dir(c.out), cfg, "interpret");
  const auto summary = run_interpret(model, read_manifest(cfg.data.manifest), cfg.interpret, c.out);
  for (const auto& [pool, value] : summary.consistency) {
    log_info("interpret: " + pool + " top-" + std::to_string(cfg.interpret.top_k) + " label consistency " +
             std::to_string(value));
  }
  return 0;
}

int cmd_selftest(const Common& c, std::string data_root, const std::vector<std::string>& only) {
  const auto cfg = ConfigBuilder(c).build();
  if (data_root.empty()) data_root = default_data_root().string();
  if (!c.out.empty()) {
    start_run(RunFiles::for_dir(c.out), cfg, "selftest");
  } else {
    configure_logging();
  }
  AcceptanceOptions opts;
  opts.data_root = data_root;
  opts.only = only;
  if (c.seed) opts.directional.seeds = {*c.seed, *c.seed + 1, *c.seed + 2};
  opts.progress = [](const std::string& line) { log_info("A6 " + line); };
  opts.on_result = [](const CriterionResult& r) { std::cout << format_result(r) << std::endl; };
  const auto results = run_acceptance(opts);
  int failed = 0;
  json out = json::array();
  for (const auto& r : results) {
    failed += r.verdict == Verdict::fail;
    out.push_back({{"id", r.id},
                   {"title", r.title},
                   {"verdict", r.verdict == Verdict::pass ? "pass" : r.verdict == Verdict::fail ? "fail" : "skip"},
                   {"detail", r.detail},
                   {"seconds", r.seconds}});
  }
  if (!c.out.empty()) write_json(fs::path(c.out) / "acceptance.json", out);
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed or skipped\n";
  if (failed) log_error("selftest: " + std::to_string(failed) + " criteria failed");
  return failed ? 1 : 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config (JSON)");
  app->add_option("--seed", c.seed, "Seed override");
  app->add_option("--out", c.out, "Output path");
  app->add_option("--log-level", c.log_level, "trace, debug, info, warn, error or off");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ProtoMM: multimodal prototypical pre-training for wearable signals"};
  app.require_subcommand(1);
  Common common;

  std::string dataset, root, task, data, checkpoint, composition, data_root;
  std::optional<int> k, top_k;
  std::vector<std::string> only;

  auto* ingest = app.add_subcommand("ingest", "Window a WESAD or PPG-DaLiA export into a manifest");
  add_common(ingest, common);
  ingest->add_option("--dataset", dataset, "wesad or dalia");
  ingest->add_option("--root", root, std::string("Raw dataset directory (default: $") + kDataRootEnv + ")");
  ingest->add_option("--task", task, "stress2, stress4, activity2, activity9 or hr_regression");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic multimodal corpus");
  add_common(synth, common);

  auto* pre = app.add_subcommand("pretrain", "Self-supervised pre-training");
  add_common(pre, common);
  pre->add_option("--data", data, "Training manifest");

  auto* probe = app.add_subcommand("probe", "Linear-probe evaluation of a checkpoint");
  add_common(probe, common);
  probe->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  probe->add_option("--data", data, "Labelled manifest");
  probe->add_option("--composition", composition, "P, A or P+A");

  auto* interp = app.add_subcommand("interpret", "Prototype clustering, retrieval and 2-D projection");
  add_common(interp, common);
  interp->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  interp->add_option("--data", data, "Manifest to retrieve from");
  interp->add_option("--k", k, "Number of prototype clusters");
  interp->add_option("--topk", top_k, "Neighbors per centroid");

  auto* self = app.add_subcommand("selftest", "Run the acceptance suite");
  add_common(self, common);
  self->add_option("--data-root", data_root, std::string("Directory holding WESAD/ and PPG_DaLiA/ (default: $") +
                                                 kDataRootEnv + ")");
  self->add_option("--only", only, "Criterion ids, e.g. A1 A3")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  int status = 0;
  try {
    set_log_level(common.log_level);
    configure_logging();
    if (*ingest) status = cmd_ingest(common, dataset, root, task);
    if (*synth) status = cmd_synth(common);
    if (*pre) status = cmd_pretrain(common, data);
    if (*probe) status = cmd_probe(common, checkpoint, data, composition);
    if (*interp) status = cmd_interpret(common, checkpoint, data, k, top_k);
    if (*self) status = cmd_selftest(common, data_root, only);
  } catch (const ConfigError& e) {
    log_error(std::string("invalid configuration: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  if (status == 0 && logged_error_count() > 0) status = 1;
  return status;
}
