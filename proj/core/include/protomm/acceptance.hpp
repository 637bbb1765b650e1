// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "protomm/synthetic.hpp"
#include "protomm/training.hpp"

namespace protomm {

enum class Verdict { pass, fail, skip };

struct CriterionResult {
  std::string id;     // "A1" ... "A9"
  std::string title;
  Verdict verdict = Verdict::fail;
  std::string detail;
  double seconds = 0.0;
};

/// One line: `A3 PASS gradient fidelity (0.4 s): ...`.
std::string format_result(const CriterionResult& r);

/// Desk-scale synthetic benchmark behind the directional checks of A6.
struct DirectionalSettings {
  SyntheticGenConfig generator;       // pre-training corpus (seed overridden per run)
  int probe_subjects = 8;             // held-out labelled subjects for the probes
  int probe_windows_per_subject = 64;
  std::vector<std::uint64_t> seeds{1001, 1002, 1003};
  int epochs = 20;
  int batch_size = 32;
  int prototype_count = 16;
  int embed_dim = 64;
  int base_width = 8;
  double learning_rate = 1e-3;
  double temperature = 0.3;
  double sinkhorn_epsilon = 0.02;
  double margin = 0.02;
  double runtime_limit_s = 1800.0;

  DirectionalSettings();
};

/// Probe macro-F1 of every arm, per seed.
struct DirectionalOutcome {
  struct Arm {
    std::string name;
    std::vector<double> concat_f1, ppg_f1, accel_f1;  // per seed; empty when not applicable
  };
  std::vector<Arm> arms;
  double seconds = 0.0;

  const Arm& arm(const std::string& name) const;
};

/// Trains every arm on every seed and probes it on held-out subjects.
/// `progress` receives one human-readable line per finished run.
DirectionalOutcome run_directional(const DirectionalSettings& s,
                                   const std::function<void(const std::string&)>& progress = {});

CriterionResult check_sinkhorn();
CriterionResult check_loss_identities();
CriterionResult check_gradients();
CriterionResult check_encoder();
CriterionResult check_augmentations();
CriterionResult check_directional(const DirectionalSettings& s = {},
                                  const std::function<void(const std::string&)>& progress = {});
CriterionResult check_metrics();
CriterionResult check_interpret();
/// Skipped unless `data_root` holds WESAD/ and DaLiA/ exports.
CriterionResult check_ingestion(const std::filesystem::path& data_root);

struct AcceptanceOptions {
  std::filesystem::path data_root;
  /// Criterion ids to run; empty runs all nine.
  std::vector<std::string> only;
  DirectionalSettings directional;
  std::function<void(const std::string&)> progress;
  /// Called after each criterion finishes.
  std::function<void(const CriterionResult&)> on_result;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

}  // namespace protomm
