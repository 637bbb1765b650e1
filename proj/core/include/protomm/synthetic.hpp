// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "protomm/signal.hpp"

namespace protomm {

/// Desk-scale stand-in for a multimodal pre-training corpus.
///
/// Each subject emits `windows_per_subject` consecutive windows. A sticky Markov
/// chain over `n_latent_states` drives a state-dependent template in every
/// modality; each modality also follows its own private Markov chain. The
/// rendered signal is
///   shared_fraction · shared(state) + (1 − shared_fraction) · private(q_m) + noise.
/// The shared state is emitted as the label.
struct SyntheticGenConfig {
  int n_subjects = 8;
  int n_latent_states = 4;
  double shared_fraction = 0.7;
  double duration_s = 4.0;
  double sample_rate_hz = 32.0;
  double noise_sigma = 0.3;
  std::uint64_t seed = 0;
  int windows_per_subject = 64;
  int n_private_states = 4;
  double stay_probability = 0.7;

  void validate() const;
};

/// Per-subject physiology offsets applied to every template of that subject.
struct SubjectTraits {
  double rate_scale = 1.0;    // multiplies all template frequencies
  double amplitude = 1.0;
};

/// Renders one modality window; `rng` supplies the per-window phases and the noise.
TimeSeriesWindow render_synthetic_window(const SyntheticGenConfig& cfg, Modality modality,
                                         int latent_state, int private_state,
                                         const SubjectTraits& traits, Rng& rng);

DatasetManifest generate_synthetic(const SyntheticGenConfig& cfg);

std::string synthetic_label(int state);

}  // namespace protomm
