// SPDX-License-Identifier: Apache-2.0
#include "protomm/synthetic.hpp"

#include <cmath>
#include <numbers>

namespace protomm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Maps a state index onto [-1, 1].
double centered(int state, int n_states) {
  return n_states > 1 ? 2.0 * state / (n_states - 1) - 1.0 : 0.0;
}

std::vector<int> markov_chain(int length, int n_states, double stay, Rng& rng) {
  std::uniform_int_distribution<int> any(0, n_states - 1);
  std::uniform_int_distribution<int> other(0, n_states - 2);
  std::bernoulli_distribution keep(stay);
  std::vector<int> seq(static_cast<std::size_t>(length));
  int s = any(rng);
  for (auto& v : seq) {
    v = s;
    if (n_states > 1 && !keep(rng)) {
      const int o = other(rng);
      s = o >= s ? o + 1 : o;
    }
  }
  return seq;
}

}  // namespace

void SyntheticGenConfig::validate() const {
  if (n_subjects < 1) throw ConfigError("data.synthetic.n_subjects", "must be >= 1");
  if (n_latent_states < 2) throw ConfigError("data.synthetic.n_latent_states", "must be >= 2");
  if (n_private_states < 1) throw ConfigError("data.synthetic.n_private_states", "must be >= 1");
  if (shared_fraction < 0.0 || shared_fraction > 1.0) {
    throw ConfigError("data.synthetic.shared_fraction", "must lie in [0, 1]");
  }
  if (!(duration_s > 0.0) || !(sample_rate_hz > 0.0)) {
    throw ConfigError("data.synthetic.duration_s", "duration_s and sample_rate_hz must be positive");
  }
  if (noise_sigma < 0.0) throw ConfigError("data.synthetic.noise_sigma", "must be >= 0");
  if (windows_per_subject < 1) throw ConfigError("data.synthetic.windows_per_subject", "must be >= 1");
  if (stay_probability < 0.0 || stay_probability > 1.0) {
    throw ConfigError("data.synthetic.stay_probability", "must lie in [0, 1]");
  }
}

std::string synthetic_label(int state) { return "state" + std::to_string(state); }

TimeSeriesWindow render_synthetic_window(const SyntheticGenConfig& cfg, Modality modality,
                                         int latent_state, int private_state,
                                         const SubjectTraits& traits, Rng& rng) {
  const int t_len = static_cast<int>(std::lround(cfg.duration_s * cfg.sample_rate_hz));
  const int channels = channels_for(modality);
  const double k = cfg.n_latent_states;
  const double w_shared = cfg.shared_fraction;
  const double w_private = 1.0 - cfg.shared_fraction;
  const double level = centered(latent_state, cfg.n_latent_states);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::normal_distribution<double> noise(0.0, 1.0);

  TimeSeriesWindow w;
  w.modality = modality;
  w.sample_rate_hz = cfg.sample_rate_hz;
  w.samples.resize(t_len, channels);

  if (modality == Modality::PPG) {
    // pulse wave whose rate and harmonic content follow the shared state,
    // over a slow private baseline wander
    const double f = (1.0 + 0.3 * latent_state) * traits.rate_scale;
    const double harmonic = 0.2 + 0.4 * latent_state / k;
    const double r = (0.25 + 0.15 * private_state) * traits.rate_scale;
    const double phi = phase(rng);
    const double psi = phase(rng);
    for (int t = 0; t < t_len; ++t) {
      const double x = t / cfg.sample_rate_hz;
      const double shared = std::sin(kTwoPi * f * x + phi) +
                            harmonic * std::sin(2.0 * (kTwoPi * f * x + phi) + 0.5) +
                            0.4 * level;
      const double priv = 1.2 * std::sin(kTwoPi * r * x + psi);
      w.samples(t, 0) = static_cast<float>(traits.amplitude * (w_shared * shared + w_private * priv));
    }
  } else {
    // motion rhythm with state-specific axis amplitudes and posture offset,
    // plus a private tremor on one axis
    const double g = (0.6 + 0.45 * latent_state) * traits.rate_scale;
    const double tremor = (2.5 + 0.6 * private_state) * traits.rate_scale;
    const int tremor_axis = private_state % 3;
    const double gravity[3] = {1.0, 0.5, -0.5};
    for (int c = 0; c < channels; ++c) {
      const double amp = 0.5 + 0.5 * ((latent_state + c) % cfg.n_latent_states) / std::max(1.0, k - 1);
      const double phi = phase(rng);
      const double psi = phase(rng);
      for (int t = 0; t < t_len; ++t) {
        const double x = t / cfg.sample_rate_hz;
        const double shared = amp * std::sin(kTwoPi * g * x + phi) + 0.4 * level * gravity[c];
        const double priv = (c == tremor_axis ? 1.2 : 0.3) * std::sin(kTwoPi * tremor * x + psi);
        w.samples(t, c) =
            static_cast<float>(traits.amplitude * (w_shared * shared + w_private * priv));
      }
    }
  }
  if (cfg.noise_sigma > 0.0) {
    for (int t = 0; t < t_len; ++t) {
      for (int c = 0; c < channels; ++c) {
        w.samples(t, c) += static_cast<float>(cfg.noise_sigma * noise(rng));
      }
    }
  }
  return w;
}

DatasetManifest generate_synthetic(const SyntheticGenConfig& cfg) {
  cfg.validate();
  DatasetManifest out;
  out.task = Task::synthetic_state;
  out.split = Split::train;
  out.sample_rate_hz = cfg.sample_rate_hz;
  out.samples.reserve(static_cast<std::size_t>(cfg.n_subjects) * cfg.windows_per_subject);

  for (int subj = 0; subj < cfg.n_subjects; ++subj) {
    Rng rng = derive_rng(cfg.seed, {0x5e5, static_cast<std::uint64_t>(subj)});
    std::uniform_real_distribution<double> rate(0.92, 1.08);
    std::uniform_real_distribution<double> amp(0.85, 1.15);
    const SubjectTraits traits{rate(rng), amp(rng)};
    const auto latent = markov_chain(cfg.windows_per_subject, cfg.n_latent_states,
                                     cfg.stay_probability, rng);
    const auto private_ppg = markov_chain(cfg.windows_per_subject, cfg.n_private_states,
                                          cfg.stay_probability, rng);
    const auto private_acc = markov_chain(cfg.windows_per_subject, cfg.n_private_states,
                                          cfg.stay_probability, rng);
    for (int i = 0; i < cfg.windows_per_subject; ++i) {
      auto s = std::make_shared<MultimodalSample>();
      s->subject_id = "syn" + std::to_string(subj);
      s->window_start_s = i * cfg.duration_s;
      s->label = synthetic_label(latent[i]);
      s->windows.emplace(Modality::PPG, render_synthetic_window(cfg, Modality::PPG, latent[i],
                                                                private_ppg[i], traits, rng));
      s->windows.emplace(Modality::ACCEL, render_synthetic_window(cfg, Modality::ACCEL, latent[i],
                                                                  private_acc[i], traits, rng));
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace protomm
