// SPDX-License-Identifier: Apache-2.0
#include "protomm/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "protomm/augment.hpp"
#include "protomm/dataset_io.hpp"
#include "protomm/evaluation.hpp"
#include "protomm/interpret.hpp"
#include "protomm/logging.hpp"

namespace protomm {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat<double> gaussian(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Mat<double> unit_rows(int rows, int cols, Rng& rng) { return gaussian(rows, cols, rng).rowwise().normalized(); }

Mat<double> random_probs(int rows, int cols, Rng& rng) {
  Mat<double> m = gaussian(rows, cols, rng).array().exp().matrix();
  for (int i = 0; i < rows; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

double log_sum_exp(const Eigen::ArrayXd& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v - mx).exp().sum());
}

// Entropic transport plan with uniform marginals, solved to machine precision
// by alternating log-domain dual updates; returned scaled so rows sum to one.
Mat<double> transport_oracle(const Mat<double>& scores, double eps) {
  const int b = static_cast<int>(scores.rows());
  const int p = static_cast<int>(scores.cols());
  const Eigen::ArrayXXd logk = scores.array() / eps;
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(b);
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(p);
  for (int it = 0; it < 100000; ++it) {
    Eigen::ArrayXd g_new(p);
    for (int j = 0; j < p; ++j) g_new(j) = -std::log(double(p)) - log_sum_exp(logk.col(j) + f);
    Eigen::ArrayXd f_new(b);
    for (int i = 0; i < b; ++i) f_new(i) = -std::log(double(b)) - log_sum_exp(logk.row(i).transpose() + g_new);
    const double change = std::max((f_new - f).abs().maxCoeff(), (g_new - g).abs().maxCoeff());
    f = f_new;
    g = g_new;
    if (it > 10 && change < 1e-15) break;
  }
  Mat<double> plan(b, p);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < p; ++j) plan(i, j) = b * std::exp(logk(i, j) + f(i) + g(j));
  }
  return plan;
}

// Norm-wise relative difference with a floor on the scale.
double rel_error(const Mat<double>& analytic, const Mat<double>& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

template <typename F>
Mat<double> central_difference(Mat<double>& x, F&& f, double h = 1e-6) {
  Mat<double> g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

CriterionResult make(std::string id, std::string title) {
  CriterionResult r;
  r.id = std::move(id);
  r.title = std::move(title);
  return r;
}

void finish(CriterionResult& r, bool ok, const std::string& detail, Clock::time_point t0) {
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  r.detail = detail;
  r.seconds = elapsed(t0);
}

TimeSeriesWindow random_window(Modality m, int t_len, Rng& rng) {
  TimeSeriesWindow w;
  w.modality = m;
  w.sample_rate_hz = 50.0;
  w.samples = gaussian(t_len, channels_for(m), rng).cast<float>();
  return w;
}

double max_abs_diff(const TimeSeriesWindow& a, const TimeSeriesWindow& b) {
  if (a.samples.rows() != b.samples.rows() || a.samples.cols() != b.samples.cols()) return INFINITY;
  return (a.samples - b.samples).cwiseAbs().maxCoeff();
}

}  // namespace

std::string format_result(const CriterionResult& r) {
  const char* v = r.verdict == Verdict::pass ? "PASS" : r.verdict == Verdict::fail ? "FAIL" : "SKIP";
  return fmt::format("{} {} {} ({:.1f} s): {}", r.id, v, r.title, r.seconds, r.detail);
}

CriterionResult check_sinkhorn() {
  auto r = make("A1", "sinkhorn targets");
  const auto t0 = Clock::now();
  AssignmentConfig cfg;
  cfg.sinkhorn_epsilon = 0.05;
  cfg.sinkhorn_iters = 50;
  // cosine scores of random unit embeddings and prototypes at the default embedding width
  const int b = 8, p = 16, e = EncoderConfig{}.embed_dim;
  double worst = 0.0, worst_row = 0.0, worst_col = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = derive_rng(0xa1, {static_cast<std::uint64_t>(trial)});
    const Mat<double> z = unit_rows(b, e, rng);
    const Mat<double> protos = unit_rows(p, e, rng).transpose();
    const Mat<double> scores = z * protos;
    const Mat<double> v = sinkhorn_targets(scores, cfg);
    worst = std::max(worst, (v - transport_oracle(scores, cfg.sinkhorn_epsilon)).cwiseAbs().maxCoeff());
    worst_row = std::max(worst_row, (v.rowwise().sum().array() - 1.0).abs().maxCoeff());
    worst_col = std::max(worst_col, (v.colwise().sum().array() - double(b) / p).abs().maxCoeff());
  }
  const double secs = elapsed(t0);
  const bool ok = worst < 1e-6 && worst_row < 1e-3 && worst_col < 1e-3 && secs < 10.0;
  finish(r, ok,
         fmt::format("max|V-oracle|={:.2e} (<1e-6), row-sum err={:.2e}, col-sum err={:.2e} (<1e-3), {:.2f} s (<10)",
                     worst, worst_row, worst_col, secs),
         t0);
  return r;
}

CriterionResult check_loss_identities() {
  auto r = make("A2", "loss identities");
  const auto t0 = Clock::now();
  bool counts_ok = true;
  for (int m = 1; m <= 4; ++m) {
    for (int a = 1; a <= 4; ++a) {
      // enumerate the expected pairings independently and compare as sets
      std::set<std::tuple<int, int, int, int>> want_within, want_between, got_within, got_between;
      for (int i = 0; i < m; ++i) {
        for (int n = 0; n < m; ++n) {
          for (int x = 0; x < a; ++x) {
            for (int y = 0; y < a; ++y) {
              if (i == n && x != y) want_within.insert({i, x, n, y});
              if (i != n) want_between.insert({i, x, n, y});
            }
          }
        }
      }
      const auto w = within_mod_terms(m, a);
      const auto bt = between_mod_terms(m, a);
      for (const auto& t : w) got_within.insert({t.pred_modality, t.pred_view, t.target_modality, t.target_view});
      for (const auto& t : bt) got_between.insert({t.pred_modality, t.pred_view, t.target_modality, t.target_view});
      counts_ok = counts_ok && static_cast<int>(w.size()) == m * a * (a - 1) &&
                  static_cast<int>(bt.size()) == m * (m - 1) * a * a && got_within == want_within &&
                  got_between == want_between && w.size() == got_within.size() && bt.size() == got_between.size();
    }
  }

  ViewBundle<double> uniform;
  uniform.modalities = 2;
  uniform.views = 2;
  for (int i = 0; i < 4; ++i) {
    uniform.probs.push_back(Mat<double>::Constant(3, 4, 0.25));
    uniform.targets.push_back(Mat<double>::Constant(3, 4, 0.25));
  }
  const double closed_err = std::abs(mpp_loss(uniform, 0.5) - 1.5 * std::log(4.0));

  // α = 1 against the hand-written sum of per-modality swapped-prediction terms
  Rng rng = derive_rng(0xa2, {});
  ViewBundle<double> bundle;
  bundle.modalities = 2;
  bundle.views = 3;
  for (int i = 0; i < 6; ++i) {
    bundle.probs.push_back(random_probs(5, 4, rng));
    bundle.targets.push_back(random_probs(5, 4, rng));
  }
  double by_hand = 0.0;
  for (int m = 0; m < 2; ++m) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        if (a == b) continue;
        by_hand -= (bundle.v(m, b).array() * bundle.u(m, a).array().log()).sum() / 5.0;
      }
    }
  }
  by_hand /= 2.0 * 3.0;
  const double alpha1_err = std::abs(mpp_loss(bundle, 1.0) - by_hand);

  const bool ok = counts_ok && closed_err < 1e-9 && alpha1_err < 1e-9;
  finish(r, ok,
         fmt::format("term sets {} for M,A in 1..4; |L_uniform-1.5 log 4|={:.1e}; |L(alpha=1)-per-modality sum|={:.1e}",
                     counts_ok ? "match" : "MISMATCH", closed_err, alpha1_err),
         t0);
  return r;
}

CriterionResult check_gradients() {
  auto r = make("A3", "gradient fidelity");
  const auto t0 = Clock::now();
  const int e = 8, p = 4, b = 4, m_count = 2, a_count = 2;
  Rng rng = derive_rng(0xa3, {});
  AssignmentConfig acfg;
  acfg.temperature = 0.5;
  const double alpha = 0.5;

  std::vector<Mat<double>> z;
  for (int i = 0; i < m_count * a_count; ++i) z.push_back(unit_rows(b, e, rng));
  Mat<double> protos = unit_rows(p, e, rng).transpose();
  PrototypeBank<double> bank{protos};
  std::vector<Mat<double>> targets;
  for (const auto& zi : z) targets.push_back(sinkhorn_targets(project(zi, bank), acfg));

  auto bundle_for = [&](const std::vector<Mat<double>>& zs, const Mat<double>& pm) {
    ViewBundle<double> out;
    out.modalities = m_count;
    out.views = a_count;
    for (const auto& zi : zs) out.probs.push_back(soft_probs<double>(zi * pm, acfg.temperature));
    out.targets = targets;
    return out;
  };
  auto loss = [&] { return mpp_loss(bundle_for(z, protos), alpha); };

  const auto bundle = bundle_for(z, protos);
  const auto du = mpp_loss_grad(bundle, alpha);
  std::vector<Mat<double>> dz;
  Mat<double> dp = Mat<double>::Zero(e, p);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Mat<double> ds = soft_probs_backward(bundle.probs[i], du[i], acfg.temperature);
    dz.push_back(ds * protos.transpose());
    dp += z[i].transpose() * ds;
  }
  double mpp_err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) mpp_err = std::max(mpp_err, rel_error(dz[i], central_difference(z[i], loss)));
  mpp_err = std::max(mpp_err, rel_error(dp, central_difference(protos, loss)));

  Mat<double> x1 = unit_rows(b, e, rng), x2 = unit_rows(b, e, rng);
  const auto nt = nt_xent(x1, x2, 0.1);
  auto nt_value = [&] { return nt_xent(x1, x2, 0.1).value; };
  const double nt_err = std::max(rel_error(nt.grad_first, central_difference(x1, nt_value)),
                                 rel_error(nt.grad_second, central_difference(x2, nt_value)));

  double log_t = std::log(0.7);
  const auto cl = clip_loss(x1, x2, log_t);
  auto clip_value = [&] { return clip_loss(x1, x2, log_t).value; };
  Mat<double> lt(1, 1);
  lt(0, 0) = log_t;
  const double h = 1e-6;
  const double dlt = (clip_loss(x1, x2, log_t + h).value - clip_loss(x1, x2, log_t - h).value) / (2 * h);
  Mat<double> dlt_analytic(1, 1), dlt_numeric(1, 1);
  dlt_analytic(0, 0) = cl.grad_log_temperature;
  dlt_numeric(0, 0) = dlt;
  const double clip_err = std::max({rel_error(cl.grad_first, central_difference(x1, clip_value)),
                                    rel_error(cl.grad_second, central_difference(x2, clip_value)),
                                    rel_error(dlt_analytic, dlt_numeric)});
  const double secs = elapsed(t0);
  const bool ok = mpp_err < 1e-4 && nt_err < 1e-4 && clip_err < 1e-4 && secs < 60.0;
  finish(r, ok,
         fmt::format("relative error mpp={:.1e} nt_xent={:.1e} clip={:.1e} (<1e-4), {:.2f} s (<60)", mpp_err, nt_err,
                     clip_err, secs),
         t0);
  return r;
}

CriterionResult check_encoder() {
  auto r = make("A4", "encoder contract");
  const auto t0 = Clock::now();
  EncoderConfig full;
  const int audit = audit_weighted_layers(full);

  Rng rng = derive_rng(0xa4, {});
  double norm_err = 0.0;
  for (Modality m : {Modality::PPG, Modality::ACCEL}) {
    EncoderConfig c = full;
    c.in_channels = channels_for(m);
    const auto params = init_encoder<float>(c, 7);
    std::vector<TimeSeriesWindow> ws;
    for (int i = 0; i < 4; ++i) ws.push_back(random_window(m, 256, rng));
    std::vector<const TimeSeriesWindow*> ptrs;
    for (const auto& w : ws) ptrs.push_back(&w);
    const Mat<float> out = encode_batch(params, pack_batch<float>(ptrs));
    norm_err = std::max(norm_err, (out.rowwise().norm().cast<double>().array() - 1.0).abs().maxCoeff());
  }

  // width-reduced network, full-precision, training-mode batch statistics
  EncoderConfig small;
  small.in_channels = 3;
  small.base_width = 2;
  small.expansion = 2;
  small.block_layout = {1, 1};
  small.embed_dim = 6;
  small.kernel_size = 5;
  auto params = init_encoder_unchecked<double>(small, 11);
  std::vector<TimeSeriesWindow> ws;
  for (int i = 0; i < 3; ++i) ws.push_back(random_window(Modality::ACCEL, 40, rng));
  std::vector<const TimeSeriesWindow*> ptrs;
  for (const auto& w : ws) ptrs.push_back(&w);
  const auto input = pack_batch<double>(ptrs);
  const Mat<double> weights = gaussian(3, small.embed_dim, rng);
  auto loss = [&] {
    return (encoder_forward<double>(params, input, Mode::train, nullptr, false).array() * weights.array()).sum();
  };
  EncoderCache<double> cache;
  encoder_forward(params, input, Mode::train, &cache, false);
  auto grads = zero_grads(params);
  encoder_backward(params, cache, weights, grads);
  double grad_err = 0.0;
  for (std::size_t t = 0; t < params.weights.size(); ++t) {
    Mat<double> view = params.weights[t].data;
    auto eval = [&] {
      params.weights[t].data = view.reshaped();
      return loss();
    };
    const Mat<double> numeric = central_difference(view, eval);
    params.weights[t].data = view.reshaped();
    grad_err = std::max(grad_err, rel_error(Mat<double>(grads[t]), numeric));
  }
  const bool ok = audit == 26 && norm_err < 1e-6 && grad_err < 1e-4;
  finish(r, ok,
         fmt::format("audit={} (26), max|‖z‖-1|={:.1e} (<1e-6), reduced-encoder FD relative error={:.1e} (<1e-4)",
                     audit, norm_err, grad_err),
         t0);
  return r;
}

CriterionResult check_augmentations() {
  auto r = make("A5", "augmentation invariants");
  const auto t0 = Clock::now();
  Rng rng = derive_rng(0xa5, {});
  const auto accel = random_window(Modality::ACCEL, 200, rng);
  const auto ppg = random_window(Modality::PPG, 200, rng);

  double involution = 0.0;
  for (AugName n : {AugName::time_reverse, AugName::negate}) {
    const auto spec = AugmentationSpec::with_defaults(n);
    for (const auto* w : {&accel, &ppg}) involution = std::max(involution, max_abs_diff(apply(spec, apply(spec, *w, rng), rng), *w));
  }

  const auto rot = apply(AugmentationSpec::with_defaults(AugName::rotate3d), accel, rng);
  const double isometry =
      (rot.samples.cast<double>().rowwise().norm() - accel.samples.cast<double>().rowwise().norm()).cwiseAbs().maxCoeff();

  double identity = 0.0;
  auto limit = [&](AugName n, const char* key, double value) {
    auto spec = AugmentationSpec::with_defaults(n);
    spec.params[key] = value;
    for (const auto* w : {&accel, &ppg}) identity = std::max(identity, max_abs_diff(apply(spec, *w, rng), *w));
  };
  limit(AugName::jitter, "sigma", 0.0);
  limit(AugName::scale, "sigma", 0.0);
  limit(AugName::segment_shuffle, "segments", 1.0);
  limit(AugName::time_warp, "sigma", 0.0);

  const ViewSamplerConfig cfg;
  bool uniform = true;
  double worst_z = 0.0;
  for (Modality m : {Modality::ACCEL, Modality::PPG}) {
    const auto k = cfg.applicable(m).size();
    std::vector<long> counts(k, 0);
    const long n = 100000;
    Rng draw = derive_rng(0xa5, {static_cast<std::uint64_t>(m) + 1});
    for (long i = 0; i < n; ++i) ++counts.at(draw_spec_index(cfg, m, draw));
    const double pk = 1.0 / static_cast<double>(k);
    const double sd = std::sqrt(n * pk * (1 - pk));
    for (long c : counts) {
      const double z = std::abs(c - n * pk) / sd;
      worst_z = std::max(worst_z, z);
      uniform = uniform && z <= 3.0;
    }
  }

  bool excluded = true;
  for (const auto* s : cfg.applicable(Modality::PPG)) {
    excluded = excluded && s->name != AugName::rotate3d && s->name != AugName::channel_shuffle;
  }
  excluded = excluded && cfg.applicable(Modality::PPG).size() == 6 && cfg.applicable(Modality::ACCEL).size() == 8;
  for (AugName n : {AugName::rotate3d, AugName::channel_shuffle}) {
    try {
      apply(AugmentationSpec::with_defaults(n), ppg, rng);
      excluded = false;
    } catch (const Error&) {
    }
  }

  const bool ok = involution == 0.0 && isometry < 1e-6 && identity < 1e-6 && uniform && excluded;
  finish(r, ok,
         fmt::format("involution err={:.1e}, rotation norm err={:.1e} (<1e-6), identity-limit err={:.1e} (<1e-6), "
                     "selection max |z|={:.2f} (<=3), PPG excludes rotate3d/channel_shuffle: {}",
                     involution, isometry, identity, worst_z, excluded ? "yes" : "NO"),
         t0);
  return r;
}

DirectionalSettings::DirectionalSettings() {
  generator.n_latent_states = 4;
  generator.shared_fraction = 0.7;
  generator.n_subjects = 12;
  generator.windows_per_subject = 96;
  generator.noise_sigma = 1.0;
}

const DirectionalOutcome::Arm& DirectionalOutcome::arm(const std::string& name) const {
  for (const auto& a : arms) {
    if (a.name == name) return a;
  }
  throw Error("DirectionalOutcome: no arm '" + name + "'");
}

DirectionalOutcome run_directional(const DirectionalSettings& s,
                                   const std::function<void(const std::string&)>& progress) {
  struct ArmSpec {
    std::string name;
    Objective objective;
    double alpha;
    std::vector<Modality> modalities;
  };
  const std::vector<ArmSpec> specs{
      {"alpha=0", Objective::protomm, 0.0, {Modality::PPG, Modality::ACCEL}},
      {"alpha=0.5", Objective::protomm, 0.5, {Modality::PPG, Modality::ACCEL}},
      {"alpha=1", Objective::protomm, 1.0, {Modality::PPG, Modality::ACCEL}},
      {"slip", Objective::slip, 0.5, {Modality::PPG, Modality::ACCEL}},
      {"unimodal-P", Objective::protomm, 1.0, {Modality::PPG}},
      {"unimodal-A", Objective::protomm, 1.0, {Modality::ACCEL}},
  };
  const auto t0 = Clock::now();
  DirectionalOutcome out;
  for (const auto& a : specs) out.arms.push_back({a.name, {}, {}, {}});

  for (auto seed : s.seeds) {
    SyntheticGenConfig gen = s.generator;
    gen.seed = seed;
    const auto corpus = generate_synthetic(gen);
    const auto [train, val] = split_subjects(corpus, 0.1, seed);
    SyntheticGenConfig probe_gen = gen;
    probe_gen.seed = seed ^ 0x9e3779b97f4a7c15ULL;
    probe_gen.n_subjects = s.probe_subjects;
    probe_gen.windows_per_subject = s.probe_windows_per_subject;
    auto probe_data = generate_synthetic(probe_gen);
    // keep subject ids distinct from the pre-training corpus
    for (auto& sp : probe_data.samples) {
      auto copy = std::make_shared<MultimodalSample>(*sp);
      copy->subject_id = "probe-" + copy->subject_id;
      sp = copy;
    }

    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& a = specs[i];
      TrainConfig cfg;
      cfg.seed = seed;
      cfg.batch_size = s.batch_size;
      cfg.max_epochs = s.epochs;
      cfg.prototype_count = s.prototype_count;
      cfg.encoder.embed_dim = s.embed_dim;
      cfg.encoder.base_width = s.base_width;
      cfg.optimizer.learning_rate = s.learning_rate;
      cfg.assignment.temperature = s.temperature;
      cfg.assignment.sinkhorn_epsilon = s.sinkhorn_epsilon;
      cfg.loss.objective = a.objective;
      cfg.loss.alpha = a.alpha;
      cfg.modalities = a.modalities;
      const auto run_t0 = Clock::now();
      const auto result = pretrain(train, val, cfg);
      auto& arm = out.arms[i];
      std::string line = fmt::format("seed {} {:<10} {:.0f} s", seed, a.name, elapsed(run_t0));
      ProbeConfig pc;
      pc.fold_seed = seed;
      for (auto comp : {Composition::concat_PA, Composition::single_P, Composition::single_A}) {
        bool available = true;
        for (auto m : modalities_of(comp)) available = available && result.best.encoders.count(m);
        if (!available) continue;
        pc.composition = comp;
        const double f1 = train_linear_probe(extract_embeddings(result.best, probe_data, comp), pc).report.macro_f1.mean;
        (comp == Composition::concat_PA ? arm.concat_f1 : comp == Composition::single_P ? arm.ppg_f1 : arm.accel_f1)
            .push_back(f1);
        line += fmt::format("  {}={:.3f}", to_string(comp), f1);
      }
      if (progress) progress(line);
    }
  }
  out.seconds = elapsed(t0);
  return out;
}

CriterionResult check_directional(const DirectionalSettings& s,
                                  const std::function<void(const std::string&)>& progress) {
  auto r = make("A6", "directional synthetic claims");
  const auto t0 = Clock::now();
  const auto o = run_directional(s, progress);
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double f0 = mean(o.arm("alpha=0").concat_f1);
  const double f05 = mean(o.arm("alpha=0.5").concat_f1);
  const double f1 = mean(o.arm("alpha=1").concat_f1);
  const double fslip = mean(o.arm("slip").concat_f1);
  const double multi_p = mean(o.arm("alpha=0.5").ppg_f1);
  const double multi_a = mean(o.arm("alpha=0.5").accel_f1);
  const double uni_p = mean(o.arm("unimodal-P").ppg_f1);
  const double uni_a = mean(o.arm("unimodal-A").accel_f1);

  const bool a = f05 - f0 > s.margin && f05 - f1 > s.margin;
  const bool b = f05 - fslip > s.margin;
  const bool c = multi_p - uni_p > s.margin && multi_a - uni_a > s.margin;
  const bool in_time = o.seconds < s.runtime_limit_s;
  finish(r, a && b && c && in_time,
         fmt::format("(a) {} F1 alpha=0.5 {:.3f} vs alpha=0 {:.3f}, alpha=1 {:.3f}; (b) {} ProtoMM {:.3f} vs SLIP {:.3f}; "
                     "(c) {} P {:.3f} vs unimodal {:.3f}, A {:.3f} vs unimodal {:.3f}; margin {:.2f}, {} seeds, {:.0f} s (<{:.0f})",
                     a ? "ok" : "FAILED", f05, f0, f1, b ? "ok" : "FAILED", f05, fslip, c ? "ok" : "FAILED", multi_p,
                     uni_p, multi_a, uni_a, s.margin, s.seeds.size(), o.seconds, s.runtime_limit_s),
         t0);
  return r;
}

CriterionResult check_metrics() {
  auto r = make("A7", "metric oracles");
  const auto t0 = Clock::now();
  // confusion matrix [[8,2],[3,7]], rows = true class
  std::vector<int> labels, preds;
  const int cm[2][2] = {{8, 2}, {3, 7}};
  for (int t = 0; t < 2; ++t) {
    for (int p = 0; p < 2; ++p) {
      for (int i = 0; i < cm[t][p]; ++i) {
        labels.push_back(t);
        preds.push_back(p);
      }
    }
  }
  double oracle_f1 = 0.0;
  for (int c = 0; c < 2; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      tp += preds[i] == c && labels[i] == c;
      fp += preds[i] == c && labels[i] != c;
      fn += preds[i] != c && labels[i] == c;
    }
    const double precision = double(tp) / (tp + fp), recall = double(tp) / (tp + fn);
    oracle_f1 += 0.5 * 2 * precision * recall / (precision + recall);
  }
  const double acc_err = std::abs(accuracy(preds, labels) - 0.75);
  const double f1 = macro_f1(preds, labels);
  const double f1_err = std::abs(f1 - oracle_f1);

  const std::vector<double> targets{1.0, 2.5, -0.5, 4.0, 3.0};
  const double m = std::accumulate(targets.begin(), targets.end(), 0.0) / targets.size();
  const double r2_err = std::abs(r2(std::vector<double>(targets.size(), m), targets));
  const bool ok = acc_err < 1e-6 && f1_err < 1e-6 && std::abs(f1 - 0.749) < 1e-3 && r2_err < 1e-6;
  finish(r, ok,
         fmt::format("accuracy err={:.1e}, macro-F1={:.6f} (oracle {:.6f}), R2 of mean predictor={:.1e}", acc_err, f1,
                     oracle_f1, r2_err),
         t0);
  return r;
}

CriterionResult check_interpret() {
  auto r = make("A8", "interpretability pipeline");
  const auto t0 = Clock::now();
  const int e = 8, p = 16;
  auto bank = init_prototypes<float>(e, p, 0xa8);
  const Mat<double> cols = bank.matrix.cast<double>().transpose();

  const auto all = cluster_prototypes(bank, p, 3);
  bool own = true;
  std::set<int> used(all.assignment.begin(), all.assignment.end());
  own = own && static_cast<int>(used.size()) == p;
  for (int i = 0; i < p; ++i) {
    own = own && all.members[all.assignment[i]] == std::vector<int>{i} &&
          (all.centroids.row(all.assignment[i]) - cols.row(i)).cwiseAbs().maxCoeff() < 1e-6;
  }
  const auto one = cluster_prototypes(bank, 1, 3);
  const RowVec<double> mean = cols.colwise().mean();
  const bool single = std::all_of(one.assignment.begin(), one.assignment.end(), [](int a) { return a == 0; }) &&
                      (one.centroids.row(0) - mean.normalized()).cwiseAbs().maxCoeff() < 1e-9;

  Rng rng = derive_rng(0xa8, {});
  const Mat<double> emb = unit_rows(100, e, rng);
  bool retrieval = true;
  for (int q = 0; q < 10; ++q) {
    const Vec<double> query = unit_rows(1, e, rng).row(0).transpose();
    std::vector<std::pair<double, std::size_t>> order;
    for (int i = 0; i < 100; ++i) order.push_back({emb.row(i).dot(query), static_cast<std::size_t>(i)});
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    const auto got = nearest_segments(query, emb, 100);
    retrieval = retrieval && got.size() == 100;
    for (std::size_t i = 0; retrieval && i < got.size(); ++i) {
      retrieval = got[i].index == order[i].second && std::abs(got[i].similarity - order[i].first) < 1e-12;
    }
  }

  const auto coords = project_2d(bank, 5);
  const auto path = std::filesystem::temp_directory_path() / fmt::format("protomm_a8_{}.csv", Clock::now().time_since_epoch().count());
  write_coords_csv(path, coords, all.assignment);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  bool finite = line == "prototype_index,x,y,centroid_id";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; std::getline(ss, cell, ','); ++c) {
      if (c == 1 || c == 2) finite = finite && std::isfinite(std::stod(cell));
    }
  }
  std::filesystem::remove(path);
  const bool ok = own && single && retrieval && rows == p && finite;
  finish(r, ok,
         fmt::format("k=P_count singletons: {}, k=1 normalized mean: {}, retrieval matches sort oracle: {}, coords.csv "
                     "{} rows ({} expected), finite: {}",
                     own ? "yes" : "NO", single ? "yes" : "NO", retrieval ? "yes" : "NO", rows, p,
                     finite ? "yes" : "NO"),
         t0);
  return r;
}

CriterionResult check_ingestion(const std::filesystem::path& data_root) {
  auto r = make("A9", "public-data ingestion");
  const auto t0 = Clock::now();
  const bool windowing = window_count(60.0, 8.0, 2.0) == 27;
  namespace fs = std::filesystem;
  fs::path wesad, dalia;
  if (!data_root.empty()) {
    for (const char* n : {"WESAD", "wesad"}) {
      if (fs::is_directory(data_root / n)) wesad = data_root / n;
    }
    for (const char* n : {"PPG_DaLiA", "DaLiA", "dalia", "ppg_dalia"}) {
      if (fs::is_directory(data_root / n)) dalia = data_root / n;
    }
  }
  if (wesad.empty() || dalia.empty()) {
    r.verdict = Verdict::skip;
    r.detail = fmt::format("WESAD/DaLiA exports not found under '{}'; 60 s/8 s/2 s windowing gives 27 windows: {}",
                           data_root.string(), windowing ? "yes" : "NO");
    r.seconds = elapsed(t0);
    if (!windowing) r.verdict = Verdict::fail;
    return r;
  }
  const auto w = load_wesad(wesad, Task::stress2);
  const auto labels = w.label_set();
  const bool wesad_ok = labels == std::vector<std::string>{labels::kNonStress, labels::kStress};
  const auto d = load_dalia(dalia, Task::activity9);
  const bool classes_ok = d.label_set().size() == 9;
  bool shape_ok = d.size() > 0;
  for (const auto& s : d.samples) {
    for (const auto& [m, win] : s->windows) shape_ok = shape_ok && win.length() == 400 && win.sample_rate_hz == 50.0;
  }
  finish(r, wesad_ok && classes_ok && shape_ok && windowing,
         fmt::format("WESAD labels {{{}}}, DaLiA activity classes={}, DaLiA windows T=400 @50 Hz: {}, 27 windows per 60 s: {}",
                     fmt::join(labels, ", "), d.label_set().size(), shape_ok ? "yes" : "NO", windowing ? "yes" : "NO"),
         t0);
  return r;
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& o) {
  const std::vector<std::pair<std::string, std::function<CriterionResult()>>> all{
      {"A1", check_sinkhorn},
      {"A2", check_loss_identities},
      {"A3", check_gradients},
      {"A4", check_encoder},
      {"A5", check_augmentations},
      {"A6", [&] { return check_directional(o.directional, o.progress); }},
      {"A7", check_metrics},
      {"A8", check_interpret},
      {"A9", [&] { return check_ingestion(o.data_root); }},
  };
  std::vector<CriterionResult> out;
  for (const auto& [id, fn] : all) {
    if (!o.only.empty() && std::find(o.only.begin(), o.only.end(), id) == o.only.end()) continue;
    CriterionResult res;
    try {
      res = fn();
    } catch (const std::exception& e) {
      res = make(id, "error");
      res.verdict = Verdict::fail;
      res.detail = std::string("exception: ") + e.what();
    }
    if (o.on_result) o.on_result(res);
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace protomm
