// SPDX-License-Identifier: Apache-2.0
#include "protomm/losses.hpp"

#include <cmath>

namespace protomm {

namespace {

// Row-wise log-softmax with the stabilizing max subtracted.
template <typename S>
Mat<S> log_softmax_rows(const Mat<S>& logits) {
  Mat<S> z = logits;
  const Vec<S> row_max = z.rowwise().maxCoeff();
  z.colwise() -= row_max;
  const Vec<S> lse = z.array().exp().rowwise().sum().log();
  z.colwise() -= lse;
  return z;
}

}  // namespace

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::protomm: return "protomm";
    case Objective::simclr: return "simclr";
    case Objective::clip: return "clip";
    case Objective::slip: return "slip";
  }
  return "protomm";
}

Objective objective_from_string(std::string_view s) {
  for (auto o : {Objective::protomm, Objective::simclr, Objective::clip, Objective::slip}) {
    if (to_string(o) == s) return o;
  }
  throw Error("unknown objective '" + std::string(s) + "'");
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss.alpha", "must lie in [0, 1]");
  if (!(nt_xent_temperature > 0.0)) throw ConfigError("loss.nt_xent_temperature", "must be positive");
  if (!(clip_temperature_init > 0.0)) throw ConfigError("loss.clip_temperature_init", "must be positive");
}

template <typename S>
S ce_term(const Mat<S>& target, const Mat<S>& probs) {
  if (target.rows() != probs.rows() || target.cols() != probs.cols()) {
    throw Error("ce_term: target and prediction shapes differ");
  }
  const S floor = static_cast<S>(kLogFloor);
  const S total = -(target.array() * probs.array().max(floor).log()).sum();
  return total / static_cast<S>(target.rows());
}

template <typename S>
Mat<S> ce_term_grad(const Mat<S>& target, const Mat<S>& probs) {
  const S floor = static_cast<S>(kLogFloor);
  const S inv_b = S(1) / static_cast<S>(target.rows());
  return (probs.array() > floor).select(-inv_b * target.array() / probs.array(), S(0)).matrix();
}

std::vector<LossTerm> within_mod_terms(int modalities, int views) {
  std::vector<LossTerm> out;
  for (int m = 0; m < modalities; ++m) {
    for (int a = 0; a < views; ++a) {
      for (int b = 0; b < views; ++b) {
        if (b != a) out.push_back({m, a, m, b});
      }
    }
  }
  return out;
}

std::vector<LossTerm> between_mod_terms(int modalities, int views) {
  std::vector<LossTerm> out;
  for (int m = 0; m < modalities; ++m) {
    for (int n = 0; n < modalities; ++n) {
      if (n == m) continue;
      for (int a = 0; a < views; ++a) {
        for (int b = 0; b < views; ++b) out.push_back({m, a, n, b});
      }
    }
  }
  return out;
}

template <typename S>
void ViewBundle<S>::validate() const {
  const auto n = static_cast<std::size_t>(modalities) * static_cast<std::size_t>(views);
  if (modalities < 1 || views < 1 || probs.size() != n || targets.size() != n) {
    throw Error("view bundle must hold a complete modality × view grid");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (probs[i].rows() != probs[0].rows() || probs[i].cols() != probs[0].cols() ||
        targets[i].rows() != probs[0].rows() || targets[i].cols() != probs[0].cols()) {
      throw Error("view bundle entries disagree on batch size or prototype count");
    }
  }
}

template <typename S>
S sum_terms(const ViewBundle<S>& bundle, const std::vector<LossTerm>& terms) {
  S total = 0;
  for (const auto& t : terms) {
    total += ce_term(bundle.v(t.target_modality, t.target_view), bundle.u(t.pred_modality, t.pred_view));
  }
  return total;
}

template <typename S>
S within_mod_loss(const ViewBundle<S>& bundle) {
  bundle.validate();
  if (bundle.views < 2) throw Error("within_mod_loss needs at least two views per modality");
  return sum_terms(bundle, within_mod_terms(bundle.modalities, bundle.views));
}

template <typename S>
S between_mod_loss(const ViewBundle<S>& bundle) {
  bundle.validate();
  if (bundle.modalities < 2) throw Error("between_mod_loss needs at least two modalities");
  return sum_terms(bundle, between_mod_terms(bundle.modalities, bundle.views));
}

template <typename S>
S mpp_loss(const ViewBundle<S>& bundle, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("mpp_loss: alpha must lie in [0, 1]");
  bundle.validate();
  S total = 0;
  if (alpha > 0.0) total += static_cast<S>(alpha) * within_mod_loss(bundle);
  if (alpha < 1.0) total += static_cast<S>(1.0 - alpha) * between_mod_loss(bundle);
  return total / static_cast<S>(bundle.views * bundle.modalities);
}

template <typename S>
std::vector<Mat<S>> mpp_loss_grad(const ViewBundle<S>& bundle, double alpha) {
  bundle.validate();
  const S scale = S(1) / static_cast<S>(bundle.views * bundle.modalities);
  std::vector<Mat<S>> grads;
  for (const auto& u : bundle.probs) grads.push_back(Mat<S>::Zero(u.rows(), u.cols()));
  auto accumulate = [&](const std::vector<LossTerm>& terms, S weight) {
    for (const auto& t : terms) {
      grads[static_cast<std::size_t>(t.pred_modality * bundle.views + t.pred_view)] +=
          weight * ce_term_grad(bundle.v(t.target_modality, t.target_view),
                                bundle.u(t.pred_modality, t.pred_view));
    }
  };
  if (alpha > 0.0) {
    if (bundle.views < 2) throw Error("within_mod_loss needs at least two views per modality");
    accumulate(within_mod_terms(bundle.modalities, bundle.views), static_cast<S>(alpha) * scale);
  }
  if (alpha < 1.0) {
    if (bundle.modalities < 2) throw Error("between_mod_loss needs at least two modalities");
    accumulate(between_mod_terms(bundle.modalities, bundle.views), static_cast<S>(1.0 - alpha) * scale);
  }
  return grads;
}

template <typename S>
PairLoss<S> nt_xent(const Mat<S>& first, const Mat<S>& second, double temperature) {
  if (first.rows() != second.rows() || first.cols() != second.cols()) {
    throw Error("nt_xent: view batches differ in shape");
  }
  const Eigen::Index b = first.rows();
  if (b < 2) throw Error("nt_xent needs a batch of at least 2 (no negatives otherwise)");
  if (!(temperature > 0.0)) throw Error("nt_xent: temperature must be positive");
  const Eigen::Index n = 2 * b;
  Mat<S> z(n, first.cols());
  z << first, second;
  const S inv_t = static_cast<S>(1.0 / temperature);
  Mat<S> logits = (z * z.transpose()) * inv_t;
  // self-similarity never enters the denominator
  const S neg_inf = -std::numeric_limits<S>::infinity();
  logits.diagonal().setConstant(neg_inf);
  const Mat<S> logp = log_softmax_rows(logits);

  PairLoss<S> out;
  Mat<S> dlogits = logp.array().exp().matrix();
  S total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index pos = (i + b) % n;
    total -= logp(i, pos);
    dlogits(i, pos) -= S(1);
  }
  dlogits.diagonal().setZero();
  dlogits /= static_cast<S>(n);
  out.value = total / static_cast<S>(n);
  const Mat<S> dz = (dlogits + dlogits.transpose()) * z * inv_t;
  out.grad_first = dz.topRows(b);
  out.grad_second = dz.bottomRows(b);
  return out;
}

template <typename S>
PairLoss<S> clip_loss(const Mat<S>& emb_ppg, const Mat<S>& emb_accel, S log_temperature) {
  if (emb_ppg.rows() != emb_accel.rows() || emb_ppg.cols() != emb_accel.cols()) {
    throw Error("clip_loss: embedding batches differ in shape");
  }
  const Eigen::Index b = emb_ppg.rows();
  if (b < 2) throw Error("clip_loss needs a batch of at least 2 (no negatives otherwise)");
  const S inv_t = std::exp(-log_temperature);
  const Mat<S> sim = emb_ppg * emb_accel.transpose();
  const Mat<S> logits = sim * inv_t;
  const Mat<S> row_logp = log_softmax_rows(logits);
  const Mat<S> col_logp = log_softmax_rows<S>(logits.transpose());

  PairLoss<S> out;
  out.value = -(row_logp.diagonal().sum() + col_logp.diagonal().sum()) / (S(2) * static_cast<S>(b));
  Mat<S> drow = row_logp.array().exp().matrix();
  drow.diagonal().array() -= S(1);
  Mat<S> dcol = col_logp.array().exp().matrix();
  dcol.diagonal().array() -= S(1);
  const Mat<S> dlogits = (drow + dcol.transpose()) / (S(2) * static_cast<S>(b));
  out.grad_first = dlogits * emb_accel * inv_t;
  out.grad_second = dlogits.transpose() * emb_ppg * inv_t;
  out.grad_log_temperature = -(dlogits.array() * logits.array()).sum();
  return out;
}

template <typename S>
SlipLoss<S> slip_loss(const std::vector<std::array<Mat<S>, 2>>& embeddings, double nt_temperature,
                      S log_temperature, bool use_within, bool use_between) {
  if (embeddings.empty()) throw Error("slip_loss: no modalities");
  SlipLoss<S> out;
  for (const auto& views : embeddings) {
    out.grads.push_back({Mat<S>::Zero(views[0].rows(), views[0].cols()),
                         Mat<S>::Zero(views[1].rows(), views[1].cols())});
  }
  if (use_within) {
    for (std::size_t m = 0; m < embeddings.size(); ++m) {
      auto r = nt_xent(embeddings[m][0], embeddings[m][1], nt_temperature);
      out.within += r.value;
      out.grads[m][0] += r.grad_first;
      out.grads[m][1] += r.grad_second;
    }
  }
  if (use_between) {
    if (embeddings.size() != 2) throw Error("slip_loss: the cross-modal term needs exactly two modalities");
    auto r = clip_loss(embeddings[0][0], embeddings[1][0], log_temperature);
    out.between = r.value;
    out.grads[0][0] += r.grad_first;
    out.grads[1][0] += r.grad_second;
    out.grad_log_temperature = r.grad_log_temperature;
  }
  out.value = out.within + out.between;
  return out;
}

#define PROTOMM_INSTANTIATE(S)                                                                  \
  template S ce_term<S>(const Mat<S>&, const Mat<S>&);                                          \
  template Mat<S> ce_term_grad<S>(const Mat<S>&, const Mat<S>&);                                \
  template struct ViewBundle<S>;                                                                \
  template S sum_terms<S>(const ViewBundle<S>&, const std::vector<LossTerm>&);                  \
  template S within_mod_loss<S>(const ViewBundle<S>&);                                          \
  template S between_mod_loss<S>(const ViewBundle<S>&);                                         \
  template S mpp_loss<S>(const ViewBundle<S>&, double);                                         \
  template std::vector<Mat<S>> mpp_loss_grad<S>(const ViewBundle<S>&, double);                  \
  template PairLoss<S> nt_xent<S>(const Mat<S>&, const Mat<S>&, double);                        \
  template PairLoss<S> clip_loss<S>(const Mat<S>&, const Mat<S>&, S);                           \
  template SlipLoss<S> slip_loss<S>(const std::vector<std::array<Mat<S>, 2>>&, double, S, bool, \
                                    bool);

PROTOMM_INSTANTIATE(float)
PROTOMM_INSTANTIATE(double)

}  // namespace protomm
