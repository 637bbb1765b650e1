// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "protomm/common.hpp"

namespace protomm {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// One flat parameter buffer and its gradient, both `size` entries long.
template <typename S>
struct AdamSlot {
  S* param;
  const S* grad;
  Eigen::Index size;
};

template <typename Derived, typename GradDerived>
AdamSlot<typename Derived::Scalar> adam_slot(Eigen::PlainObjectBase<Derived>& param,
                                             const Eigen::PlainObjectBase<GradDerived>& grad) {
  if (param.size() != grad.size()) throw Error("Adam: parameter and gradient sizes differ");
  return {param.data(), grad.data(), param.size()};
}

/// Adam over a fixed, ordered list of parameter buffers. Slot i of every step
/// must refer to the same parameter; moment buffers are allocated on first use.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<AdamSlot<S>>& slots) {
    if (m_.empty()) {
      for (const auto& s : slots) {
        m_.push_back(Vec<S>::Zero(s.size));
        v_.push_back(Vec<S>::Zero(s.size));
      }
    }
    if (m_.size() != slots.size()) throw Error("Adam::step: parameter list changed between steps");
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S c1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, t_));
    const S c2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, t_));
    const S lr = static_cast<S>(cfg_.learning_rate);
    const S eps = static_cast<S>(cfg_.eps);
    const S wd = static_cast<S>(cfg_.weight_decay);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (m_[i].size() != slots[i].size) throw Error("Adam::step: parameter size changed between steps");
      Eigen::Map<Vec<S>> p(slots[i].param, slots[i].size);
      Vec<S> g = Eigen::Map<const Vec<S>>(slots[i].grad, slots[i].size);
      if (wd != S(0)) g += wd * p;
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseAbs2();
      p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Vec<S>> m_, v_;
  long t_ = 0;
};

}  // namespace protomm
