#pragma once

// SGD with classical momentum, bias-corrected Adam, and the cosine schedule.
// Frozen elements are skipped entirely: neither their values nor their
// auxiliary buffers move.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "relearn/param_store.hpp"

namespace relearn {

struct OptimizerState {
  enum class Kind { SgdMomentum, Adam };
  Kind kind = Kind::SgdMomentum;
  long step_count = 0;
  std::vector<Vector> buf1;  // momentum (SGD) or first moment (Adam)
  std::vector<Vector> buf2;  // second moment (Adam)

  static OptimizerState sgd_momentum(const ParameterStore& store) {
    OptimizerState s;
    s.kind = Kind::SgdMomentum;
    for (int i = 0; i < store.entry_count(); ++i)
      s.buf1.push_back(Vector::Zero(store.entry(i).size()));
    return s;
  }

  static OptimizerState adam(const ParameterStore& store) {
    OptimizerState s;
    s.kind = Kind::Adam;
    for (int i = 0; i < store.entry_count(); ++i) {
      s.buf1.push_back(Vector::Zero(store.entry(i).size()));
      s.buf2.push_back(Vector::Zero(store.entry(i).size()));
    }
    return s;
  }

  void reset() {
    step_count = 0;
    for (auto& v : buf1) v.setZero();
    for (auto& v : buf2) v.setZero();
  }

  bool shape_matches(const ParameterStore& store) const {
    if (static_cast<int>(buf1.size()) != store.entry_count()) return false;
    for (int i = 0; i < store.entry_count(); ++i)
      if (buf1[static_cast<std::size_t>(i)].size() != store.entry(i).size()) return false;
    return true;
  }
};

// v <- mu v + (g + wd p); p <- p - lr v
inline void sgd_momentum_step(ParameterStore& store, OptimizerState& opt, double lr,
                              double momentum = 0.9, double weight_decay = 0.0) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_momentum_step: lr must be positive");
  if (opt.kind != OptimizerState::Kind::SgdMomentum)
    throw std::invalid_argument("sgd_momentum_step: optimizer state kind mismatch");
  if (!opt.shape_matches(store))
    throw std::invalid_argument("sgd_momentum_step: state shape mismatch");
  ++opt.step_count;
  for (int i = 0; i < store.entry_count(); ++i) {
    auto& e = store.entry(i);
    auto& v = opt.buf1[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < e.size(); ++j) {
      if (!e.trainable[static_cast<std::size_t>(j)]) continue;
      v[j] = momentum * v[j] + (e.grads[j] + weight_decay * e.values[j]);
      e.values[j] -= lr * v[j];
    }
  }
}

inline void adam_step(ParameterStore& store, OptimizerState& opt, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("adam_step: betas must lie in [0, 1)");
  if (opt.kind != OptimizerState::Kind::Adam)
    throw std::invalid_argument("adam_step: optimizer state kind mismatch");
  if (!opt.shape_matches(store))
    throw std::invalid_argument("adam_step: state shape mismatch");
  ++opt.step_count;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(opt.step_count));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(opt.step_count));
  for (int i = 0; i < store.entry_count(); ++i) {
    auto& e = store.entry(i);
    auto& m = opt.buf1[static_cast<std::size_t>(i)];
    auto& v = opt.buf2[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < e.size(); ++j) {
      if (!e.trainable[static_cast<std::size_t>(j)]) continue;
      double gj = e.grads[j];
      m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
      v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
      e.values[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)); restarts each generation
inline double cosine_lr(long step, long total_steps, double base_lr) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step out of range");
  return base_lr * 0.5 *
         (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

}  // namespace relearn
