#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/nn.hpp"
#include "vsd/types.hpp"

namespace vsd {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 3.0;  // per-tensor gradient clip; <= 0 disables
};

/// Scale `grad` down to Frobenius norm `max_norm` if it exceeds it.
/// Returns the pre-clip norm.
template <class S>
double clip_grad_norm(MatX<S>& grad, double max_norm) {
  const double n = std::sqrt(static_cast<double>(grad.squaredNorm()));
  if (max_norm > 0.0 && n > max_norm) grad *= static_cast<S>(max_norm / n);
  return n;
}

/// Adam with decoupled weight decay over an externally owned parameter list.
/// Decay multiplies the value by (1 - lr*wd) before the moment update and
/// only where Param::decay is set. Moments are bias-corrected with a
/// per-tensor step count so tensors skipped while frozen warm up correctly
/// once released. The bound pointers must outlive the optimizer.
template <class S>
class AdamW {
 public:
  struct Slot {
    MatX<S> m, v;
    long t = 0;
  };

  explicit AdamW(std::vector<Param<S>*> params, AdamWConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    slots_.reserve(params_.size());
    for (const Param<S>* p : params_)
      slots_.push_back(Slot{MatX<S>::Zero(p->value.rows(), p->value.cols()),
                            MatX<S>::Zero(p->value.rows(), p->value.cols()), 0});
  }

  /// One update from the gradients currently held by the bound parameters.
  /// Tensors for which `skip` returns true are left untouched (value, moments
  /// and step count alike).
  template <class Skip>
  void step(double lr, double weight_decay, Skip&& skip) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param<S>& p = *params_[i];
      if (skip(p)) continue;
      Slot& s = slots_[i];
      clip_grad_norm(p.grad, cfg_.clip_norm);
      ++s.t;
      if (p.decay && weight_decay > 0.0)
        p.value *= S(1.0 - lr * weight_decay);
      s.m = S(cfg_.beta1) * s.m + S(1.0 - cfg_.beta1) * p.grad;
      s.v = S(cfg_.beta2) * s.v +
            S(1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad).eval();
      const S bc1 = S(1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t)));
      const S bc2 = S(1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t)));
      p.value.array() -=
          S(lr) * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + S(cfg_.eps));
    }
  }

  void step(double lr, double weight_decay) {
    step(lr, weight_decay, [](const Param<S>&) { return false; });
  }

  const AdamWConfig& config() const { return cfg_; }
  const std::vector<Param<S>*>& params() const { return params_; }
  const std::vector<Slot>& slots() const { return slots_; }

  /// Moment buffers and step counts keyed by parameter name, in double.
  std::map<std::string, MatX<double>> state() const {
    std::map<std::string, MatX<double>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::string& n = params_[i]->name;
      out[n + ".m"] = slots_[i].m.template cast<double>();
      out[n + ".v"] = slots_[i].v.template cast<double>();
      out[n + ".t"] = MatX<double>::Constant(1, 1, static_cast<double>(slots_[i].t));
    }
    return out;
  }

  /// Restore from state(); every bound parameter must be present with
  /// matching shapes, and no extra entries are tolerated.
  void load_state(const std::map<std::string, MatX<double>>& state_map) {
    if (state_map.size() != 3 * params_.size())
      throw CheckpointError("optimizer state has " + std::to_string(state_map.size()) +
                            " entries, expected " + std::to_string(3 * params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::string& n = params_[i]->name;
      Slot& s = slots_[i];
      s.m = fetch(state_map, n + ".m", s.m.rows(), s.m.cols()).template cast<S>();
      s.v = fetch(state_map, n + ".v", s.v.rows(), s.v.cols()).template cast<S>();
      s.t = static_cast<long>(fetch(state_map, n + ".t", 1, 1)(0, 0));
    }
  }

 private:
  static const MatX<double>& fetch(const std::map<std::string, MatX<double>>& m,
                                   const std::string& key, Eigen::Index rows,
                                   Eigen::Index cols) {
    auto it = m.find(key);
    if (it == m.end()) throw CheckpointError("optimizer state missing " + key);
    if (it->second.rows() != rows || it->second.cols() != cols)
      throw CheckpointError("optimizer state " + key + " is " +
                            std::to_string(it->second.rows()) + "x" +
                            std::to_string(it->second.cols()) + ", expected " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    return it->second;
  }

  std::vector<Param<S>*> params_;
  AdamWConfig cfg_;
  std::vector<Slot> slots_;
};

}  // namespace vsd
