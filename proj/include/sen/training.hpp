#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sen/tensor.hpp"

namespace sen {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.1;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay applied before the moment update.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  // Consumes the gradients currently stored on the parameters.
  void step(double lr);

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  size_t size() const { return params_.size(); }
  const Tensor& param(size_t i) const { return params_[i]; }
  std::vector<double>& moment1(size_t i) { return m_[i]; }
  std::vector<double>& moment2(size_t i) { return v_[i]; }
  const AdamWConfig& config() const { return cfg_; }
  // True when any optimizer slot aliases the given tensor's storage.
  bool tracks(const Tensor& t) const;

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
};

// base_lr * 0.5 * (1 + cos(pi * step / total)); step must lie in [0, total].
double cosine_lr(int64_t step, double base_lr, int64_t total_steps);

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t entries_checked = 0;
};

// Central-difference check of d(loss)/d(param) for every trainable entry
// (seeded subsample above `subsample_threshold` entries). `loss_fn` must
// rebuild the graph from the current parameter values and return the scalar
// loss.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<const Tensor> params, double eps = 1e-5,
                           int64_t subsample_threshold = 10000,
                           int64_t subsample_count = 256,
                           uint64_t subsample_seed = 0x5eed);

}  // namespace sen
