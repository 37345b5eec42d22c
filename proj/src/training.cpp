#include "sen/training.hpp"

#include <cmath>

namespace sen {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.defined()) throw ShapeError("adamw: undefined parameter");
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

bool AdamW::tracks(const Tensor& t) const {
  for (const Tensor& p : params_)
    if (p.node() == t.node()) return true;
  return false;
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad())
      throw NumericError("adamw: parameter " + std::to_string(i) +
                         " has no gradient; run backward first");
    std::span<double> w = p.values_mut();
    std::span<const double> g = p.grad();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (size_t j = 0; j < w.size(); ++j) {
      // decoupled decay first, then the bias-corrected Adam update
      w[j] -= lr * cfg_.weight_decay * w[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double cosine_lr(int64_t step, double base_lr, int64_t total_steps) {
  if (total_steps <= 0)
    throw ConfigError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw ConfigError("cosine_lr: step " + std::to_string(step) +
                      " outside [0, " + std::to_string(total_steps) + "]");
  return base_lr * 0.5 *
         (1.0 + std::cos(3.14159265358979323846 * double(step) /
                         double(total_steps)));
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<const Tensor> params, double eps,
                           int64_t subsample_threshold,
                           int64_t subsample_count, uint64_t subsample_seed) {
  // analytic gradients at the current point
  for (const Tensor& p : params) {
    Tensor(p).zero_grad();
  }
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item()))
    throw NumericError("grad_check: non-finite loss " +
                       std::to_string(loss.item()));
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }

  int64_t total_entries = 0;
  for (const Tensor& p : params) total_entries += p.numel();

  // entries to probe: everything, or a seeded subsample of flat indices
  std::vector<int64_t> selected;
  if (total_entries > subsample_threshold) {
    Rng rng(subsample_seed);
    selected.reserve(static_cast<size_t>(subsample_count));
    for (int64_t i = 0; i < subsample_count; ++i)
      selected.push_back(rng.uniform_int(total_entries));
  } else {
    selected.resize(static_cast<size_t>(total_entries));
    for (int64_t i = 0; i < total_entries; ++i) selected[size_t(i)] = i;
  }

  GradCheckResult result;
  for (int64_t flat : selected) {
    // locate the owning parameter
    size_t pi = 0;
    int64_t offset = flat;
    while (offset >= params[pi].numel()) {
      offset -= params[pi].numel();
      ++pi;
    }
    Tensor p = params[pi];
    double* slot = &p.values_mut()[size_t(offset)];
    const double saved = *slot;
    *slot = saved + eps;
    const double up = loss_fn().item();
    *slot = saved - eps;
    const double down = loss_fn().item();
    *slot = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("grad_check: non-finite loss during probe");
    const double fd = (up - down) / (2.0 * eps);
    const double an = analytic[pi][size_t(offset)];
    const double rel = std::abs(an - fd) / (std::abs(fd) + 1e-8);
    result.max_rel_err = std::max(result.max_rel_err, rel);
    ++result.entries_checked;
  }
  return result;
}

}  // namespace sen
