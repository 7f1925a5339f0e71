#include "ldvi/annealing.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ldvi {

using ad::Var;

MeanFieldGaussian::MeanFieldGaussian(const Var& mean, const Var& raw_scale) : mean_(mean) {
  if (mean.size() != raw_scale.size()) {
    throw ad::ShapeError("q: mean and raw scale lengths differ");
  }
  ad::Tape& t = *mean.tape();
  sigma_ = ad::softplus(raw_scale);
  const std::vector<double> minus_ones(mean.size(), -1.0);
  neg_inv_var_ = t.lift(minus_ones) / ad::square(sigma_);
  const double d = static_cast<double>(mean.size());
  log_norm_ = t.lift(-0.5 * d * std::log(2.0 * std::numbers::pi)) - ad::sum(ad::log(sigma_));
}

Var MeanFieldGaussian::log_pdf(const Var& z) const {
  const Var r = z - mean_;
  return log_norm_ + ad::scale(0.5, ad::dot(neg_inv_var_, r * r));
}

Var MeanFieldGaussian::grad_log_pdf(const Var& z) const { return neg_inv_var_ * (z - mean_); }

Var MeanFieldGaussian::sample(const Var& eps) const { return mean_ + sigma_ * eps; }

AnnealingSchedule::AnnealingSchedule(const Var& raw) {
  ad::Tape& t = *raw.tape();
  const std::size_t K = raw.size();
  beta_.reserve(K + 1);
  beta_.push_back(t.lift(0.0));
  if (K > 1) {
    const Var inc = ad::softplus(raw);
    const Var total = ad::sum(inc);
    Var cum = ad::slice(inc, 0, 1);
    for (std::size_t k = 1; k < K; ++k) {
      beta_.push_back(cum / total);
      if (k + 1 < K) cum = cum + ad::slice(inc, k, 1);
    }
  }
  beta_.push_back(t.lift(1.0));
}

const Var& AnnealingSchedule::beta(std::size_t k) const {
  if (k >= beta_.size()) {
    throw std::out_of_range("bridge index " + std::to_string(k) + " outside 0.." +
                            std::to_string(beta_.size() - 1));
  }
  return beta_[k];
}

std::vector<double> schedule_betas(std::span<const double> raw) {
  const std::size_t K = raw.size();
  if (K == 0) throw std::invalid_argument("schedule needs at least one increment");
  std::vector<double> inc(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double x = raw[k];
    inc[k] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    total += inc[k];
  }
  std::vector<double> beta(K + 1);
  beta[0] = 0.0;
  double cum = 0.0;
  for (std::size_t k = 1; k < K; ++k) {
    cum += inc[k - 1];
    beta[k] = cum / total;
  }
  beta[K] = 1.0;
  return beta;
}

std::vector<double> uniform_schedule_raw(std::size_t K) { return std::vector<double>(K, 0.0); }

Var bridge_logdensity(std::size_t k, const Var& z, const MeanFieldGaussian& q,
                      const TargetModel& target, const AnnealingSchedule& sched) {
  const Var& beta = sched.beta(k);
  if (k == 0) return q.log_pdf(z);
  if (k == sched.K()) return target.log_density(z);
  const Var lq = q.log_pdf(z);
  return lq + beta * (target.log_density(z) - lq);
}

Var bridge_grad_from(std::size_t k, const AnnealingSchedule& sched, const Var& grad_q,
                     const Var& grad_p) {
  const Var& beta = sched.beta(k);
  if (k == 0) return grad_q;
  if (k == sched.K()) return grad_p;
  return grad_q + ad::scale(beta, grad_p - grad_q);
}

Var bridge_grad(std::size_t k, const Var& z, const MeanFieldGaussian& q, const TargetModel& target,
                const AnnealingSchedule& sched) {
  sched.beta(k);
  if (k == 0) return q.grad_log_pdf(z);
  if (k == sched.K()) return target.grad_log_density(z);
  return bridge_grad_from(k, sched, q.grad_log_pdf(z), target.grad_log_density(z));
}

}  // namespace ldvi
