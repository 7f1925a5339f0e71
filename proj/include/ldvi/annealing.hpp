#pragma once

// Initial mean-field approximation q and the geometric bridge
// π_k ∝ q^{1-β_k} p̄^{β_k} with a learnable, strictly increasing schedule.

#include <span>
#include <vector>

#include "ldvi/diffengine.hpp"
#include "ldvi/targets.hpp"

namespace ldvi {

/// q(z) = N(μ, diag σ²) with σ = softplus(u). Derived quantities are recorded
/// once per tape at construction.
class MeanFieldGaussian {
 public:
  MeanFieldGaussian(const ad::Var& mean, const ad::Var& raw_scale);

  const ad::Var& mean() const { return mean_; }
  const ad::Var& scale() const { return sigma_; }
  std::size_t dim() const { return mean_.size(); }

  ad::Var log_pdf(const ad::Var& z) const;
  ad::Var grad_log_pdf(const ad::Var& z) const;
  /// μ + σ ⊙ ε.
  ad::Var sample(const ad::Var& eps) const;

 private:
  ad::Var mean_;
  ad::Var sigma_;
  ad::Var neg_inv_var_;
  ad::Var log_norm_;
};

/// β_0 = 0 < β_1 < ... < β_{K-1} < β_K = 1 from K raw increments
/// β_k = Σ_{j≤k} softplus(w_j) / Σ_{j≤K} softplus(w_j). The endpoints are
/// exact constants.
class AnnealingSchedule {
 public:
  explicit AnnealingSchedule(const ad::Var& raw);

  std::size_t K() const { return beta_.size() - 1; }
  const ad::Var& beta(std::size_t k) const;

 private:
  std::vector<ad::Var> beta_;
};

/// Plain-double version of the schedule, returns β_0..β_K.
std::vector<double> schedule_betas(std::span<const double> raw);

/// Raw increments giving a uniform schedule.
std::vector<double> uniform_schedule_raw(std::size_t K);

ad::Var bridge_logdensity(std::size_t k, const ad::Var& z, const MeanFieldGaussian& q,
                          const TargetModel& target, const AnnealingSchedule& sched);

ad::Var bridge_grad(std::size_t k, const ad::Var& z, const MeanFieldGaussian& q,
                    const TargetModel& target, const AnnealingSchedule& sched);

/// (1-β_k)·grad_q + β_k·grad_p from gradients already on the tape.
ad::Var bridge_grad_from(std::size_t k, const AnnealingSchedule& sched, const ad::Var& grad_q,
                         const ad::Var& grad_p);

}  // namespace ldvi
