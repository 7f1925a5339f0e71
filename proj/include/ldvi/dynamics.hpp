#pragma once

// Transition kernels of the discretized underdamped Langevin diffusion:
// leapfrog and its inverse, momentum resampling kernels (forward and
// backward), the splitting-scheme transition with its log-ratio, and the
// Euler-Maruyama transition with its log-ratio.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "ldvi/diffengine.hpp"

namespace ldvi {

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::optional<std::size_t> step = std::nullopt);
  std::optional<std::size_t> step() const { return step_; }

 private:
  std::optional<std::size_t> step_;
};

struct PhasePoint {
  ad::Var z;
  ad::Var rho;
};

/// ∇log π_k evaluated on the tape at a position.
using GradientFn = std::function<ad::Var(const ad::Var& z)>;

/// ρ'' = ρ + δ/2 ∇(z); z⁺ = z + δ ρ''; ρ⁺ = ρ'' + δ/2 ∇(z⁺).
PhasePoint leapfrog(const PhasePoint& p, const ad::Var& delta, const GradientFn& grad);
/// Exact algebraic inverse of leapfrog for the same gradient field.
PhasePoint leapfrog_inverse(const PhasePoint& p, const ad::Var& delta, const GradientFn& grad);

enum class KernelKind {
  exact_ou,                 // N(ηρ, (1-η²)I)
  forward_em,               // N(ρ(1-γδ), 2γδI)
  backward_exact_no_score,  // N(ηρ', (1-η²)I)
  backward_exact_ou,        // N(ηρ' + 2(1-η)s, (1-η²)I), exact OU with a frozen score drift
  backward_em,              // N(ρ'(1-γδ) + 2γδ s, 2γδI)
  mcd_backward,             // N(2s, I)
};

const char* kernel_name(KernelKind kind);

struct MomentumKernel {
  KernelKind kind = KernelKind::exact_ou;
  ad::Var eta;    // exact kinds
  ad::Var gamma;  // Euler-Maruyama kinds
  ad::Var delta;  // Euler-Maruyama kinds

  bool needs_score() const;
  bool is_backward() const;
};

MomentumKernel exact_ou_kernel(const ad::Var& eta);
MomentumKernel forward_em_kernel(const ad::Var& gamma, const ad::Var& delta);
MomentumKernel backward_exact_no_score_kernel(const ad::Var& eta);
MomentumKernel backward_exact_ou_kernel(const ad::Var& eta);
MomentumKernel backward_em_kernel(const ad::Var& gamma, const ad::Var& delta);
MomentumKernel mcd_backward_kernel();

struct Resampled {
  ad::Var rho;
  ad::Var log_prob;
};

/// ρ' = mean(ρ) + sd·ε and log m_F(ρ'|ρ).
Resampled mF_sample_and_logpdf(const MomentumKernel& kernel, const ad::Var& rho, const ad::Var& eps);
ad::Var mF_logpdf(const MomentumKernel& kernel, const ad::Var& rho_prime, const ad::Var& rho);

/// log m_B(ρ_k | ρ'_k, z_k). `score` is s evaluated at (k, z_k, ρ'_k) or the
/// position-only variant; it must be valid for score-dependent kinds.
ad::Var mB_logpdf(const MomentumKernel& kernel, const ad::Var& rho_k, const ad::Var& rho_prime,
                  const ad::Var& score = {});

struct ForwardStep {
  PhasePoint next;
  ad::Var rho_prime;
  ad::Var log_mF;
};

/// Momentum resampling followed by a leapfrog step.
ForwardStep forward_transition(const PhasePoint& p, const MomentumKernel& kernel, const ad::Var& eps,
                               const ad::Var& delta, const GradientFn& grad);

/// log m_B(ρ_k|ρ'_k, z_k) - log m_F(ρ'_k|ρ_k).
ad::Var log_ratio_step(const PhasePoint& p, const ad::Var& rho_prime, const MomentumKernel& forward,
                       const MomentumKernel& backward, const ad::Var& score = {});

/// ρ_{k+1} = ρ_k(1-γδ) + δ∇_k(z_k) + √(2γδ) ε;  z_{k+1} = z_k + δ ρ_{k+1}.
PhasePoint em_forward_transition(const PhasePoint& p, const ad::Var& gamma, const ad::Var& delta,
                                 const ad::Var& grad_at_z, const ad::Var& eps);

/// log N(ρ_k | ρ_{k+1}(1-γδ) - δ∇_k(z_k) + 2γδ s, 2γδ)
///   - log N(ρ_{k+1} | ρ_k(1-γδ) + δ∇_k(z_k), 2γδ).
/// An invalid `score` means s ≡ 0.
ad::Var em_log_ratio_step(const PhasePoint& p, const PhasePoint& next, const ad::Var& gamma,
                          const ad::Var& delta, const ad::Var& grad_at_z, const ad::Var& score = {});

}  // namespace ldvi
