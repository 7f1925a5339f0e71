#include "ldvi/dynamics.hpp"

#include <cmath>

namespace ldvi {

using ad::Var;

NonFiniteError::NonFiniteError(const std::string& what, std::optional<std::size_t> step)
    : std::runtime_error(step ? what + " at step k=" + std::to_string(*step) : what), step_(step) {}

namespace {

void require_finite(const Var& v, const char* what) {
  for (double x : v.value()) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite ") + what);
  }
}

Var checked_grad(const GradientFn& grad, const Var& z) {
  Var g = grad(z);
  if (g.size() != z.size()) throw ad::ShapeError("gradient length does not match position");
  require_finite(g, "gradient");
  return g;
}

Var one_minus(const Var& x) { return x.tape()->lift(1.0) - x; }

// Variance 1 - η² of the exact Ornstein-Uhlenbeck refresh.
Var ou_variance(const Var& eta) {
  const Var var = one_minus(ad::square(eta));
  if (!(var.scalar() > 0.0)) throw ad::DomainError(ad::Op::sqrt, var.scalar());
  return var;
}

// 2γδ with the zero-variance case rejected.
Var em_variance(const Var& gamma, const Var& delta) {
  const Var gd = gamma * delta;
  if (!(gd.scalar() > 0.0)) throw ad::DomainError(ad::Op::sqrt, gd.scalar());
  return ad::scale(2.0, gd);
}

void require_score(const MomentumKernel& k, const Var& score, const Var& rho) {
  if (!score.valid()) {
    throw std::invalid_argument(std::string("kernel '") + kernel_name(k.kind) +
                                "' needs a score network output");
  }
  if (score.size() != rho.size()) throw ad::ShapeError("score length does not match momentum");
}

}  // namespace

const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::exact_ou: return "exact_ou";
    case KernelKind::forward_em: return "forward_em";
    case KernelKind::backward_exact_no_score: return "backward_exact_no_score";
    case KernelKind::backward_exact_ou: return "backward_exact_ou";
    case KernelKind::backward_em: return "backward_em";
    case KernelKind::mcd_backward: return "mcd_backward";
  }
  return "unknown";
}

bool MomentumKernel::needs_score() const {
  return kind == KernelKind::backward_exact_ou || kind == KernelKind::backward_em ||
         kind == KernelKind::mcd_backward;
}

bool MomentumKernel::is_backward() const {
  return kind != KernelKind::exact_ou && kind != KernelKind::forward_em;
}

MomentumKernel exact_ou_kernel(const Var& eta) { return {KernelKind::exact_ou, eta, {}, {}}; }

MomentumKernel forward_em_kernel(const Var& gamma, const Var& delta) {
  return {KernelKind::forward_em, {}, gamma, delta};
}

MomentumKernel backward_exact_no_score_kernel(const Var& eta) {
  return {KernelKind::backward_exact_no_score, eta, {}, {}};
}

MomentumKernel backward_exact_ou_kernel(const Var& eta) {
  return {KernelKind::backward_exact_ou, eta, {}, {}};
}

MomentumKernel backward_em_kernel(const Var& gamma, const Var& delta) {
  return {KernelKind::backward_em, {}, gamma, delta};
}

MomentumKernel mcd_backward_kernel() { return {KernelKind::mcd_backward, {}, {}, {}}; }

// ---------------------------------------------------------------------------

PhasePoint leapfrog(const PhasePoint& p, const Var& delta, const GradientFn& grad) {
  const Var half = ad::scale(0.5, delta);
  const Var rho_half = p.rho + ad::scale(half, checked_grad(grad, p.z));
  const Var z_next = p.z + ad::scale(delta, rho_half);
  const Var rho_next = rho_half + ad::scale(half, checked_grad(grad, z_next));
  return {z_next, rho_next};
}

PhasePoint leapfrog_inverse(const PhasePoint& p, const Var& delta, const GradientFn& grad) {
  const Var half = ad::scale(0.5, delta);
  const Var rho_half = p.rho - ad::scale(half, checked_grad(grad, p.z));
  const Var z_prev = p.z - ad::scale(delta, rho_half);
  const Var rho_prev = rho_half - ad::scale(half, checked_grad(grad, z_prev));
  return {z_prev, rho_prev};
}

// ---------------------------------------------------------------------------

Resampled mF_sample_and_logpdf(const MomentumKernel& kernel, const Var& rho, const Var& eps) {
  if (eps.size() != rho.size()) throw ad::ShapeError("noise length does not match momentum");
  Var mean;
  Var var;
  switch (kernel.kind) {
    case KernelKind::exact_ou:
      var = ou_variance(kernel.eta);
      mean = ad::scale(kernel.eta, rho);
      break;
    case KernelKind::forward_em:
      var = em_variance(kernel.gamma, kernel.delta);
      mean = rho - ad::scale(kernel.gamma * kernel.delta, rho);
      break;
    default:
      throw std::invalid_argument(std::string("'") + kernel_name(kernel.kind) +
                                  "' is not a forward kernel");
  }
  const Var rho_prime = mean + ad::scale(ad::sqrt(var), eps);
  return {rho_prime, ad::gaussian_logpdf(rho_prime, mean, var)};
}

Var mF_logpdf(const MomentumKernel& kernel, const Var& rho_prime, const Var& rho) {
  switch (kernel.kind) {
    case KernelKind::exact_ou:
      return ad::gaussian_logpdf(rho_prime, ad::scale(kernel.eta, rho), ou_variance(kernel.eta));
    case KernelKind::forward_em:
      return ad::gaussian_logpdf(rho_prime, rho - ad::scale(kernel.gamma * kernel.delta, rho),
                                 em_variance(kernel.gamma, kernel.delta));
    default:
      throw std::invalid_argument(std::string("'") + kernel_name(kernel.kind) +
                                  "' is not a forward kernel");
  }
}

Var mB_logpdf(const MomentumKernel& kernel, const Var& rho_k, const Var& rho_prime, const Var& score) {
  if (rho_k.size() != rho_prime.size()) throw ad::ShapeError("momentum lengths differ");
  switch (kernel.kind) {
    case KernelKind::backward_exact_no_score:
      return ad::gaussian_logpdf(rho_k, ad::scale(kernel.eta, rho_prime), ou_variance(kernel.eta));
    case KernelKind::backward_exact_ou: {
      require_score(kernel, score, rho_k);
      const Var mean = ad::scale(kernel.eta, rho_prime) + ad::scale(ad::scale(2.0, one_minus(kernel.eta)), score);
      return ad::gaussian_logpdf(rho_k, mean, ou_variance(kernel.eta));
    }
    case KernelKind::backward_em: {
      require_score(kernel, score, rho_k);
      const Var var = em_variance(kernel.gamma, kernel.delta);
      const Var gd = kernel.gamma * kernel.delta;
      const Var mean = rho_prime - ad::scale(gd, rho_prime) + ad::scale(var, score);
      return ad::gaussian_logpdf(rho_k, mean, var);
    }
    case KernelKind::mcd_backward:
      require_score(kernel, score, rho_k);
      return ad::gaussian_logpdf(rho_k, ad::scale(2.0, score), 1.0);
    default:
      throw std::invalid_argument(std::string("'") + kernel_name(kernel.kind) +
                                  "' is not a backward kernel");
  }
}

ForwardStep forward_transition(const PhasePoint& p, const MomentumKernel& kernel, const Var& eps,
                               const Var& delta, const GradientFn& grad) {
  const Resampled r = mF_sample_and_logpdf(kernel, p.rho, eps);
  const PhasePoint next = leapfrog({p.z, r.rho}, delta, grad);
  return {next, r.rho, r.log_prob};
}

Var log_ratio_step(const PhasePoint& p, const Var& rho_prime, const MomentumKernel& forward,
                   const MomentumKernel& backward, const Var& score) {
  return mB_logpdf(backward, p.rho, rho_prime, score) - mF_logpdf(forward, rho_prime, p.rho);
}

// ---------------------------------------------------------------------------

PhasePoint em_forward_transition(const PhasePoint& p, const Var& gamma, const Var& delta,
                                 const Var& grad_at_z, const Var& eps) {
  require_finite(grad_at_z, "gradient");
  const Var var = em_variance(gamma, delta);
  const Var gd = gamma * delta;
  const Var rho_next = p.rho - ad::scale(gd, p.rho) + ad::scale(delta, grad_at_z) +
                       ad::scale(ad::sqrt(var), eps);
  const Var z_next = p.z + ad::scale(delta, rho_next);
  return {z_next, rho_next};
}

Var em_log_ratio_step(const PhasePoint& p, const PhasePoint& next, const Var& gamma, const Var& delta,
                      const Var& grad_at_z, const Var& score) {
  const Var var = em_variance(gamma, delta);
  const Var gd = gamma * delta;
  const Var drift = ad::scale(delta, grad_at_z);
  Var back_mean = next.rho - ad::scale(gd, next.rho) - drift;
  if (score.valid()) {
    if (score.size() != p.rho.size()) throw ad::ShapeError("score length does not match momentum");
    back_mean = back_mean + ad::scale(var, score);
  }
  const Var fwd_mean = p.rho - ad::scale(gd, p.rho) + drift;
  return ad::gaussian_logpdf(p.rho, back_mean, var) - ad::gaussian_logpdf(next.rho, fwd_mean, var);
}

}  // namespace ldvi
