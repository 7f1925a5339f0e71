#pragma once

// Checks of the chain estimator against the plain reference implementation:
// recovery identities between method configurations, the per-step
// density-composition oracle for the transition ratio, and finite-difference
// gradient fidelity. Shared by the unit and acceptance suites, which differ
// only in how many random cases they draw.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "ldvi/estimator.hpp"
#include "reference.hpp"
#include "support.hpp"

namespace ldvi::checks {

using reference::Vec;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline GaussianToyTarget random_toy(std::mt19937_64& rng, std::size_t dim) {
  return GaussianToyTarget(testing::uniform_vector(rng, dim, -2.0, 2.0),
                           testing::uniform_vector(rng, dim, 0.3, 3.0));
}

/// Fresh parameters for `config` with every block moved away from its
/// initial value: q, step, schedule, friction, η and (scaled by
/// `score_scale`, zero keeps the zero output layer) the score network.
inline ParameterSet random_parameters(const MethodConfig& config, std::size_t dim, std::size_t K,
                                      std::mt19937_64& rng, double score_scale, std::size_t hidden = 8) {
  InitOptions opts;
  opts.step = uniform(rng, 0.05, 0.5);
  opts.friction = uniform(rng, 0.3, 3.0);
  opts.hidden = hidden;
  opts.seed = rng();
  opts.q_mean = testing::uniform_vector(rng, dim, -1.0, 1.0);
  opts.q_scale = testing::uniform_vector(rng, dim, 0.4, 1.5);
  ParameterSet p = init_parameters(config, dim, K, opts);
  if (p.contains("schedule.raw")) {
    for (double& w : p.at("schedule.raw").values) w = uniform(rng, -1.0, 1.0);
  }
  if (p.contains("eta.raw")) p.at("eta.raw").values[0] = uniform(rng, -2.0, 2.0);
  if (score_scale > 0.0 && has_score_net(p)) {
    for (const auto& b : p.blocks()) {
      if (parameter_group(b.name) != "score") continue;
      for (double& x : p.at(b.name).values) x = uniform(rng, -score_scale, score_scale);
    }
  }
  return p;
}

inline void copy_blocks(const ParameterSet& from, ParameterSet& to) {
  for (const auto& b : from.blocks()) {
    if (to.contains(b.name)) to.at(b.name).values = b.values;
  }
}

inline reference::Noise to_reference(const NoiseBundle& nb) {
  reference::Noise n;
  n.z0 = nb.z0;
  n.rho0 = nb.rho0;
  for (std::size_t k = 1; k < nb.K; ++k) {
    const auto s = nb.step(k);
    n.steps.emplace_back(s.begin(), s.end());
  }
  return n;
}

inline ElboEstimate run_chain(const MethodConfig& config, const ParameterSet& params, const TargetModel& target,
                              const NoiseBundle& noise, ad::Tape& tape, bool trace = false) {
  const LiftedParams lifted = lift_parameters(tape, params, config, {});
  return estimate_elbo(config, lifted, target, noise, trace);
}

inline double elbo(const MethodConfig& config, const ParameterSet& params, const TargetModel& target,
                   const NoiseBundle& noise) {
  ad::Tape tape;
  return run_chain(config, params, target, noise, tape).value.scalar();
}

/// LDVI with the exact OU refresh in both directions and a score network
/// whose output layer is zero, so s ≡ 0.
inline MethodConfig ldvi_exact_zero_score(EtaMode eta) {
  MethodConfig c = method_config(Method::ldvi);
  c.forward = KernelKind::exact_ou;
  c.backward = KernelKind::backward_exact_ou;
  c.eta = eta;
  return c;
}

struct RecoveryResult {
  double vs_named = 0.0;      // max |L_ldvi-restricted - L_named|
  double vs_reference = 0.0;  // max |L_named - L_reference|
  double per_step = 0.0;      // max per-step ratio error against the reference term
  int cases = 0;
};

/// ULA from LDVI: same noise, matched q/step/schedule, η = 0, s ≡ 0.
inline RecoveryResult check_ula_recovery(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RecoveryResult r;
  const MethodConfig ula = method_config(Method::ula);
  const MethodConfig ldvi = ldvi_exact_zero_score(EtaMode::zero);
  for (int i = 0; i < n; ++i) {
    const std::size_t D = 1 + rng() % 4, K = 2 + rng() % 7;
    const GaussianToyTarget target = random_toy(rng, D);
    const ParameterSet pu = random_parameters(ula, D, K, rng, 0.0);
    ParameterSet pl = random_parameters(ldvi, D, K, rng, 0.0);
    copy_blocks(pu, pl);
    const NoiseBundle noise = draw_noise(seed, 0, static_cast<std::uint64_t>(i), D, K);
    const double lu = elbo(ula, pu, target, noise);
    const double ll = elbo(ldvi, pl, target, noise);
    const auto model = reference::make_model(pu, target.mean(), target.var(), 0);
    r.vs_named = std::max(r.vs_named, std::abs(ll - lu));
    r.vs_reference = std::max(r.vs_reference, std::abs(lu - reference::ula_elbo(model, to_reference(noise))));
    ++r.cases;
  }
  return r;
}

/// UHA from LDVI: same noise, matched q/step/schedule/η, s ≡ 0.
inline RecoveryResult check_uha_recovery(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RecoveryResult r;
  const MethodConfig uha = method_config(Method::uha);
  const MethodConfig ldvi = ldvi_exact_zero_score(EtaMode::learnable);
  for (int i = 0; i < n; ++i) {
    const std::size_t D = 1 + rng() % 4, K = 2 + rng() % 7;
    const GaussianToyTarget target = random_toy(rng, D);
    const ParameterSet pu = random_parameters(uha, D, K, rng, 0.0);
    ParameterSet pl = random_parameters(ldvi, D, K, rng, 0.0);
    copy_blocks(pu, pl);
    const NoiseBundle noise = draw_noise(seed, 0, static_cast<std::uint64_t>(i), D, K);
    ad::Tape tape;
    const ElboEstimate eu = run_chain(uha, pu, target, noise, tape, true);
    const double ll = elbo(ldvi, pl, target, noise);
    const auto model = reference::make_model(pu, target.mean(), target.var(), 1);
    r.vs_named = std::max(r.vs_named, std::abs(ll - eu.value.scalar()));
    r.vs_reference =
        std::max(r.vs_reference, std::abs(eu.value.scalar() - reference::uha_elbo(model, to_reference(noise))));
    for (const StepTrace& s : eu.trace) {
      r.per_step = std::max(r.per_step, std::abs(s.log_ratio - reference::uha_step_ratio(model.eta, s.rho, s.rho_prime)));
    }
    ++r.cases;
  }
  return r;
}

/// Score-mean configuration with a random position-only score: each step's
/// ratio against log N(ρ_k | 2s̃(k/K, z_k)) - log N(ρ'_k | 0), and the whole
/// estimate against the telescoped overdamped form.
inline RecoveryResult check_mcd_terms(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RecoveryResult r;
  const MethodConfig mcd = method_config(Method::mcd);
  for (int i = 0; i < n; ++i) {
    const std::size_t D = 1 + rng() % 4, K = 2 + rng() % 7;
    const GaussianToyTarget target = random_toy(rng, D);
    const ParameterSet p = random_parameters(mcd, D, K, rng, 0.4);
    const NoiseBundle noise = draw_noise(seed, 0, static_cast<std::uint64_t>(i), D, K);
    ad::Tape tape;
    const ElboEstimate e = run_chain(mcd, p, target, noise, tape, true);
    const auto model = reference::make_model(p, target.mean(), target.var(), 0);
    for (std::size_t k = 1; k < K; ++k) {
      const StepTrace& s = e.trace[k - 1];
      r.per_step = std::max(r.per_step,
                            std::abs(s.log_ratio - reference::mcd_step_ratio(model, k, s.z, s.rho, s.rho_prime)));
    }
    r.vs_reference =
        std::max(r.vs_reference, std::abs(e.value.scalar() - reference::mcd_elbo(model, to_reference(noise))));
    ++r.cases;
  }
  return r;
}

/// Euler-Maruyama variants against the reference chain.
inline double check_em_reference(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool with_score = i % 2 == 1;
    const MethodConfig c = method_config(with_score ? Method::ldvi_em : Method::uha_em);
    const std::size_t D = 1 + rng() % 4, K = 2 + rng() % 7;
    const GaussianToyTarget target = random_toy(rng, D);
    const ParameterSet p = random_parameters(c, D, K, rng, 0.4);
    const NoiseBundle noise = draw_noise(seed, 0, static_cast<std::uint64_t>(i), D, K);
    const auto model = reference::make_model(p, target.mean(), target.var(), 0);
    worst = std::max(worst, std::abs(elbo(c, p, target, noise) -
                                     reference::em_elbo(model, to_reference(noise), with_score)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Density composition for a single transition.
//
// Forward: (ρ'|ρ_k) ~ m_F, z' ~ N(z_k, Δ), then (z_{k+1}, ρ_{k+1}) = τ(z', ρ').
// Backward: (z', ρ') = τ⁻¹(z_{k+1}, ρ_{k+1}), then z_k ~ N(z', Δ), ρ_k ~ m_B.
// F is the pushforward density m_F·N_Δ / |det ∂τ| at the preimage, B is the
// product of the two Gaussians. The preimage is found by Newton's method on
// the forward map and the Jacobian by central differences, so neither relies
// on the leapfrog inverse under test.

struct Composition {
  double log_ratio = 0.0;
  double log_det = 0.0;
  double preimage_gap = 0.0;  // |z' - z_k|
};

inline Vec tau(const reference::Model& m, std::size_t k, const Vec& x) {
  const std::size_t D = x.size() / 2;
  Vec z(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(D)), rho(x.begin() + static_cast<std::ptrdiff_t>(D), x.end());
  m.leapfrog(k, z, rho);
  z.insert(z.end(), rho.begin(), rho.end());
  return z;
}

inline std::vector<Vec> jacobian(const reference::Model& m, std::size_t k, const Vec& x) {
  const std::size_t n = x.size();
  std::vector<Vec> J(n, Vec(n));
  const double h = 1e-5;
  for (std::size_t j = 0; j < n; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Vec fp = tau(m, k, xp), fm = tau(m, k, xm);
    for (std::size_t i = 0; i < n; ++i) J[i][j] = (fp[i] - fm[i]) / (2 * h);
  }
  return J;
}

inline Vec solve(std::vector<Vec> A, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t q = c; q < n; ++q) A[r][q] -= f * A[c][q];
      b[r] -= f * b[c];
    }
  }
  Vec x(n);
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t q = c + 1; q < n; ++q) s -= A[c][q] * x[q];
    x[c] = s / A[c][c];
  }
  return x;
}

inline double log_abs_det(std::vector<Vec> A) {
  const std::size_t n = A.size();
  double s = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    s += std::log(std::abs(A[c][c]));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t q = c; q < n; ++q) A[r][q] -= f * A[c][q];
    }
  }
  return s;
}

/// log m_F(ρ' | ρ) and log m_B(ρ_k | ρ', z_k) for the kernels of `method`.
inline double ref_log_mF(Method method, const reference::Model& m, const Vec& rho_prime, const Vec& rho) {
  if (method == Method::ldvi) {
    const double gd = m.gamma * m.delta;
    return reference::log_normal(rho_prime, reference::scaled(1.0 - gd, rho), 2.0 * gd);
  }
  return reference::log_normal(rho_prime, reference::scaled(m.eta, rho), 1.0 - m.eta * m.eta);
}

inline double ref_log_mB(Method method, const reference::Model& m, std::size_t k, const Vec& rho_k,
                         const Vec& rho_prime, const Vec& z_k) {
  const double t = static_cast<double>(k) / static_cast<double>(m.K());
  switch (method) {
    case Method::ldvi: {
      const double gd = m.gamma * m.delta;
      const Vec mean = reference::axpy(2.0 * gd, m.score(t, z_k, rho_prime), reference::scaled(1.0 - gd, rho_prime));
      return reference::log_normal(rho_k, mean, 2.0 * gd);
    }
    case Method::mcd:
      return reference::log_normal(rho_k, reference::scaled(2.0, m.score.position(t, z_k)), 1.0);
    default:
      return reference::log_normal(rho_k, reference::scaled(m.eta, rho_prime), 1.0 - m.eta * m.eta);
  }
}

inline Composition compose(Method method, const reference::Model& m, std::size_t k, const StepTrace& s,
                           double smoothing) {
  const std::size_t D = s.z.size();
  Vec target = s.z_next;
  target.insert(target.end(), s.rho_next.begin(), s.rho_next.end());
  // Newton from the forward state's position and a zero momentum guess.
  Vec x = s.z;
  x.resize(2 * D, 0.0);
  for (int it = 0; it < 50; ++it) {
    Vec f = tau(m, k, x);
    double res = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      f[i] -= target[i];
      res = std::max(res, std::abs(f[i]));
    }
    if (res < 1e-15) break;
    const Vec dx = solve(jacobian(m, k, x), f);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dx[i];
  }
  const Vec zp(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(D));
  const Vec rp(x.begin() + static_cast<std::ptrdiff_t>(D), x.end());
  Composition c;
  c.log_det = log_abs_det(jacobian(m, k, x));
  for (std::size_t i = 0; i < D; ++i) c.preimage_gap = std::max(c.preimage_gap, std::abs(zp[i] - s.z[i]));
  const double log_F = ref_log_mF(method, m, rp, s.rho) + reference::log_normal(zp, s.z, smoothing) - c.log_det;
  const double log_B = reference::log_normal(s.z, zp, smoothing) + ref_log_mB(method, m, k, s.rho, rp, s.z);
  c.log_ratio = log_B - log_F;
  return c;
}

struct CompositionResult {
  double worst_ratio = 0.0;  // max |implemented - composed| per step
  double worst_log_det = 0.0;
  double worst_gap = 0.0;
  int steps = 0;
};

/// Random 1-D and 2-D chains with K ≤ 3 for the splitting-scheme methods.
inline CompositionResult check_composition(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CompositionResult r;
  const Method methods[] = {Method::ula, Method::mcd, Method::uha, Method::ldvi};
  for (int i = 0; i < n; ++i) {
    const Method method = methods[i % 4];
    const MethodConfig c = method_config(method);
    const std::size_t D = 1 + static_cast<std::size_t>(i / 4) % 2, K = 2 + rng() % 2;
    const GaussianToyTarget target = random_toy(rng, D);
    const ParameterSet p = random_parameters(c, D, K, rng, 0.4);
    const NoiseBundle noise = draw_noise(seed, 0, static_cast<std::uint64_t>(i), D, K);
    ad::Tape tape;
    const ElboEstimate e = run_chain(c, p, target, noise, tape, true);
    const int eta_mode = method == Method::uha ? 1 : method == Method::ldvi ? 2 : 0;
    const auto model = reference::make_model(p, target.mean(), target.var(), eta_mode);
    for (std::size_t k = 1; k < K; ++k) {
      const Composition comp = compose(method, model, k, e.trace[k - 1], 1e-3);
      r.worst_ratio = std::max(r.worst_ratio, std::abs(e.trace[k - 1].log_ratio - comp.log_ratio));
      r.worst_log_det = std::max(r.worst_log_det, std::abs(comp.log_det));
      r.worst_gap = std::max(r.worst_gap, comp.preimage_gap);
      ++r.steps;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

struct GradientResult {
  double worst_rel = 0.0;
  std::string worst_block;
  std::size_t checked = 0;
};

/// AD gradient of one ELBO estimate against central differences over every
/// trainable scalar. Relative error |a - f| / max(|a|, |f|, floor).
inline GradientResult check_gradient(const MethodConfig& config, const TargetModel& target, const ParameterSet& p,
                                     const NoiseBundle& noise, double h, double floor) {
  const auto groups = config.trainable_groups();
  ad::Tape tape;
  const LiftedParams lifted = lift_parameters(tape, p, config, groups);
  const ElboEstimate e = estimate_elbo(config, lifted, target, noise);
  tape.backward(e.value);
  GradientResult r;
  for (const auto& [name, leaf] : lifted.trainable) {
    const auto adj = tape.adjoint(leaf);
    for (std::size_t j = 0; j < adj.size(); ++j) {
      auto eval = [&](double x) {
        ParameterSet q = p;
        q.at(name).values[j] = x;
        return elbo(config, q, target, noise);
      };
      const double x0 = p.at(name).values[j];
      const double fd = (eval(x0 + h) - eval(x0 - h)) / (2 * h);
      const double rel = testing::rel_err(adj[j], fd, floor);
      if (rel > r.worst_rel) {
        r.worst_rel = rel;
        r.worst_block = name + "[" + std::to_string(j) + "]";
      }
      ++r.checked;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

/// Worst |inverse(leapfrog(x)) - x| over random points and step sizes, using
/// the seeds model's gradient field.
inline double check_leapfrog_round_trip(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const SeedsTarget target;
  const GradientFn grad = [&](const ad::Var& z) { return target.grad_log_density(z); };
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    ad::Tape t;
    const auto z0 = testing::normal_vector(rng, target.dim(), 0.5);
    const auto r0 = testing::normal_vector(rng, target.dim());
    const ad::Var delta = t.lift(uniform(rng, 0.001, 0.05));
    const PhasePoint back = leapfrog_inverse(leapfrog({t.lift(z0), t.lift(r0)}, delta, grad), delta, grad);
    worst = std::max({worst, testing::max_abs_diff(back.z.to_vector(), z0),
                      testing::max_abs_diff(back.rho.to_vector(), r0)});
  }
  return worst;
}

struct ScheduleResult {
  std::size_t not_strict = 0;  // |w| <= 30: some β_k <= β_{k-1}
  std::size_t not_ordered = 0; // |w| <= 1000: some β_k < β_{k-1}, or endpoints off
};

/// Random raw vectors for K in 2..64. Increments below the rounding step of
/// the running sum (softplus(w) under ~1e-14 of it, |w| beyond ~30) cannot
/// move β in double precision, so strictness is checked for |w| <= 30 and
/// ordering over the wider range.
inline ScheduleResult check_schedule_monotone(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScheduleResult r;
  for (int i = 0; i < n; ++i) {
    const std::size_t K = 2 + rng() % 63;
    const bool wide = i % 2 == 1;
    const double scale = std::pow(10.0, uniform(rng, -2.0, wide ? 3.0 : std::log10(30.0)));
    const auto raw = testing::uniform_vector(rng, K, -scale, scale);
    const auto b = schedule_betas(raw);
    bool ordered = b.size() == K + 1 && b.front() == 0.0 && b.back() == 1.0;
    bool strict = ordered;
    for (std::size_t k = 1; ordered && k <= K; ++k) {
      ordered = b[k] >= b[k - 1];
      strict = strict && b[k] > b[k - 1];
    }
    if (wide) {
      r.not_ordered += !ordered;
    } else {
      r.not_strict += !strict;
    }
  }
  return r;
}

/// Methods whose nonzero adjoints do not reach exactly their declared groups.
inline std::vector<std::string> check_adjoint_flow() {
  const GaussianToyTarget target({0.5, -1.0}, {0.8, 1.6});
  const std::set<std::string> every = {"q", "step", "schedule", "friction", "eta", "score"};
  std::vector<std::string> failing;
  for (Method m : {Method::plain_vi, Method::ula, Method::mcd, Method::uha, Method::ldvi, Method::uha_em,
                   Method::ldvi_em}) {
    const MethodConfig c = method_config(m);
    std::mt19937_64 rng(41);
    const ParameterSet p = random_parameters(c, 2, 4, rng, 0.3);
    ad::Tape t;
    const LiftedParams lp = lift_parameters(t, p, c, every);
    t.backward(estimate_elbo(c, lp, target, draw_noise(1, 0, 0, 2, 4)).value);
    std::set<std::string> reached;
    for (const auto& [name, leaf] : lp.trainable) {
      for (double a : t.adjoint(leaf)) {
        if (a != 0.0) reached.insert(parameter_group(name));
      }
    }
    if (reached != c.trainable_groups()) failing.push_back(method_name(m));
  }
  return failing;
}

}  // namespace ldvi::checks
