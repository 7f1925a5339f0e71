#include "ldvi/selfcheck.hpp"

#include <cmath>

#include "chain_checks.hpp"

namespace ldvi {

namespace {

CheckResult below(std::string name, double value, double limit, std::string detail = {}) {
  return {std::move(name), value < limit, value, limit, std::move(detail)};
}

}  // namespace

std::vector<CheckResult> run_selfcheck() {
  std::vector<CheckResult> out;

  {
    std::mt19937_64 rng(23);
    const GaussianToyTarget target({0.5, -1.0}, {0.8, 1.6});
    double worst = 0.0;
    std::string where;
    for (Method m : {Method::plain_vi, Method::ula, Method::mcd, Method::uha, Method::ldvi, Method::uha_em,
                     Method::ldvi_em}) {
      const MethodConfig c = method_config(m);
      const ParameterSet p = checks::random_parameters(c, 2, 4, rng, 0.3, 6);
      const auto r = checks::check_gradient(c, target, p, draw_noise(9, 0, 0, 2, 4), 1e-5, 1e-6);
      if (r.worst_rel >= worst) {
        worst = r.worst_rel;
        where = method_name(m) + " " + r.worst_block;
      }
    }
    out.push_back(below("gradient vs finite differences (max rel err)", worst, 1e-4, where));
  }
  {
    const auto r = checks::check_composition(16, 505);
    out.push_back(below("log-ratio vs composed transition densities", r.worst_ratio, 1e-8,
                        std::to_string(r.steps) + " steps"));
  }
  {
    const auto r = checks::check_ula_recovery(25, 101);
    out.push_back(below("zero-score, zero-eta exact splitting equals ULA", std::max(r.vs_named, r.vs_reference),
                        1e-8));
  }
  {
    const auto r = checks::check_uha_recovery(25, 202);
    out.push_back(below("zero-score exact splitting equals UHA",
                        std::max({r.vs_named, r.vs_reference, r.per_step}), 1e-8));
  }
  {
    const auto r = checks::check_mcd_terms(25, 303);
    out.push_back(below("MCD ratio term by term", std::max(r.per_step, r.vs_reference), 1e-8));
  }
  out.push_back(below("Euler-Maruyama variants vs reference chain", checks::check_em_reference(25, 404), 1e-8));
  out.push_back(below("leapfrog round trip", checks::check_leapfrog_round_trip(50, 7), 1e-10));
  {
    const auto r = checks::check_schedule_monotone(10000, 11);
    out.push_back(below("schedules out of 10000 not strictly increasing or out of order",
                        static_cast<double>(r.not_strict + r.not_ordered), 0.5));
  }
  {
    const auto failing = checks::check_adjoint_flow();
    std::string who;
    for (const auto& f : failing) who += (who.empty() ? "" : ", ") + f;
    out.push_back(below("methods with adjoints outside their trainable set", static_cast<double>(failing.size()),
                        0.5, who));
  }
  {
    // Bound: mean - log Z in units of the standard error, worst over methods.
    const GaussianToyTarget target({0.5, -1.0, 0.0}, {0.6, 1.4, 2.0});
    const double log_z = *target.log_normalizer();
    double worst = -std::numeric_limits<double>::infinity();
    std::string who;
    for (Method m : {Method::plain_vi, Method::ula, Method::mcd, Method::uha, Method::ldvi, Method::uha_em,
                     Method::ldvi_em}) {
      const MethodConfig c = method_config(m);
      std::mt19937_64 rng(31);
      const ParameterSet p = checks::random_parameters(c, 3, 6, rng, 0.1);
      const ElboSummary s = evaluate_elbo_mean(c, p, target, 2000, 7);
      const double z = (s.mean - log_z) / s.std_error;
      if (z > worst) {
        worst = z;
        who = method_name(m);
      }
    }
    out.push_back(below("ELBO above log Z, in standard errors", worst, 4.0, who));
  }
  return out;
}

}  // namespace ldvi
