#pragma once

// Single-sample augmented ELBO estimates for the method family, built on one
// tape so that a reverse sweep yields gradients for every trainable block.
//
//   L = -log q(z_1, ρ_1) + Σ_{k=1}^{K-1} log m_B/m_F + log p̄(z_K, ρ_K)

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ldvi/annealing.hpp"
#include "ldvi/diffengine.hpp"
#include "ldvi/dynamics.hpp"
#include "ldvi/params.hpp"
#include "ldvi/scorenet.hpp"
#include "ldvi/targets.hpp"

namespace ldvi {

enum class Method { plain_vi, ula, mcd, uha, ldvi, uha_em, ldvi_em };

std::string method_name(Method m);
/// Case-insensitive; accepts '-' or '_' in the EM variants.
Method parse_method(const std::string& name);
std::vector<std::string> method_names();

enum class Scheme { none, splitting, euler_maruyama };
enum class ScoreUsage { none, position, full };
enum class EtaMode { derived, learnable, zero };
/// How ρ_1 and ρ_K are augmented: N(0, I), or N(2 s̃(t, z), I) at t = 1/K and 1.
enum class Augmentation { standard, score_mean };

struct MethodConfig {
  Method method = Method::ldvi;
  Scheme scheme = Scheme::splitting;
  KernelKind forward = KernelKind::forward_em;
  KernelKind backward = KernelKind::backward_em;
  ScoreUsage score = ScoreUsage::full;
  EtaMode eta = EtaMode::derived;
  Augmentation augmentation = Augmentation::standard;

  /// Parameter groups trained by this method: q, step, schedule, friction,
  /// eta, score.
  std::set<std::string> trainable_groups() const;
  /// Throws std::invalid_argument on inconsistent kernel/score/eta choices.
  void validate() const;
};

MethodConfig method_config(Method m);

/// Group of a parameter block name ("q.mean" → "q", "score.w_in" → "score").
std::string parameter_group(const std::string& block_name);

struct InitOptions {
  double step = 0.05;
  double friction = 1.0;
  /// Initial η for learnable-η configs; negative means exp(-γδ).
  double eta = -1.0;
  std::size_t hidden = 0;  // 0 → default_hidden_width(D)
  std::uint64_t seed = 0;
  std::vector<double> q_mean;   // empty → zeros
  std::vector<double> q_scale;  // empty → ones
};

/// Blocks: q.mean, q.raw_scale, step.raw, schedule.raw (K entries), plus
/// friction.raw / eta.raw / score.* when the configuration uses them.
ParameterSet init_parameters(const MethodConfig& config, std::size_t dim, std::size_t K,
                             const InitOptions& opts = {});

/// Pre-drawn standard-normal noise for one chain.
struct NoiseBundle {
  std::size_t dim = 0;
  std::size_t K = 1;
  std::vector<double> z0;
  std::vector<double> rho0;
  std::vector<double> steps;  // (K-1) × dim, row k-1 drives transition k

  std::span<const double> step(std::size_t k) const;
};

/// Stream tags keep training, pre-training and evaluation draws disjoint.
constexpr std::uint64_t kPretrainStream = 1ull << 40;
constexpr std::uint64_t kEvalStream = 1ull << 41;

NoiseBundle draw_noise(std::uint64_t seed, std::uint64_t stream, std::uint64_t chain, std::size_t dim,
                       std::size_t K);

/// Parameters lifted onto one tape, with transforms applied.
struct LiftedParams {
  std::optional<MeanFieldGaussian> q;
  std::optional<AnnealingSchedule> schedule;
  ad::Var delta;
  ad::Var gamma;
  ad::Var eta;
  std::optional<ScoreNet> score;
  /// Trainable leaves by block name, for reading adjoints.
  std::vector<std::pair<std::string, ad::Var>> trainable;

  std::size_t K() const { return schedule ? schedule->K() : 1; }
};

/// Blocks whose group is in `trainable` become trainable leaves; all other
/// blocks are lifted as constants.
LiftedParams lift_parameters(ad::Tape& tape, const ParameterSet& params, const MethodConfig& config,
                             const std::set<std::string>& trainable);

struct StepTrace {
  std::vector<double> z, rho, rho_prime, z_next, rho_next;
  double log_ratio = 0.0;
};

struct ElboEstimate {
  ad::Var value;
  double log_q_init = 0.0;      // log q(z_1, ρ_1)
  double log_p_terminal = 0.0;  // log p̄(z_K, ρ_K)
  std::vector<StepTrace> trace;  // filled when requested
};

ElboEstimate estimate_elbo(const MethodConfig& config, const LiftedParams& params,
                           const TargetModel& target, const NoiseBundle& noise, bool with_trace = false);

/// log p̄(z) - log q(z) with z = μ + σ ⊙ ε.
ad::Var plain_vi_elbo(const MeanFieldGaussian& q, const TargetModel& target, const ad::Var& eps);

struct ElboSummary {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error of n independent estimates drawn from the
/// evaluation stream of `seed`.
ElboSummary evaluate_elbo_mean(const MethodConfig& config, const ParameterSet& params,
                               const TargetModel& target, std::size_t n, std::uint64_t seed);

}  // namespace ldvi
