#include "ldvi/estimator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ldvi {

using ad::Var;

namespace {

const std::vector<std::pair<Method, std::string>>& method_table() {
  static const std::vector<std::pair<Method, std::string>> table = {
      {Method::plain_vi, "plainvi"}, {Method::ula, "ula"},       {Method::mcd, "mcd"},
      {Method::uha, "uha"},          {Method::ldvi, "ldvi"},     {Method::uha_em, "uha_em"},
      {Method::ldvi_em, "ldvi_em"}};
  return table;
}

bool is_exact(KernelKind k) {
  return k == KernelKind::exact_ou || k == KernelKind::backward_exact_no_score ||
         k == KernelKind::backward_exact_ou;
}

bool is_em(KernelKind k) { return k == KernelKind::forward_em || k == KernelKind::backward_em; }

bool uses_friction(const MethodConfig& c) {
  if (c.scheme == Scheme::none) return false;
  if (c.scheme == Scheme::euler_maruyama) return true;
  if (is_em(c.forward) || is_em(c.backward)) return true;
  return c.eta == EtaMode::derived && (is_exact(c.forward) || is_exact(c.backward));
}

bool uses_learnable_eta(const MethodConfig& c) {
  return c.scheme == Scheme::splitting && c.eta == EtaMode::learnable &&
         (is_exact(c.forward) || is_exact(c.backward));
}

void require_finite(const Var& v, std::size_t k, const char* what) {
  for (double x : v.value()) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite ") + what, k);
  }
}

// ∇log π_k through cached ∇log q and ∇log p̄; the cache holds the most recent
// position, which is all the chain ever revisits.
class BridgeGradients {
 public:
  BridgeGradients(const MeanFieldGaussian& q, const TargetModel& target, const AnnealingSchedule& sched)
      : q_(q), target_(target), sched_(sched) {}

  Var at(std::size_t k, const Var& z) {
    if (!cached_ || cached_z_.index() != z.index()) {
      grad_q_ = q_.grad_log_pdf(z);
      grad_p_ = target_.grad_log_density(z);
      cached_z_ = z;
      cached_ = true;
    }
    return bridge_grad_from(k, sched_, grad_q_, grad_p_);
  }

 private:
  const MeanFieldGaussian& q_;
  const TargetModel& target_;
  const AnnealingSchedule& sched_;
  bool cached_ = false;
  Var cached_z_, grad_q_, grad_p_;
};

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::plain_vi: return "PlainVI";
    case Method::ula: return "ULA";
    case Method::mcd: return "MCD";
    case Method::uha: return "UHA";
    case Method::ldvi: return "LDVI";
    case Method::uha_em: return "UHA_EM";
    case Method::ldvi_em: return "LDVI_EM";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  std::string key;
  for (char c : name) {
    if (c == '-') c = '_';
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "plain_vi") key = "plainvi";
  for (const auto& [m, n] : method_table()) {
    if (n == key) return m;
  }
  std::string valid;
  for (const auto& n : method_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown method '" + name + "'; valid methods: " + valid);
}

std::vector<std::string> method_names() {
  std::vector<std::string> out;
  for (const auto& [m, n] : method_table()) out.push_back(method_name(m));
  return out;
}

MethodConfig method_config(Method m) {
  MethodConfig c;
  c.method = m;
  switch (m) {
    case Method::plain_vi:
      c.scheme = Scheme::none;
      c.score = ScoreUsage::none;
      break;
    case Method::ula:
      c.forward = KernelKind::exact_ou;
      c.backward = KernelKind::backward_exact_no_score;
      c.score = ScoreUsage::none;
      c.eta = EtaMode::zero;
      break;
    case Method::mcd:
      c.forward = KernelKind::exact_ou;
      c.backward = KernelKind::mcd_backward;
      c.score = ScoreUsage::position;
      c.eta = EtaMode::zero;
      c.augmentation = Augmentation::score_mean;
      break;
    case Method::uha:
      c.forward = KernelKind::exact_ou;
      c.backward = KernelKind::backward_exact_no_score;
      c.score = ScoreUsage::none;
      c.eta = EtaMode::learnable;
      break;
    case Method::ldvi:
      break;
    case Method::uha_em:
      c.scheme = Scheme::euler_maruyama;
      c.score = ScoreUsage::none;
      break;
    case Method::ldvi_em:
      c.scheme = Scheme::euler_maruyama;
      break;
  }
  return c;
}

std::set<std::string> MethodConfig::trainable_groups() const {
  std::set<std::string> g = {"q"};
  if (scheme == Scheme::none) return g;
  g.insert("step");
  g.insert("schedule");
  if (uses_friction(*this)) g.insert("friction");
  if (uses_learnable_eta(*this)) g.insert("eta");
  if (score != ScoreUsage::none) g.insert("score");
  return g;
}

void MethodConfig::validate() const {
  if ((scheme == Scheme::none) != (method == Method::plain_vi)) {
    throw std::invalid_argument("plain VI and only plain VI runs without transitions");
  }
  if (scheme != Scheme::splitting) return;
  if (forward != KernelKind::exact_ou && forward != KernelKind::forward_em) {
    throw std::invalid_argument(std::string("'") + kernel_name(forward) + "' is not a forward kernel");
  }
  if (backward == KernelKind::exact_ou || backward == KernelKind::forward_em) {
    throw std::invalid_argument(std::string("'") + kernel_name(backward) + "' is not a backward kernel");
  }
  const bool backward_needs_score = backward == KernelKind::backward_exact_ou ||
                                    backward == KernelKind::backward_em ||
                                    backward == KernelKind::mcd_backward;
  if (backward_needs_score && score == ScoreUsage::none) {
    throw std::invalid_argument(std::string("backward kernel '") + kernel_name(backward) +
                                "' needs a score network");
  }
  if (augmentation == Augmentation::score_mean && score == ScoreUsage::none) {
    throw std::invalid_argument("score-mean augmentation needs a score network");
  }
}

std::string parameter_group(const std::string& block_name) {
  const auto dot = block_name.find('.');
  return dot == std::string::npos ? block_name : block_name.substr(0, dot);
}

ParameterSet init_parameters(const MethodConfig& config, std::size_t dim, std::size_t K,
                             const InitOptions& opts) {
  config.validate();
  if (dim == 0) throw std::invalid_argument("dimension must be positive");
  if (K == 0) throw std::invalid_argument("K must be at least 1");
  if (!(opts.step > 0.0) || !(opts.friction > 0.0)) {
    throw std::invalid_argument("initial step and friction must be positive");
  }
  ParameterSet p;
  std::vector<double> mean = opts.q_mean.empty() ? std::vector<double>(dim, 0.0) : opts.q_mean;
  std::vector<double> raw(dim, inverse_softplus(1.0));
  if (!opts.q_scale.empty()) {
    if (opts.q_scale.size() != dim) throw std::invalid_argument("initial q scale has wrong length");
    for (std::size_t i = 0; i < dim; ++i) raw[i] = inverse_softplus(opts.q_scale[i]);
  }
  if (mean.size() != dim) throw std::invalid_argument("initial q mean has wrong length");
  p.add("q.mean", {dim}, std::move(mean));
  p.add("q.raw_scale", {dim}, std::move(raw));
  if (config.scheme == Scheme::none) return p;

  p.add("step.raw", {1}, {inverse_softplus(opts.step)});
  p.add("schedule.raw", {K}, uniform_schedule_raw(K));
  if (uses_friction(config)) p.add("friction.raw", {1}, {inverse_softplus(opts.friction)});
  if (uses_learnable_eta(config)) {
    const double eta = opts.eta < 0.0 ? std::exp(-opts.friction * opts.step) : opts.eta;
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("initial eta must lie in (0, 1)");
    p.add("eta.raw", {1}, {std::log(eta / (1.0 - eta))});
  }
  if (config.score != ScoreUsage::none) {
    init_score_net(p, dim, opts.hidden == 0 ? default_hidden_width(dim) : opts.hidden, opts.seed);
  }
  return p;
}

// ---------------------------------------------------------------------------

std::span<const double> NoiseBundle::step(std::size_t k) const {
  if (k == 0 || k >= K) throw std::out_of_range("noise requested for transition " + std::to_string(k));
  return {steps.data() + (k - 1) * dim, dim};
}

NoiseBundle draw_noise(std::uint64_t seed, std::uint64_t stream, std::uint64_t chain, std::size_t dim,
                       std::size_t K) {
  auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x & 0xffffffffu); };
  auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(chain), hi(chain)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  NoiseBundle nb;
  nb.dim = dim;
  nb.K = K;
  nb.z0.resize(dim);
  nb.rho0.resize(dim);
  nb.steps.resize((K > 0 ? K - 1 : 0) * dim);
  for (auto& x : nb.z0) x = normal(rng);
  for (auto& x : nb.rho0) x = normal(rng);
  for (auto& x : nb.steps) x = normal(rng);
  return nb;
}

LiftedParams lift_parameters(ad::Tape& tape, const ParameterSet& params, const MethodConfig& config,
                             const std::set<std::string>& trainable) {
  config.validate();
  LiftedParams out;
  auto lift = [&](const std::string& name) {
    const ParamBlock& b = params.at(name);
    const bool train = trainable.count(parameter_group(name)) > 0;
    Var v = tape.lift(b.values, train);
    if (train) out.trainable.emplace_back(name, v);
    return v;
  };

  const Var mean = lift("q.mean");
  const Var raw_scale = lift("q.raw_scale");
  out.q.emplace(mean, raw_scale);
  if (config.scheme == Scheme::none) return out;

  out.delta = ad::softplus(lift("step.raw"));
  out.schedule.emplace(lift("schedule.raw"));
  if (uses_friction(config)) out.gamma = ad::softplus(lift("friction.raw"));

  if (config.scheme == Scheme::splitting) {
    switch (config.eta) {
      case EtaMode::zero:
        out.eta = tape.lift(0.0);
        break;
      case EtaMode::learnable:
        if (uses_learnable_eta(config)) out.eta = ad::sigmoid(lift("eta.raw"));
        break;
      case EtaMode::derived:
        if (out.gamma.valid()) out.eta = ad::exp(-(out.gamma * out.delta));
        break;
    }
  }

  if (config.score != ScoreUsage::none) {
    ScoreNet::Weights w{lift("score.w_in"),  lift("score.b_in"),  lift("score.w_h1"),
                        lift("score.b_h1"),  lift("score.w_h2"),  lift("score.b_h2"),
                        lift("score.w_out"), lift("score.b_out")};
    out.score.emplace(std::move(w), mean.size());
  }
  return out;
}

// ---------------------------------------------------------------------------

Var plain_vi_elbo(const MeanFieldGaussian& q, const TargetModel& target, const Var& eps) {
  const Var z = q.sample(eps);
  return target.log_density(z) - q.log_pdf(z);
}

namespace {

MomentumKernel make_kernel(KernelKind kind, const LiftedParams& p) {
  switch (kind) {
    case KernelKind::exact_ou: return exact_ou_kernel(p.eta);
    case KernelKind::forward_em: return forward_em_kernel(p.gamma, p.delta);
    case KernelKind::backward_exact_no_score: return backward_exact_no_score_kernel(p.eta);
    case KernelKind::backward_exact_ou: return backward_exact_ou_kernel(p.eta);
    case KernelKind::backward_em: return backward_em_kernel(p.gamma, p.delta);
    case KernelKind::mcd_backward: return mcd_backward_kernel();
  }
  throw std::invalid_argument("unknown kernel");
}

StepTrace trace_of(const PhasePoint& a, const Var& rho_prime, const PhasePoint& b, const Var& ratio) {
  StepTrace t;
  t.z = a.z.to_vector();
  t.rho = a.rho.to_vector();
  if (rho_prime.valid()) t.rho_prime = rho_prime.to_vector();
  t.z_next = b.z.to_vector();
  t.rho_next = b.rho.to_vector();
  t.log_ratio = ratio.scalar();
  return t;
}

}  // namespace

ElboEstimate estimate_elbo(const MethodConfig& config, const LiftedParams& params,
                           const TargetModel& target, const NoiseBundle& noise, bool with_trace) {
  const std::size_t D = target.dim();
  if (!params.q || params.q->dim() != D || noise.dim != D) {
    throw ad::ShapeError("estimate: parameter, target and noise dimensions disagree");
  }
  const MeanFieldGaussian& q = *params.q;
  ad::Tape& tape = *q.mean().tape();
  ElboEstimate est;

  if (config.scheme == Scheme::none) {
    const Var z = q.sample(tape.lift(noise.z0));
    const Var lq = q.log_pdf(z);
    const Var lp = target.log_density(z);
    require_finite(lp, 1, "target log-density");
    est.log_q_init = lq.scalar();
    est.log_p_terminal = lp.scalar();
    est.value = lp - lq;
    return est;
  }

  const std::size_t K = params.K();
  if (noise.K != K) throw ad::ShapeError("noise bundle was drawn for a different K");
  const double Kd = static_cast<double>(K);
  const AnnealingSchedule& sched = *params.schedule;
  const bool score_mean = config.augmentation == Augmentation::score_mean;

  PhasePoint point;
  point.z = q.sample(tape.lift(noise.z0));
  const Var eps_rho = tape.lift(noise.rho0);
  Var log_q = q.log_pdf(point.z);
  if (score_mean) {
    const Var m1 = ad::scale(2.0, params.score->forward_position(1.0 / Kd, point.z));
    point.rho = m1 + eps_rho;
    log_q = log_q + ad::gaussian_logpdf(point.rho, m1, 1.0);
  } else {
    point.rho = eps_rho;
    log_q = log_q + ad::standard_normal_logpdf(point.rho);
  }
  require_finite(log_q, 1, "initial log-density");
  est.log_q_init = log_q.scalar();
  Var L = -log_q;

  BridgeGradients grads(q, target, sched);
  if (config.scheme == Scheme::splitting) {
    const MomentumKernel fwd = make_kernel(config.forward, params);
    const MomentumKernel bwd = make_kernel(config.backward, params);
    for (std::size_t k = 1; k < K; ++k) {
      const GradientFn grad = [&grads, k](const Var& z) { return grads.at(k, z); };
      ForwardStep step;
      try {
        step = forward_transition(point, fwd, tape.lift(noise.step(k)), params.delta, grad);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(e.what(), k);
      }
      const double t = static_cast<double>(k) / Kd;
      Var score;
      if (config.score == ScoreUsage::full) score = params.score->forward(t, point.z, step.rho_prime);
      if (config.score == ScoreUsage::position) score = params.score->forward_position(t, point.z);
      const Var ratio = mB_logpdf(bwd, point.rho, step.rho_prime, score) - step.log_mF;
      require_finite(step.next.z, k, "position");
      require_finite(step.next.rho, k, "momentum");
      require_finite(ratio, k, "log-ratio");
      if (with_trace) est.trace.push_back(trace_of(point, step.rho_prime, step.next, ratio));
      L = L + ratio;
      point = step.next;
    }
  } else {
    for (std::size_t k = 1; k < K; ++k) {
      const Var g = grads.at(k, point.z);
      require_finite(g, k, "gradient");
      const PhasePoint next =
          em_forward_transition(point, params.gamma, params.delta, g, tape.lift(noise.step(k)));
      Var score;
      if (config.score == ScoreUsage::full) {
        score = params.score->forward(static_cast<double>(k) / Kd, point.z, next.rho);
      }
      const Var ratio = em_log_ratio_step(point, next, params.gamma, params.delta, g, score);
      require_finite(next.z, k, "position");
      require_finite(next.rho, k, "momentum");
      require_finite(ratio, k, "log-ratio");
      if (with_trace) est.trace.push_back(trace_of(point, {}, next, ratio));
      L = L + ratio;
      point = next;
    }
  }

  Var log_p = target.log_density(point.z);
  if (score_mean) {
    const Var mK = ad::scale(2.0, params.score->forward_position(1.0, point.z));
    log_p = log_p + ad::gaussian_logpdf(point.rho, mK, 1.0);
  } else {
    log_p = log_p + ad::standard_normal_logpdf(point.rho);
  }
  require_finite(log_p, K, "terminal log-density");
  est.log_p_terminal = log_p.scalar();
  est.value = L + log_p;
  return est;
}

ElboSummary evaluate_elbo_mean(const MethodConfig& config, const ParameterSet& params,
                               const TargetModel& target, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("evaluation needs at least two samples");
  ad::Tape tape;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    tape.reset();
    const LiftedParams lifted = lift_parameters(tape, params, config, {});
    const NoiseBundle noise = draw_noise(seed, kEvalStream, i, target.dim(), lifted.K());
    values[i] = estimate_elbo(config, lifted, target, noise).value.scalar();
    sum += values[i];
  }
  const double mean = sum / static_cast<double>(n);
  for (double v : values) sum_sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sum_sq / static_cast<double>(n - 1));
  return {mean, sd / std::sqrt(static_cast<double>(n)), n};
}

}  // namespace ldvi
