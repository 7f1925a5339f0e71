#include "ldvi/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace ldvi {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

struct Slot {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// The trainable blocks of `params` laid out back to back.
struct Layout {
  std::vector<Slot> slots;
  std::size_t total = 0;

  Layout(const ParameterSet& params, const std::set<std::string>& groups) {
    for (const auto& b : params.blocks()) {
      if (!groups.count(parameter_group(b.name))) continue;
      slots.push_back({b.name, total, b.values.size()});
      total += b.values.size();
    }
  }

  std::vector<double> gather(const ParameterSet& p) const {
    std::vector<double> out(total);
    for (const auto& s : slots) std::copy(p.at(s.name).values.begin(), p.at(s.name).values.end(), out.begin() + s.offset);
    return out;
  }

  void scatter(std::span<const double> flat, ParameterSet& p) const {
    for (const auto& s : slots) {
      auto& v = p.at(s.name).values;
      std::copy(flat.begin() + s.offset, flat.begin() + s.offset + s.size, v.begin());
    }
  }
};

struct ChainResult {
  bool ok = true;
  std::string error;
  double elbo = 0.0;
  std::vector<double> grad;
};

// One single-sample estimate and its gradient over the trainable layout.
void run_chain(const MethodConfig& config, const ParameterSet& params, const std::set<std::string>& groups,
               const Layout& layout, const TargetModel& target, const NoiseBundle& noise, ad::Tape& tape,
               ChainResult& out) {
  out.grad.assign(layout.total, 0.0);
  try {
    tape.reset();
    const LiftedParams lifted = lift_parameters(tape, params, config, groups);
    const ElboEstimate est = estimate_elbo(config, lifted, target, noise);
    out.elbo = est.value.scalar();
    tape.backward(est.value);
    std::size_t i = 0;
    for (const auto& [name, leaf] : lifted.trainable) {
      while (layout.slots[i].name != name) ++i;
      const auto adj = tape.adjoint(leaf);
      std::copy(adj.begin(), adj.end(), out.grad.begin() + layout.slots[i].offset);
    }
    out.ok = std::isfinite(out.elbo);
    if (!out.ok) out.error = "non-finite ELBO estimate";
  } catch (const NonFiniteError& e) {
    out.ok = false;
    out.error = e.what();
  } catch (const ad::DomainError& e) {
    out.ok = false;
    out.error = e.what();
  }
}

struct LoopStats {
  std::size_t skipped = 0;
  std::size_t clipped = 0;
  double last_elbo = 0.0;
  bool diverged = false;
  std::string message;
  std::vector<CurvePoint> curve;
};

// Adam on -mean ELBO over `steps` batches. Stream of step s is stream_base + s.
LoopStats optimize(const MethodConfig& config, ParameterSet& params, const TargetModel& target, std::size_t K,
                   std::size_t steps, double lr, std::uint64_t stream_base, const TrainPlan& plan, bool keep_curve) {
  const auto groups = config.trainable_groups();
  const Layout layout(params, groups);
  std::vector<double> flat = layout.gather(params);
  AdamState adam;
  LoopStats stats;
  const std::size_t B = plan.batch;
  const std::size_t workers = std::max<std::size_t>(1, std::min(plan.threads, B));
  std::vector<ad::Tape> tapes(workers);
  std::vector<ChainResult> chains(B);
  std::vector<double> grad(layout.total);

  for (std::size_t step = 0; step < steps; ++step) {
    const std::uint64_t stream = stream_base + step;
    auto work = [&](std::size_t w) {
      for (std::size_t c = w; c < B; c += workers) {
        const NoiseBundle noise = draw_noise(plan.seed, stream, c, target.dim(), K);
        run_chain(config, params, groups, layout, target, noise, tapes[w], chains[c]);
      }
    };
    if (workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& t : pool) t.join();
    }

    // Ordered reduction over chains.
    bool ok = true;
    double mean = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t c = 0; c < B; ++c) {
      if (!chains[c].ok) {
        ok = false;
        stats.message = chains[c].error;
        break;
      }
      mean += chains[c].elbo;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] -= chains[c].grad[i];
    }
    if (!ok) {
      ++stats.skipped;
      continue;
    }
    mean /= static_cast<double>(B);
    for (double& g : grad) g /= static_cast<double>(B);
    stats.last_elbo = mean;
    if (keep_curve && (step % plan.curve_every == 0 || step + 1 == steps)) stats.curve.push_back({step, mean});
    if (mean < plan.divergence_floor) {
      stats.diverged = true;
      stats.message = "training ELBO " + fmt(mean) + " fell below " + fmt(plan.divergence_floor) + " at step " +
                      std::to_string(step);
      break;
    }
    if (clip_global_norm(grad, plan.clip_norm)) ++stats.clipped;
    if (!adam_step(adam, flat, grad, lr)) {
      ++stats.skipped;
      continue;
    }
    layout.scatter(flat, params);
  }
  return stats;
}

std::string kernel_label(const MethodConfig& c) {
  switch (c.scheme) {
    case Scheme::none: return "none";
    case Scheme::euler_maruyama: return "euler_maruyama";
    case Scheme::splitting: return std::string(kernel_name(c.forward)) + "/" + kernel_name(c.backward);
  }
  return "unknown";
}

const char* eta_label(EtaMode m) {
  switch (m) {
    case EtaMode::derived: return "exp(-gamma*delta)";
    case EtaMode::learnable: return "sigmoid(eta.raw)";
    case EtaMode::zero: return "0";
  }
  return "unknown";
}

void fill_learned(RunRecord& r, const MethodConfig& config, const ParameterSet& p) {
  if (!p.contains("step.raw")) return;
  const double delta = softplus(p.at("step.raw").values[0]);
  r.learned["delta"] = {delta};
  double gamma = 0.0;
  if (p.contains("friction.raw")) {
    gamma = softplus(p.at("friction.raw").values[0]);
    r.learned["gamma"] = {gamma};
  }
  if (config.scheme == Scheme::splitting) {
    if (config.eta == EtaMode::learnable && p.contains("eta.raw")) {
      r.learned["eta"] = {1.0 / (1.0 + std::exp(-p.at("eta.raw").values[0]))};
    } else if (config.eta == EtaMode::derived && p.contains("friction.raw")) {
      r.learned["eta"] = {std::exp(-gamma * delta)};
    }
  }
  const auto betas = schedule_betas(p.at("schedule.raw").values);
  r.learned["beta"] = std::vector<double>(betas.begin() + 1, betas.end() - 1);
}

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ParameterSet>& pretrain_cache() {
  static std::map<std::string, ParameterSet> c;
  return c;
}

}  // namespace

bool adam_step(AdamState& s, std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter and gradient sizes differ");
  for (double g : grads) {
    if (!std::isfinite(g)) return false;
  }
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
    s.t = 0;
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
  }
  return true;
}

bool clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return false;
  for (double& g : grads) g *= max_norm / norm;
  return true;
}

ParameterSet pretrain_q(const TargetModel& target, const TrainPlan& plan) {
  const std::string key = target.name() + "|" + std::to_string(target.dim()) + "|" + std::to_string(plan.seed) + "|" +
                          std::to_string(plan.pretrain_steps) + "|" + fmt(plan.pretrain_lr) + "|" +
                          std::to_string(plan.batch) + "|" + fmt(plan.clip_norm);
  {
    std::lock_guard<std::mutex> lock(cache_mutex());
    auto it = pretrain_cache().find(key);
    if (it != pretrain_cache().end()) return it->second;
  }
  const MethodConfig config = method_config(Method::plain_vi);
  ParameterSet q = init_parameters(config, target.dim(), 1);
  if (plan.pretrain_steps > 0) {
    TrainPlan p = plan;
    p.divergence_floor = -std::numeric_limits<double>::infinity();
    optimize(config, q, target, 1, plan.pretrain_steps, plan.pretrain_lr, kPretrainStream, p, false);
  }
  std::lock_guard<std::mutex> lock(cache_mutex());
  pretrain_cache().emplace(key, q);
  return q;
}

RunRecord train(const TrainPlan& plan) {
  RunRecord r;
  r.plan = plan;
  try {
    const auto target = make_target(plan.model, plan.data_dir);
    return train(plan, *target);
  } catch (const std::exception& e) {
    r.status = "failed";
    r.message = e.what();
    return r;
  }
}

RunRecord train(const TrainPlan& plan, const TargetModel& target) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord r;
  r.plan = plan;
  auto finish = [&] {
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  };
  try {
    if (plan.steps == 0) throw std::invalid_argument("steps must be at least 1");
    if (plan.batch == 0) throw std::invalid_argument("batch must be at least 1");
    if (plan.eval_samples < 2) throw std::invalid_argument("evaluation needs at least two samples");
    if (plan.K == 0) throw std::invalid_argument("K must be at least 1");
    if (!(plan.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (plan.curve_every == 0) throw std::invalid_argument("curve_every must be at least 1");

    const MethodConfig config = method_config(plan.method);
    const std::size_t D = target.dim();
    const std::size_t hidden = plan.hidden == 0 ? default_hidden_width(D) : plan.hidden;

    r.metadata["dim"] = std::to_string(D);
    r.metadata["target_transform"] = target.transform_description();
    r.metadata["scheme"] = kernel_label(config);
    r.metadata["eta"] = config.scheme == Scheme::splitting ? eta_label(config.eta) : "n/a";
    r.metadata["augmentation"] = config.augmentation == Augmentation::score_mean ? "N(2 s(t,z), I) at t=1/K and t=1"
                                                                                   : "N(0, I)";
    r.metadata["score"] = config.score == ScoreUsage::none       ? "none"
                          : config.score == ScoreUsage::position ? "position-only"
                                                                 : "full";
    if (config.score != ScoreUsage::none) {
      r.metadata["score_hidden"] = std::to_string(hidden);
      r.metadata["score_activation"] = "tanh, two residual blocks";
      r.metadata["score_time_feature"] = "k/K appended to (z, rho)";
      r.metadata["score_init"] = "uniform +-1/sqrt(fan_in), zero output layer";
    }
    r.metadata["schedule"] = "beta_k = cumsum(softplus(w))_k / sum(softplus(w)), K raw increments";
    r.metadata["init_step"] = fmt(plan.init_step);
    r.metadata["init_friction"] = fmt(plan.init_friction);
    r.metadata["optimizer"] = "adam beta1=0.9 beta2=0.999 eps=1e-8";
    r.metadata["clip_norm"] = fmt(plan.clip_norm);
    r.metadata["pretrain"] = std::to_string(plan.pretrain_steps) + " plain-VI steps at lr " + fmt(plan.pretrain_lr);
    r.metadata["noise"] = "mt19937_64 per (seed, stream, chain); stream = training step";

    const ParameterSet q = pretrain_q(target, plan);
    {
      // Batch estimate of the pre-trained q on fresh pre-training noise.
      const MethodConfig plain = method_config(Method::plain_vi);
      ad::Tape tape;
      double s = 0.0;
      for (std::size_t c = 0; c < plan.batch; ++c) {
        const NoiseBundle nb = draw_noise(plan.seed, kPretrainStream + plan.pretrain_steps, c, D, 1);
        tape.reset();
        s += estimate_elbo(plain, lift_parameters(tape, q, plain, {}), target, nb).value.scalar();
      }
      r.pretrain_elbo = s / static_cast<double>(plan.batch);
    }

    InitOptions opts;
    opts.step = plan.init_step;
    opts.friction = plan.init_friction;
    opts.hidden = hidden;
    opts.seed = plan.seed;
    ParameterSet params = init_parameters(config, D, plan.K, opts);
    params.at("q.mean").values = q.at("q.mean").values;
    params.at("q.raw_scale").values = q.at("q.raw_scale").values;

    LoopStats stats = optimize(config, params, target, plan.K, plan.steps, plan.lr, 0, plan, true);
    r.curve = std::move(stats.curve);
    r.skipped_steps = stats.skipped;
    r.clipped_steps = stats.clipped;
    fill_learned(r, config, params);
    if (stats.diverged) {
      r.status = "diverged";
      r.message = stats.message;
      return finish();
    }
    if (stats.skipped == plan.steps) {
      r.status = "failed";
      r.message = "every training step was skipped; last error: " + stats.message;
      return finish();
    }
    const ElboSummary s = evaluate_elbo_mean(config, params, target, plan.eval_samples, plan.seed);
    r.final_mean = s.mean;
    r.final_stderr = s.std_error;
    r.final_n = s.n;
    if (s.mean < plan.divergence_floor) {
      r.status = "diverged";
      r.message = "final ELBO " + fmt(s.mean) + " below " + fmt(plan.divergence_floor);
    }
  } catch (const std::exception& e) {
    r.status = "failed";
    r.message = e.what();
  }
  return finish();
}

std::vector<RunRecord> run_grid(const std::vector<TrainPlan>& plans,
                                const std::function<void(const RunRecord&)>& on_record) {
  std::vector<RunRecord> out;
  out.reserve(plans.size());
  for (const auto& plan : plans) {
    out.push_back(train(plan));
    if (on_record) on_record(out.back());
  }
  return out;
}

std::vector<RunRecord> select_best_lr(const std::vector<RunRecord>& records) {
  // (model, method, K) → lr → completed records
  std::map<std::tuple<std::string, std::string, std::size_t>, std::map<double, std::vector<const RunRecord*>>> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.plan.model, method_name(r.plan.method), r.plan.K}];
    auto& bucket = g[r.plan.lr];
    if (r.completed()) bucket.push_back(&r);
  }
  std::vector<RunRecord> out;
  for (const auto& [key, by_lr] : groups) {
    const std::vector<const RunRecord*>* best = nullptr;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (const auto& [lr, runs] : by_lr) {
      if (runs.empty()) continue;
      double m = 0.0;
      for (const auto* r : runs) m += r->final_mean;
      m /= static_cast<double>(runs.size());
      if (!best || m > best_mean) {
        best = &runs;
        best_mean = m;
      }
    }
    if (!best) continue;
    for (const auto* r : *best) out.push_back(*r);
  }
  return out;
}

}  // namespace ldvi
