#pragma once

// Adam training of a method's trainable parameters against the negative
// batch-mean augmented ELBO, preceded by plain-VI pre-training of q, plus the
// grid runner that keeps the best learning rate.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ldvi/estimator.hpp"
#include "ldvi/params.hpp"
#include "ldvi/targets.hpp"

namespace ldvi {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam update in place. A gradient with any non-finite entry
/// leaves params and state untouched and returns false.
bool adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr);

/// Rescales `grads` to global norm `max_norm` if it is larger; returns true if
/// it did.
bool clip_global_norm(std::span<double> grads, double max_norm);

struct TrainPlan {
  Method method = Method::ldvi;
  std::string model;
  std::size_t K = 8;
  double lr = 1e-3;
  std::size_t steps = 5000;
  std::size_t batch = 32;
  std::size_t eval_samples = 1000;
  std::uint64_t seed = 0;
  std::size_t pretrain_steps = 2000;
  double pretrain_lr = 1e-2;
  /// Score network width, 0 → max(64, 2D).
  std::size_t hidden = 0;
  double init_step = 0.05;
  double init_friction = 1.0;
  double clip_norm = 100.0;
  double divergence_floor = -1e8;
  /// Training curve keeps every n-th step (and the last).
  std::size_t curve_every = 50;
  /// Worker threads for chains within a batch; results do not depend on it.
  std::size_t threads = 1;
  /// Directory of the CSV datasets; not part of the run's identity.
  std::string data_dir;
};

struct CurvePoint {
  std::size_t step = 0;
  double elbo = 0.0;
};

struct RunRecord {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  /// "completed", "diverged" or "failed".
  std::string status = "completed";
  std::string message;
  TrainPlan plan;
  std::map<std::string, std::string> metadata;
  std::vector<CurvePoint> curve;
  double final_mean = 0.0;
  double final_stderr = 0.0;
  std::size_t final_n = 0;
  double pretrain_elbo = 0.0;
  /// Final δ, γ, η and β_1..β_{K-1}, where the method has them.
  std::map<std::string, std::vector<double>> learned;
  std::size_t skipped_steps = 0;
  std::size_t clipped_steps = 0;
  double wall_time_s = 0.0;

  bool completed() const { return status == "completed"; }
};

/// Plain-VI q for a target: mean and softplus⁻¹ scale after `steps` Adam
/// steps from N(0, I). Results are cached per (model, seed, steps, lr, batch).
ParameterSet pretrain_q(const TargetModel& target, const TrainPlan& plan);

/// Trains one run. Never throws for numerical trouble: divergence and errors
/// are reported through the record's status and message.
RunRecord train(const TrainPlan& plan);
RunRecord train(const TrainPlan& plan, const TargetModel& target);

/// Runs every plan in order, reporting each record as it finishes.
std::vector<RunRecord> run_grid(const std::vector<TrainPlan>& plans,
                                const std::function<void(const RunRecord&)>& on_record = {});

/// Best learning rate per (model, method, K): the lr whose completed runs
/// have the highest mean final ELBO across seeds. Returns the records of the
/// winning lr for each group.
std::vector<RunRecord> select_best_lr(const std::vector<RunRecord>& records);

}  // namespace ldvi
