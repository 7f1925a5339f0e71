#pragma once

// Benchmark posteriors as unnormalized log-densities over unconstrained R^D.
// Every model provides both log p̄(z) and ∇log p̄(z) as tape expressions, so
// the estimator can differentiate through gradient evaluations with a single
// reverse sweep.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldvi/diffengine.hpp"

namespace ldvi {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standardized design matrix (intercept column last) with 0/1 labels.
struct Dataset {
  ad::ConstMatrix features;
  std::vector<double> labels;
  std::string positive_label;
  std::string negative_label;
};

/// Reads a comma-separated file whose last column is the class label. A
/// header row is detected when its first field is not numeric. Columns are
/// standardized (population sd); constant columns become zero.
Dataset load_binary_classification_csv(const std::string& path, const std::string& positive_label);

class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string transform_description() const = 0;

  virtual ad::Var log_density(const ad::Var& z) const = 0;
  virtual ad::Var grad_log_density(const ad::Var& z) const = 0;

  /// Known normalizer, only for synthetic targets.
  virtual std::optional<double> log_normalizer() const { return std::nullopt; }

  double log_density_value(const std::vector<double>& z) const;
  std::vector<double> grad_log_density_value(const std::vector<double>& z) const;

 protected:
  void check_dim(const ad::Var& z) const;
};

class LogisticRegressionTarget : public TargetModel {
 public:
  LogisticRegressionTarget(std::string name, Dataset data, double prior_variance = 1.0);

  std::string name() const override { return name_; }
  std::size_t dim() const override { return data_.features.cols; }
  std::string transform_description() const override;
  ad::Var log_density(const ad::Var& w) const override;
  ad::Var grad_log_density(const ad::Var& w) const override;

  const Dataset& data() const { return data_; }

 private:
  std::string name_;
  Dataset data_;
  double prior_variance_;
};

/// v = (log α_inn, log α_obs, x_1..x_30).
class BrownianMotionTarget : public TargetModel {
 public:
  /// `observations` has 30 entries; NaN marks a missing value.
  explicit BrownianMotionTarget(std::vector<double> observations);
  BrownianMotionTarget();

  std::string name() const override { return "brownian"; }
  std::size_t dim() const override { return 32; }
  std::string transform_description() const override;
  ad::Var log_density(const ad::Var& v) const override;
  ad::Var grad_log_density(const ad::Var& v) const override;

  const std::vector<std::uint32_t>& observed() const { return observed_; }

 private:
  std::vector<double> observations_;
  std::vector<std::uint32_t> observed_;
  std::vector<double> observed_values_;
};

/// v interleaves (x_i, y_i, z_i) for i = 1..30.
class LorenzTarget : public TargetModel {
 public:
  explicit LorenzTarget(std::vector<double> observations);
  LorenzTarget();

  std::string name() const override { return "lorenz"; }
  std::size_t dim() const override { return 90; }
  std::string transform_description() const override;
  ad::Var log_density(const ad::Var& v) const override;
  ad::Var grad_log_density(const ad::Var& v) const override;

 private:
  std::vector<double> observations_;
  std::vector<std::uint32_t> observed_;
  std::vector<double> observed_values_;
};

struct SeedsData {
  std::vector<double> r;
  std::vector<double> n;
  std::vector<double> x1;
  std::vector<double> x2;
};

SeedsData seeds_table();

/// v = (log τ, a_0, a_1, a_2, a_12, b_1..b_21).
class SeedsTarget : public TargetModel {
 public:
  explicit SeedsTarget(SeedsData data);
  SeedsTarget();

  std::string name() const override { return "seeds"; }
  std::size_t dim() const override { return 26; }
  std::string transform_description() const override;
  ad::Var log_density(const ad::Var& v) const override;
  ad::Var grad_log_density(const ad::Var& v) const override;

 private:
  SeedsData data_;
  ad::ConstMatrix design_;
  double log_binom_ = 0.0;
};

/// exp(-½ Σ (z-μ)²/σ²) with log Z = Σ ½ log(2πσ²).
class GaussianToyTarget : public TargetModel {
 public:
  GaussianToyTarget(std::vector<double> mean, std::vector<double> var);

  std::string name() const override;
  std::size_t dim() const override { return mean_.size(); }
  std::string transform_description() const override { return "identity"; }
  ad::Var log_density(const ad::Var& z) const override;
  ad::Var grad_log_density(const ad::Var& z) const override;
  std::optional<double> log_normalizer() const override;

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& var() const { return var_; }

 private:
  std::vector<double> mean_;
  std::vector<double> var_;
  std::vector<double> neg_precision_;
};

std::vector<std::string> model_names();

/// Builds a named model. Logistic-regression models read `<data_dir>/<name>.csv`.
/// `toy<D>` builds a D-dimensional Gaussian toy with means cycling through
/// -1, 0, 1 and variances spread evenly over [0.5, 2] (D = 1 gives N(-1, 1)).
std::shared_ptr<const TargetModel> make_target(const std::string& name, const std::string& data_dir);

}  // namespace ldvi
