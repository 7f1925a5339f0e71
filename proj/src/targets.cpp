#include "ldvi/targets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ldvi {

namespace {

using ad::Var;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

Var zeros_like_size(ad::Tape& t, std::size_t n) { return t.zeros(n); }

}  // namespace

Dataset load_binary_classification_csv(const std::string& path, const std::string& positive_label) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_features = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() < 2) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected at least two columns");
    }
    double probe = 0.0;
    if (first) {
      first = false;
      if (!parse_double(fields[0], probe)) continue;  // header row
    }
    if (n_features == 0) n_features = fields.size() - 1;
    if (fields.size() - 1 != n_features) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(n_features + 1) + " columns, got " +
                      std::to_string(fields.size()));
    }
    std::vector<double> row(n_features);
    for (std::size_t j = 0; j < n_features; ++j) {
      if (!parse_double(fields[j], row[j])) {
        throw DataError(path + ":" + std::to_string(line_no) + ": cannot parse '" + fields[j] +
                        "' in column " + std::to_string(j + 1));
      }
    }
    rows.push_back(std::move(row));
    labels.push_back(fields.back());
  }
  if (rows.empty()) throw DataError(path + ": no data rows");

  Dataset data;
  data.positive_label = positive_label;
  data.labels.reserve(rows.size());
  std::size_t label_line = 0;
  for (const auto& lab : labels) {
    ++label_line;
    if (lab == positive_label) {
      data.labels.push_back(1.0);
      continue;
    }
    if (data.negative_label.empty()) data.negative_label = lab;
    if (lab != data.negative_label) {
      throw DataError(path + ": unknown label value '" + lab + "' in data row " +
                      std::to_string(label_line) + " (labels seen: '" + positive_label +
                      "', '" + data.negative_label + "')");
    }
    data.labels.push_back(0.0);
  }
  if (std::find(labels.begin(), labels.end(), positive_label) == labels.end()) {
    throw DataError(path + ": positive label '" + positive_label + "' never occurs");
  }

  const std::size_t n = rows.size();
  const std::size_t d = n_features + 1;
  data.features.rows = n;
  data.features.cols = d;
  data.features.data.assign(n * d, 0.0);
  for (std::size_t j = 0; j < n_features; ++j) {
    double mean = 0.0;
    for (const auto& r : rows) mean += r[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& r : rows) var += (r[j] - mean) * (r[j] - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      data.features.data[i * d + j] = sd > 1e-12 ? (rows[i][j] - mean) / sd : 0.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) data.features.data[i * d + n_features] = 1.0;
  return data;
}

// ---------------------------------------------------------------------------

void TargetModel::check_dim(const Var& z) const {
  if (z.size() != dim()) {
    throw ad::ShapeError(name() + ": expected " + std::to_string(dim()) + " coordinates, got " +
                         std::to_string(z.size()));
  }
}

double TargetModel::log_density_value(const std::vector<double>& z) const {
  ad::Tape t;
  return log_density(t.lift(z)).scalar();
}

std::vector<double> TargetModel::grad_log_density_value(const std::vector<double>& z) const {
  ad::Tape t;
  return grad_log_density(t.lift(z)).to_vector();
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticRegressionTarget::LogisticRegressionTarget(std::string name, Dataset data,
                                                   double prior_variance)
    : name_(std::move(name)), data_(std::move(data)), prior_variance_(prior_variance) {
  if (!(prior_variance_ > 0.0)) throw std::invalid_argument("prior variance must be positive");
  if (data_.labels.size() != data_.features.rows) {
    throw std::invalid_argument("label count does not match feature rows");
  }
}

std::string LogisticRegressionTarget::transform_description() const {
  std::ostringstream os;
  os << "identity; weights ~ N(0, " << prior_variance_ << "); features standardized, intercept last";
  return os.str();
}

Var LogisticRegressionTarget::log_density(const Var& w) const {
  check_dim(w);
  ad::Tape& t = *w.tape();
  const Var a = ad::matvec(data_.features, w);
  const Var y = t.lift(data_.labels);
  const Var lik = ad::dot(y, a) - ad::sum(ad::softplus(a));
  return lik + ad::gaussian_logpdf(w, zeros_like_size(t, w.size()), prior_variance_);
}

Var LogisticRegressionTarget::grad_log_density(const Var& w) const {
  check_dim(w);
  ad::Tape& t = *w.tape();
  const Var a = ad::matvec(data_.features, w);
  const Var y = t.lift(data_.labels);
  return ad::matvec_t(data_.features, y - ad::sigmoid(a)) - ad::scale(1.0 / prior_variance_, w);
}

// ---------------------------------------------------------------------------
// Brownian motion with missing middle observations

namespace {

// Observations from the Inference Gym "BrownianMotionMissingMiddleObservations"
// dataset (float32 values); the ten middle entries are unobserved.
const std::vector<double>& brownian_observations() {
  static const std::vector<double> obs = {
      0.21592641, 0.118771404, -0.07945447, 0.037677474, -0.27885845, -0.1484156,
      -0.3250906, -0.22957903, -0.44110894, -0.09830782, kNaN, kNaN,
      kNaN, kNaN, kNaN, kNaN, kNaN, kNaN,
      kNaN, kNaN, -0.8786016, -0.83736074, -0.7384849, -0.8939254,
      -0.7774566, -0.70238715, -0.87771565, -0.51853573, -0.6948214, -0.6202789};
  return obs;
}

// x-coordinate observations from the Inference Gym "ConvectionLorenzBridge"
// dataset. The first entry is outside the observation window and is ignored.
const std::vector<double>& lorenz_observations() {
  static const std::vector<double> obs = {
      -0.2761459, 0.18631345, 0.1467675, -1.3148443, -1.2150469, -0.44544014,
      -0.5505127, -0.9422926, -1.9986963, 0.13876402, kNaN, kNaN,
      kNaN, kNaN, kNaN, kNaN, kNaN, kNaN,
      kNaN, kNaN, -16.095385, -18.901144, -21.515736, -22.736586,
      -23.451488, -21.417793, -15.236895, -7.6766376, -0.19389218, 6.26647};
  return obs;
}

constexpr double kBrownianPriorVar = 4.0;  // log α ~ N(0, 2²)

void collect_observed(const std::vector<double>& obs, std::size_t first,
                      std::vector<std::uint32_t>& idx, std::vector<double>& vals) {
  for (std::size_t i = first; i < obs.size(); ++i) {
    if (std::isnan(obs[i])) continue;
    idx.push_back(static_cast<std::uint32_t>(i));
    vals.push_back(obs[i]);
  }
}

}  // namespace

BrownianMotionTarget::BrownianMotionTarget() : BrownianMotionTarget(brownian_observations()) {}

BrownianMotionTarget::BrownianMotionTarget(std::vector<double> observations)
    : observations_(std::move(observations)) {
  if (observations_.size() != 30) throw std::invalid_argument("brownian: need 30 observations");
  collect_observed(observations_, 0, observed_, observed_values_);
  if (observed_.empty()) throw std::invalid_argument("brownian: no observed values");
}

std::string BrownianMotionTarget::transform_description() const {
  return "u = log alpha for both noise scales, log alpha ~ N(0, 2^2) on u; observed indices "
         "{1..10} U {21..30}";
}

Var BrownianMotionTarget::log_density(const Var& v) const {
  check_dim(v);
  ad::Tape& t = *v.tape();
  const Var u_inn = ad::slice(v, 0, 1);
  const Var u_obs = ad::slice(v, 1, 1);
  const Var x = ad::slice(v, 2, 30);
  const Var zero1 = t.zeros(1);

  Var lp = ad::gaussian_logpdf(u_inn, zero1, kBrownianPriorVar) +
           ad::gaussian_logpdf(u_obs, zero1, kBrownianPriorVar);

  const Var prev = ad::concat({zero1, ad::slice(x, 0, 29)});
  const Var r = x - prev;
  lp = lp + t.lift(-15.0 * kLog2Pi) - ad::scale(30.0, u_inn) -
       ad::scale(0.5, ad::exp(ad::scale(-2.0, u_inn)) * ad::dot(r, r));

  const double m = static_cast<double>(observed_.size());
  const Var e = t.lift(observed_values_) - ad::gather(x, observed_);
  lp = lp + t.lift(-0.5 * m * kLog2Pi) - ad::scale(m, u_obs) -
       ad::scale(0.5, ad::exp(ad::scale(-2.0, u_obs)) * ad::dot(e, e));
  return lp;
}

Var BrownianMotionTarget::grad_log_density(const Var& v) const {
  check_dim(v);
  ad::Tape& t = *v.tape();
  const Var u_inn = ad::slice(v, 0, 1);
  const Var u_obs = ad::slice(v, 1, 1);
  const Var x = ad::slice(v, 2, 30);
  const Var zero1 = t.zeros(1);
  const double m = static_cast<double>(observed_.size());

  const Var r = x - ad::concat({zero1, ad::slice(x, 0, 29)});
  const Var r_next = ad::concat({ad::slice(r, 1, 29), zero1});
  const Var e = t.lift(observed_values_) - ad::gather(x, observed_);
  const Var prec_inn = ad::exp(ad::scale(-2.0, u_inn));
  const Var prec_obs = ad::exp(ad::scale(-2.0, u_obs));

  const Var g_inn = ad::scale(-1.0 / kBrownianPriorVar, u_inn) + t.lift(-30.0) +
                    prec_inn * ad::dot(r, r);
  const Var g_obs =
      ad::scale(-1.0 / kBrownianPriorVar, u_obs) + t.lift(-m) + prec_obs * ad::dot(e, e);
  const Var g_x = ad::scale(prec_inn, r_next - r) + ad::scale(prec_obs, ad::scatter(e, observed_, 30));
  return ad::concat({g_inn, g_obs, g_x});
}

// ---------------------------------------------------------------------------
// Lorenz system bridge

namespace {

constexpr double kLorenzInnovationVar = 0.01;  // scale 0.1
constexpr std::size_t kLorenzSteps = 30;

std::vector<std::uint32_t> strided(std::size_t start) {
  std::vector<std::uint32_t> idx(kLorenzSteps);
  for (std::size_t i = 0; i < kLorenzSteps; ++i) idx[i] = static_cast<std::uint32_t>(3 * i + start);
  return idx;
}

struct LorenzResiduals {
  Var px, py, pz;  // previous states, i = 1..29
  Var rx, ry, rz;  // current minus transition mean, i = 2..30
};

LorenzResiduals lorenz_residuals(const Var& xs, const Var& ys, const Var& zs) {
  ad::Tape& t = *xs.tape();
  LorenzResiduals out;
  out.px = ad::slice(xs, 0, kLorenzSteps - 1);
  out.py = ad::slice(ys, 0, kLorenzSteps - 1);
  out.pz = ad::slice(zs, 0, kLorenzSteps - 1);
  const Var cx = ad::slice(xs, 1, kLorenzSteps - 1);
  const Var cy = ad::slice(ys, 1, kLorenzSteps - 1);
  const Var cz = ad::slice(zs, 1, kLorenzSteps - 1);
  const std::vector<double> c28(kLorenzSteps - 1, 28.0);
  const Var mx = ad::scale(10.0, out.py - out.px);
  const Var my = out.px * (t.lift(c28) - out.pz) - out.py;
  const Var mz = out.px * out.py - ad::scale(8.0 / 3.0, out.pz);
  out.rx = cx - mx;
  out.ry = cy - my;
  out.rz = cz - mz;
  return out;
}

}  // namespace

LorenzTarget::LorenzTarget() : LorenzTarget(lorenz_observations()) {}

LorenzTarget::LorenzTarget(std::vector<double> observations) : observations_(std::move(observations)) {
  if (observations_.size() != kLorenzSteps) throw std::invalid_argument("lorenz: need 30 observations");
  collect_observed(observations_, 1, observed_, observed_values_);
}

std::string LorenzTarget::transform_description() const {
  return "identity; state interleaved (x_i, y_i, z_i); innovation scale 0.1; x observed at "
         "{2..10} U {21..30} with unit scale";
}

Var LorenzTarget::log_density(const Var& v) const {
  check_dim(v);
  ad::Tape& t = *v.tape();
  const Var xs = ad::gather(v, strided(0));
  const Var ys = ad::gather(v, strided(1));
  const Var zs = ad::gather(v, strided(2));
  const auto res = lorenz_residuals(xs, ys, zs);

  const Var first = ad::slice(v, 0, 3);
  Var lp = ad::standard_normal_logpdf(first);
  const double n_tr = 3.0 * static_cast<double>(kLorenzSteps - 1);
  const Var sq = ad::dot(res.rx, res.rx) + ad::dot(res.ry, res.ry) + ad::dot(res.rz, res.rz);
  lp = lp + t.lift(-0.5 * n_tr * std::log(2.0 * std::numbers::pi * kLorenzInnovationVar)) -
       ad::scale(0.5 / kLorenzInnovationVar, sq);
  if (!observed_.empty()) {
    lp = lp + ad::gaussian_logpdf(t.lift(observed_values_), ad::gather(xs, observed_), 1.0);
  }
  return lp;
}

Var LorenzTarget::grad_log_density(const Var& v) const {
  check_dim(v);
  ad::Tape& t = *v.tape();
  const Var xs = ad::gather(v, strided(0));
  const Var ys = ad::gather(v, strided(1));
  const Var zs = ad::gather(v, strided(2));
  const auto res = lorenz_residuals(xs, ys, zs);
  const double p = 1.0 / kLorenzInnovationVar;
  const std::vector<double> c28(kLorenzSteps - 1, 28.0);
  const Var zero1 = t.zeros(1);

  // Gradient through the transition means, landing on the previous state.
  const Var gpx = ad::scale(p, ad::scale(-10.0, res.rx) + (t.lift(c28) - res.pz) * res.ry +
                                   res.py * res.rz);
  const Var gpy = ad::scale(p, ad::scale(10.0, res.rx) - res.ry + res.px * res.rz);
  const Var gpz = ad::scale(p, ad::scale(-1.0, res.px * res.ry) - ad::scale(8.0 / 3.0, res.rz));

  auto assemble = [&](const Var& prev_part, const Var& resid, const Var& state) {
    const Var first = ad::concat({ad::scale(-1.0, ad::slice(state, 0, 1)), t.zeros(kLorenzSteps - 1)});
    return ad::concat({prev_part, zero1}) + ad::concat({zero1, ad::scale(-p, resid)}) + first;
  };
  Var gx = assemble(gpx, res.rx, xs);
  const Var gy = assemble(gpy, res.ry, ys);
  const Var gz = assemble(gpz, res.rz, zs);
  if (!observed_.empty()) {
    const Var e = t.lift(observed_values_) - ad::gather(xs, observed_);
    gx = gx + ad::scatter(e, observed_, kLorenzSteps);
  }
  return ad::scatter(gx, strided(0), 90) + ad::scatter(gy, strided(1), 90) +
         ad::scatter(gz, strided(2), 90);
}

// ---------------------------------------------------------------------------
// Seeds random-effects logistic regression

SeedsData seeds_table() {
  // Crowder (1978) germination counts for 21 plates: seed variety x1 and
  // root extract x2.
  SeedsData d;
  d.r = {10, 23, 23, 26, 17, 5, 53, 55, 32, 46, 10, 8, 10, 8, 23, 0, 3, 22, 15, 32, 3};
  d.n = {39, 62, 81, 51, 39, 6, 74, 72, 51, 79, 13, 16, 30, 28, 45, 4, 12, 41, 30, 51, 7};
  d.x1 = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  d.x2 = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  return d;
}

namespace {
constexpr double kGammaShape = 0.01;
constexpr double kGammaRate = 0.01;
constexpr double kSeedsFixedVar = 100.0;  // a ~ N(0, 10²)
constexpr std::size_t kPlates = 21;
}  // namespace

SeedsTarget::SeedsTarget() : SeedsTarget(seeds_table()) {}

SeedsTarget::SeedsTarget(SeedsData data) : data_(std::move(data)) {
  const std::size_t n = data_.r.size();
  if (n != kPlates || data_.n.size() != n || data_.x1.size() != n || data_.x2.size() != n) {
    throw std::invalid_argument("seeds: need 21 plates");
  }
  design_.rows = n;
  design_.cols = 4;
  design_.data.resize(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    design_.data[i * 4 + 0] = 1.0;
    design_.data[i * 4 + 1] = data_.x1[i];
    design_.data[i * 4 + 2] = data_.x2[i];
    design_.data[i * 4 + 3] = data_.x1[i] * data_.x2[i];
    log_binom_ += std::lgamma(data_.n[i] + 1.0) - std::lgamma(data_.r[i] + 1.0) -
                  std::lgamma(data_.n[i] - data_.r[i] + 1.0);
  }
}

std::string SeedsTarget::transform_description() const {
  return "u = log tau with Gamma(0.01, rate 0.01) prior and +u Jacobian; a ~ N(0, 10^2); "
         "b_i ~ N(0, 1/tau)";
}

Var SeedsTarget::log_density(const Var& v) const {
  check_dim(v);
  ad::Tape& t = *v.tape();
  const Var u = ad::slice(v, 0, 1);
  const Var a = ad::slice(v, 1, 4);
  const Var b = ad::slice(v, 5, kPlates);
  const Var tau = ad::exp(u);

  const double gamma_const = kGammaShape * std::log(kGammaRate) - std::lgamma(kGammaShape);
  Var lp = t.lift(gamma_const) + ad::scale(kGammaShape, u) - ad::scale(kGammaRate, tau);
  lp = lp + ad::gaussian_logpdf(a, t.zeros(4), kSeedsFixedVar);
  const double nb = static_cast<double>(kPlates);
  lp = lp + t.lift(-0.5 * nb * kLog2Pi) + ad::scale(0.5 * nb, u) -
       ad::scale(0.5, tau * ad::dot(b, b));

  const Var logits = ad::matvec(design_, a) + b;
  lp = lp + t.lift(log_binom_) + ad::dot(t.lift(data_.r), logits) -
       ad::dot(t.lift(data_.n), ad::softplus(logits));
  return lp;
}

Var SeedsTarget::grad_log_density(const Var& v) const {
  check_dim(v);
  ad::Tape& t = *v.tape();
  const Var u = ad::slice(v, 0, 1);
  const Var a = ad::slice(v, 1, 4);
  const Var b = ad::slice(v, 5, kPlates);
  const Var tau = ad::exp(u);
  const double nb = static_cast<double>(kPlates);

  const Var logits = ad::matvec(design_, a) + b;
  const Var resid = t.lift(data_.r) - t.lift(data_.n) * ad::sigmoid(logits);
  const Var g_u = t.lift(kGammaShape + 0.5 * nb) - ad::scale(kGammaRate, tau) -
                  ad::scale(0.5, tau * ad::dot(b, b));
  const Var g_a = ad::matvec_t(design_, resid) - ad::scale(1.0 / kSeedsFixedVar, a);
  const Var g_b = resid - ad::scale(tau, b);
  return ad::concat({g_u, g_a, g_b});
}

// ---------------------------------------------------------------------------
// Gaussian toy

GaussianToyTarget::GaussianToyTarget(std::vector<double> mean, std::vector<double> var)
    : mean_(std::move(mean)), var_(std::move(var)) {
  if (mean_.empty() || mean_.size() != var_.size()) {
    throw std::invalid_argument("gaussian toy: mean and variance must be non-empty and equal length");
  }
  for (double s : var_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ad::DomainError(ad::Op::log, s);
  }
  neg_precision_.resize(var_.size());
  for (std::size_t i = 0; i < var_.size(); ++i) neg_precision_[i] = -1.0 / var_[i];
}

std::string GaussianToyTarget::name() const { return "toy" + std::to_string(mean_.size()); }

Var GaussianToyTarget::log_density(const Var& z) const {
  check_dim(z);
  ad::Tape& t = *z.tape();
  const Var r = z - t.lift(mean_);
  return ad::scale(0.5, ad::dot(t.lift(neg_precision_), r * r));
}

Var GaussianToyTarget::grad_log_density(const Var& z) const {
  check_dim(z);
  ad::Tape& t = *z.tape();
  return t.lift(neg_precision_) * (z - t.lift(mean_));
}

std::optional<double> GaussianToyTarget::log_normalizer() const {
  double lz = 0.0;
  for (double s : var_) lz += 0.5 * std::log(2.0 * std::numbers::pi * s);
  return lz;
}

// ---------------------------------------------------------------------------

std::vector<std::string> model_names() {
  return {"ionosphere", "sonar", "brownian", "lorenz", "seeds", "toy<D>"};
}

std::shared_ptr<const TargetModel> make_target(const std::string& name, const std::string& data_dir) {
  if (name == "ionosphere" || name == "sonar") {
    const std::string dir = data_dir.empty() ? std::string("data") : data_dir;
    const std::string positive = name == "ionosphere" ? "g" : "M";
    return std::make_shared<LogisticRegressionTarget>(
        name, load_binary_classification_csv(dir + "/" + name + ".csv", positive));
  }
  if (name == "brownian") return std::make_shared<BrownianMotionTarget>();
  if (name == "lorenz") return std::make_shared<LorenzTarget>();
  if (name == "seeds") return std::make_shared<SeedsTarget>();
  if (name.rfind("toy", 0) == 0 && name.size() > 3) {
    std::size_t d = 0;
    try {
      d = static_cast<std::size_t>(std::stoul(name.substr(3)));
    } catch (const std::exception&) {
      d = 0;
    }
    if (d == 0 || d > 10000 || std::to_string(d) != name.substr(3)) {
      throw std::invalid_argument("bad toy model name '" + name + "' (expected toy<D>, D >= 1)");
    }
    std::vector<double> mean(d);
    std::vector<double> var(d);
    for (std::size_t i = 0; i < d; ++i) {
      mean[i] = static_cast<double>(i % 3) - 1.0;
      var[i] = d == 1 ? 1.0 : 0.5 + 1.5 * static_cast<double>(i) / static_cast<double>(d - 1);
    }
    return std::make_shared<GaussianToyTarget>(mean, var);
  }
  std::string valid;
  for (const auto& m : model_names()) valid += (valid.empty() ? "" : ", ") + m;
  throw std::invalid_argument("unknown model '" + name + "'; valid models: " + valid);
}

}  // namespace ldvi
