#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ldvi/targets.hpp"
#include "support.hpp"

using namespace ldvi;
using testing::oracle_point;

namespace {

const std::string kDataDir = LDVI_SOURCE_DIR "/data";
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::string write_temp(const std::string& name, const std::string& text) {
  const std::string path = std::string(LDVI_BINARY_DIR) + "/" + name;
  std::ofstream(path) << text;
  return path;
}

double fd_gradient_error(const TargetModel& m, const std::vector<double>& v) {
  const auto g = m.grad_log_density_value(v);
  const auto fd = testing::central_difference(
      [&](const std::vector<double>& x) { return m.log_density_value(x); }, v, 1e-5);
  return testing::vec_rel_err(g, fd);
}

// Gradient of log p̄ through the tape (differentiating log_density itself).
std::vector<double> tape_gradient(const TargetModel& m, const std::vector<double>& v) {
  ad::Tape t;
  ad::Var x = t.lift(v, true);
  t.backward(m.log_density(x));
  return {t.adjoint(x).begin(), t.adjoint(x).end()};
}

}  // namespace

TEST_SUITE("targets") {
  TEST_CASE("benchmark datasets load with the expected dimensions") {
    const Dataset iono = load_binary_classification_csv(kDataDir + "/ionosphere.csv", "g");
    CHECK(iono.features.rows == 351);
    CHECK(iono.features.cols == 35);
    const Dataset sonar = load_binary_classification_csv(kDataDir + "/sonar.csv", "M");
    CHECK(sonar.features.rows == 208);
    CHECK(sonar.features.cols == 61);

    for (const Dataset* d : {&iono, &sonar}) {
      const std::size_t n = d->features.rows;
      for (std::size_t j = 0; j + 1 < d->features.cols; ++j) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += d->features(i, j);
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) sq += std::pow(d->features(i, j) - mean, 2);
        const double sd = std::sqrt(sq / static_cast<double>(n));
        CHECK(std::abs(mean) < 1e-9);
        // ionosphere's second column is constant and standardizes to zeros.
        CHECK((std::abs(sd - 1.0) < 1e-9 || sd == 0.0));
      }
      for (std::size_t i = 0; i < n; ++i) CHECK(d->features(i, d->features.cols - 1) == 1.0);
    }
  }

  TEST_CASE("constant column becomes zeros") {
    const auto path = write_temp("const.csv", "a,b,label\n1,5,x\n2,5,y\n3,5,x\n");
    const Dataset d = load_binary_classification_csv(path, "x");
    CHECK(d.features.cols == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(d.features(i, 1) == 0.0);
    CHECK(d.labels == std::vector<double>{1, 0, 1});
  }

  TEST_CASE("parse errors name the line") {
    const auto bad = write_temp("bad.csv", "a,b,label\n1,2,x\n1,oops,y\n");
    try {
      load_binary_classification_csv(bad, "x");
      FAIL("expected parse failure");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    const auto labels = write_temp("labels.csv", "1,2,x\n1,3,y\n1,4,z\n");
    CHECK_THROWS_WITH_AS(load_binary_classification_csv(labels, "x"),
                         doctest::Contains("unknown label value 'z'"), DataError);
    CHECK_THROWS_AS(load_binary_classification_csv(kDataDir + "/missing.csv", "x"), DataError);
  }

  TEST_CASE("logistic regression closed forms") {
    const Dataset iono = load_binary_classification_csv(kDataDir + "/ionosphere.csv", "g");
    const LogisticRegressionTarget m("ionosphere", iono);
    const std::vector<double> w0(35, 0.0);
    const double expected = 351.0 * std::log(0.5) - 0.5 * 35.0 * kLog2Pi;
    CHECK(m.log_density_value(w0) == doctest::Approx(expected).epsilon(1e-13));

    Dataset one;
    one.features = {1, 1, {1.0}};
    one.labels = {1.0};
    const LogisticRegressionTarget single("single", one);
    CHECK(single.log_density_value({0.0}) ==
          doctest::Approx(std::log(0.5) - 0.5 * kLog2Pi).epsilon(1e-14));
    CHECK_THROWS_AS(single.log_density_value({0.0, 1.0}), ad::ShapeError);
  }

  TEST_CASE("values agree with the scipy oracle") {
    // Frozen from tests/oracles/targets_oracle.py.
    const auto iono = make_target("ionosphere", kDataDir);
    const auto sonar = make_target("sonar", kDataDir);
    CHECK(iono->log_density_value(oracle_point(0, 35)) == doctest::Approx(-280.3109727506423).epsilon(1e-12));
    CHECK(sonar->log_density_value(oracle_point(0, 61)) == doctest::Approx(-263.472829977353).epsilon(1e-12));

    const BrownianMotionTarget brown;
    CHECK(brown.log_density_value(std::vector<double>(32, 0.0)) ==
          doctest::Approx(-52.347615199863405).epsilon(1e-12));
    CHECK(brown.log_density_value(oracle_point(0, 32)) == doctest::Approx(-64.01298625773363).epsilon(1e-12));

    std::vector<double> zero_obs(30, 0.0);
    for (std::size_t i = 10; i < 20; ++i) zero_obs[i] = std::nan("");
    const BrownianMotionTarget brown_zero(zero_obs);
    CHECK(brown_zero.log_density_value(std::vector<double>(32, 0.0)) ==
          doctest::Approx(-49.171098087762914).epsilon(1e-13));

    const LorenzTarget lorenz;
    CHECK(lorenz.log_density_value(oracle_point(0, 90)) == doctest::Approx(-58798.37521630579).epsilon(1e-12));
    std::vector<double> lz_obs(30, 0.0);
    for (std::size_t i = 10; i < 20; ++i) lz_obs[i] = std::nan("");
    const LorenzTarget lorenz_zero(lz_obs);
    CHECK(lorenz_zero.log_density_value(std::vector<double>(90, 0.0)) ==
          doctest::Approx(100.1606029711728).epsilon(1e-12));

    const double seeds_expected[10] = {-158.9262897096006,  -139.81991383938598, -118.82221496250634,
                                       -145.76724136393418, -161.4086962989096,  -124.8208125299969,
                                       -127.75399833967477, -151.4230287760654,  -156.7236714569097,
                                       -116.16017814920912};
    const SeedsTarget seeds;
    for (std::size_t i = 0; i < 10; ++i) {
      auto v = oracle_point(i, 26);
      v[0] *= 0.5;
      CHECK(std::abs(seeds.log_density_value(v) - seeds_expected[i]) < 1e-9);
    }
    CHECK(std::abs(seeds.log_density_value(std::vector<double>(26, 0.0)) - -124.67109030337998) < 1e-9);
  }

  TEST_CASE("seeds at zero decomposes per plate") {
    const SeedsData d = seeds_table();
    double expected = 0.01 * std::log(0.01) - std::lgamma(0.01) - 0.01;  // Gamma at τ=1 with Jacobian
    expected += 4 * (-0.5 * std::log(2.0 * std::numbers::pi * 100.0));
    expected += 21 * (-0.5 * kLog2Pi);
    for (std::size_t i = 0; i < 21; ++i) {
      expected += std::lgamma(d.n[i] + 1) - std::lgamma(d.r[i] + 1) - std::lgamma(d.n[i] - d.r[i] + 1) +
                  d.n[i] * std::log(0.5);
    }
    CHECK(SeedsTarget().log_density_value(std::vector<double>(26, 0.0)) ==
          doctest::Approx(expected).epsilon(1e-13));
  }

  TEST_CASE("dimensions") {
    CHECK(make_target("ionosphere", kDataDir)->dim() == 35);
    CHECK(make_target("sonar", kDataDir)->dim() == 61);
    CHECK(make_target("brownian", kDataDir)->dim() == 32);
    CHECK(make_target("lorenz", kDataDir)->dim() == 90);
    CHECK(make_target("seeds", kDataDir)->dim() == 26);
    CHECK(make_target("toy5", kDataDir)->dim() == 5);
    CHECK_THROWS_WITH_AS(make_target("hmm", kDataDir), doctest::Contains("valid models"), std::invalid_argument);
    CHECK_THROWS_AS(make_target("toy0", kDataDir), std::invalid_argument);
  }

  TEST_CASE("gradients match finite differences at 20 random points") {
    std::mt19937_64 rng(7);
    std::vector<std::shared_ptr<const TargetModel>> models = {
        make_target("ionosphere", kDataDir), make_target("sonar", kDataDir), make_target("brownian", kDataDir),
        make_target("lorenz", kDataDir),     make_target("seeds", kDataDir), make_target("toy5", kDataDir)};
    for (const auto& m : models) {
      CAPTURE(m->name());
      double worst = 0.0;
      double worst_tape = 0.0;
      for (int i = 0; i < 20; ++i) {
        const auto v = testing::uniform_vector(rng, m->dim(), -1.0, 1.0);
        worst = std::max(worst, fd_gradient_error(*m, v));
        worst_tape = std::max(worst_tape, testing::vec_rel_err(m->grad_log_density_value(v), tape_gradient(*m, v)));
      }
      CHECK(worst < 1e-5);
      CHECK(worst_tape < 1e-12);
    }
  }

  TEST_CASE("dropping an observation increases the Brownian log-density") {
    const BrownianMotionTarget full;
    auto obs = std::vector<double>{0.21592641, 0.118771404, -0.07945447, 0.037677474, -0.27885845, -0.1484156,
                                   -0.3250906, -0.22957903, -0.44110894, -0.09830782};
    obs.resize(30, std::nan(""));
    const std::vector<double> tail = {-0.8786016, -0.83736074, -0.7384849, -0.8939254, -0.7774566,
                                      -0.70238715, -0.87771565, -0.51853573, -0.6948214, -0.6202789};
    std::copy(tail.begin(), tail.end(), obs.begin() + 20);
    const BrownianMotionTarget same(obs);
    std::vector<double> v(32, 0.0);  // x_1 = 0 differs from y_1
    CHECK(same.log_density_value(v) == full.log_density_value(v));
    obs[0] = std::nan("");
    const BrownianMotionTarget dropped(obs);
    CHECK(dropped.log_density_value(v) > full.log_density_value(v));
    CHECK(dropped.observed().size() == 19);
  }

  TEST_CASE("Lorenz: perturbing z_30 changes one transition term") {
    const LorenzTarget m;
    auto v = oracle_point(3, 90);
    const double before = m.log_density_value(v);
    const double x29 = v[84], y29 = v[85], z29 = v[86];
    const double mean = x29 * y29 - 8.0 / 3.0 * z29;
    auto term = [&](double z30) { return -0.5 * std::log(2 * std::numbers::pi * 0.01) - std::pow(z30 - mean, 2) / 0.02; };
    const double old_z = v[89];
    v[89] += 0.37;
    const double after = m.log_density_value(v);
    CHECK(after - before == doctest::Approx(term(v[89]) - term(old_z)).epsilon(1e-9));
  }

  TEST_CASE("log-density is invariant to row order") {
    const Dataset d = load_binary_classification_csv(kDataDir + "/sonar.csv", "M");
    Dataset shuffled = d;
    std::vector<std::size_t> perm(d.features.rows);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 37 + 11) % perm.size();
    for (std::size_t i = 0; i < perm.size(); ++i) {
      for (std::size_t j = 0; j < d.features.cols; ++j) {
        shuffled.features.data[i * d.features.cols + j] = d.features(perm[i], j);
      }
      shuffled.labels[i] = d.labels[perm[i]];
    }
    const LogisticRegressionTarget a("sonar", d);
    const LogisticRegressionTarget b("sonar", shuffled);
    const auto w = oracle_point(5, 61);
    CHECK(a.log_density_value(w) == doctest::Approx(b.log_density_value(w)).epsilon(1e-12));
  }

  TEST_CASE("Gaussian toy normalizer") {
    const GaussianToyTarget one({0.0}, {1.0});
    CHECK(*one.log_normalizer() == doctest::Approx(0.918939).epsilon(1e-6));
    const GaussianToyTarget two({0.0, 0.0}, {1.0, 4.0});
    CHECK(*two.log_normalizer() == doctest::Approx(kLog2Pi + 0.5 * std::log(4.0)).epsilon(1e-15));
    CHECK_THROWS_AS(GaussianToyTarget({0.0}, {0.0}), ad::DomainError);
    CHECK_THROWS_AS(GaussianToyTarget({0.0}, {-1.0}), ad::DomainError);
  }
}
