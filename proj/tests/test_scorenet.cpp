#include <doctest.h>

#include <cmath>

#include "ldvi/scorenet.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace ldvi;
using ad::Tape;
using ad::Var;

namespace {

const char* const kBlocks[] = {"score.w_in", "score.b_in", "score.w_h1", "score.b_h1",
                               "score.w_h2", "score.b_h2", "score.w_out", "score.b_out"};

ScoreNet lift_net(Tape& t, const ParameterSet& p, std::size_t dim, bool train,
                  std::vector<Var>* leaves = nullptr) {
  std::vector<Var> v;
  for (const char* name : kBlocks) v.push_back(t.lift(p.at(name).values, train));
  if (leaves) *leaves = v;
  return ScoreNet({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]}, dim);
}

// Fills every block (including the zero-initialized ones) with random values.
void randomize(ParameterSet& p, std::mt19937_64& rng, double scale = 0.5) {
  for (const char* name : kBlocks) {
    for (double& x : p.at(name).values) x = testing::uniform_vector(rng, 1, -scale, scale)[0];
  }
}

}  // namespace

TEST_SUITE("scorenet") {
  TEST_CASE("default width and block shapes") {
    CHECK(default_hidden_width(2) == 64);
    CHECK(default_hidden_width(61) == 122);
    ParameterSet p;
    init_score_net(p, 3, 8, 1);
    CHECK(has_score_net(p));
    CHECK(p.at("score.w_in").shape == std::vector<std::size_t>{8, 7});
    CHECK(p.at("score.w_out").shape == std::vector<std::size_t>{3, 8});
    for (double w : p.at("score.w_in").values) CHECK(std::abs(w) <= 1.0 / std::sqrt(7.0));
    for (double w : p.at("score.w_h1").values) CHECK(std::abs(w) <= 1.0 / std::sqrt(8.0));
    CHECK_THROWS_AS(init_score_net(p, 0, 8, 1), std::invalid_argument);
  }

  TEST_CASE("zero output layer gives a zero score everywhere") {
    ParameterSet p;
    init_score_net(p, 4, 16, 7);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
      Tape t;
      ScoreNet net = lift_net(t, p, 4, false);
      const auto z = testing::normal_vector(rng, 4, 3.0), r = testing::normal_vector(rng, 4, 3.0);
      for (double s : net.forward(0.3, t.lift(z), t.lift(r)).value()) REQUIRE(s == 0.0);
      for (double s : net.forward_position(0.9, t.lift(z)).value()) REQUIRE(s == 0.0);
    }
  }

  TEST_CASE("forward pass matches the plain reference network") {
    std::mt19937_64 rng(3);
    for (std::size_t dim : {1u, 2u, 5u}) {
      ParameterSet p;
      init_score_net(p, dim, 12, 11);
      randomize(p, rng);
      reference::Score ref;
      ref.D = dim;
      ref.H = 12;
      ref.w_in = p.at("score.w_in").values;
      ref.b_in = p.at("score.b_in").values;
      ref.w_h1 = p.at("score.w_h1").values;
      ref.b_h1 = p.at("score.b_h1").values;
      ref.w_h2 = p.at("score.w_h2").values;
      ref.b_h2 = p.at("score.b_h2").values;
      ref.w_out = p.at("score.w_out").values;
      ref.b_out = p.at("score.b_out").values;
      for (int i = 0; i < 20; ++i) {
        Tape t;
        ScoreNet net = lift_net(t, p, dim, false);
        const auto z = testing::normal_vector(rng, dim), r = testing::normal_vector(rng, dim);
        const double tt = testing::uniform_vector(rng, 1, 0.0, 1.0)[0];
        CHECK(testing::max_abs_diff(net.forward(tt, t.lift(z), t.lift(r)).to_vector(), ref(tt, z, r)) < 1e-13);
        CHECK(testing::max_abs_diff(net.forward_position(tt, t.lift(z)).to_vector(), ref.position(tt, z)) < 1e-13);
      }
    }
  }

  TEST_CASE("position variant ignores momentum") {
    std::mt19937_64 rng(4);
    ParameterSet p;
    init_score_net(p, 3, 10, 2);
    randomize(p, rng);
    Tape t;
    ScoreNet net = lift_net(t, p, 3, false);
    Var z = t.lift({0.2, -0.4, 1.1});
    const auto a = net.forward_position(0.5, z).to_vector();
    CHECK(a == net.forward(0.5, z, t.zeros(3)).to_vector());
    CHECK(a != net.forward(0.5, z, t.lift({1.0, 1.0, 1.0})).to_vector());
  }

  TEST_CASE("weight gradient of the squared output matches finite differences") {
    std::mt19937_64 rng(8);
    const std::size_t dim = 2, hidden = 6;
    ParameterSet p;
    init_score_net(p, dim, hidden, 5);
    randomize(p, rng);
    const std::vector<double> z = {0.4, -0.7}, r = {1.2, 0.3};
    for (bool position_only : {false, true}) {
      CAPTURE(position_only);
      auto loss_of = [&](const ParameterSet& ps) {
        Tape t;
        ScoreNet net = lift_net(t, ps, dim, false);
        Var s = position_only ? net.forward_position(0.25, t.lift(z)) : net.forward(0.25, t.lift(z), t.lift(r));
        return ad::sum(s * s).scalar();
      };
      Tape t;
      std::vector<Var> leaves;
      ScoreNet net = lift_net(t, p, dim, true, &leaves);
      Var s = position_only ? net.forward_position(0.25, t.lift(z)) : net.forward(0.25, t.lift(z), t.lift(r));
      t.backward(ad::sum(s * s));
      double worst = 0.0;
      for (std::size_t b = 0; b < 8; ++b) {
        const auto& adj = t.adjoint(leaves[b]);
        const auto fd = testing::central_difference(
            [&](const std::vector<double>& w) {
              ParameterSet q = p;
              q.at(kBlocks[b]).values = w;
              return loss_of(q);
            },
            p.at(kBlocks[b]).values, 1e-6);
        worst = std::max(worst, testing::max_rel_err(std::vector<double>(adj.begin(), adj.end()), fd, 1e-6));
      }
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("output stays finite for huge inputs") {
    std::mt19937_64 rng(9);
    ParameterSet p;
    init_score_net(p, 2, 8, 3);
    randomize(p, rng);
    Tape t;
    ScoreNet net = lift_net(t, p, 2, false);
    for (double s : net.forward(1.0, t.lift({1e6, -1e6}), t.lift({-9e5, 9e5})).value()) {
      CHECK(std::isfinite(s));
      CHECK(std::abs(s) < 100.0);
    }
  }

  TEST_CASE("dimension mismatch is rejected") {
    ParameterSet p;
    init_score_net(p, 2, 8, 3);
    Tape t;
    ScoreNet net = lift_net(t, p, 2, false);
    CHECK_THROWS_AS(net.forward(0.5, t.lift({1.0, 2.0, 3.0}), t.lift({1.0, 2.0})), ad::ShapeError);
    std::vector<Var> leaves;
    lift_net(t, p, 2, false, &leaves);
    CHECK_THROWS_AS(ScoreNet({leaves[0], leaves[1], leaves[2], leaves[3], leaves[4], leaves[5], leaves[6], leaves[7]}, 3),
                    ad::ShapeError);
  }
}
