#include "ldvi/scorenet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ldvi {

using ad::Var;

std::size_t default_hidden_width(std::size_t dim) { return std::max<std::size_t>(64, 2 * dim); }

void init_score_net(ParameterSet& params, std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  if (dim == 0 || hidden == 0) throw std::invalid_argument("score net needs positive sizes");
  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t rows, std::size_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(rows * cols);
    for (auto& x : w) x = u(rng);
    return w;
  };
  const std::size_t in = 2 * dim + 1;
  params.add("score.w_in", {hidden, in}, uniform(hidden, in));
  params.add("score.b_in", {hidden}, std::vector<double>(hidden, 0.0));
  params.add("score.w_h1", {hidden, hidden}, uniform(hidden, hidden));
  params.add("score.b_h1", {hidden}, std::vector<double>(hidden, 0.0));
  params.add("score.w_h2", {hidden, hidden}, uniform(hidden, hidden));
  params.add("score.b_h2", {hidden}, std::vector<double>(hidden, 0.0));
  params.add("score.w_out", {dim, hidden}, std::vector<double>(dim * hidden, 0.0));
  params.add("score.b_out", {dim}, std::vector<double>(dim, 0.0));
}

bool has_score_net(const ParameterSet& params) { return params.contains("score.w_in"); }

ScoreNet::ScoreNet(Weights w, std::size_t dim) : w_(std::move(w)), dim_(dim) {
  hidden_ = w_.b_in.size();
  if (w_.w_in.size() != hidden_ * (2 * dim + 1) || w_.w_h1.size() != hidden_ * hidden_ ||
      w_.w_h2.size() != hidden_ * hidden_ || w_.w_out.size() != dim * hidden_ ||
      w_.b_out.size() != dim || w_.b_h1.size() != hidden_ || w_.b_h2.size() != hidden_) {
    throw ad::ShapeError("score net weights do not match dimension " + std::to_string(dim));
  }
}

Var ScoreNet::forward(double t, const Var& z, const Var& rho) const {
  if (z.size() != dim_ || rho.size() != dim_) {
    throw ad::ShapeError("score net expects inputs of length " + std::to_string(dim_));
  }
  const Var x = ad::concat({z, rho, z.tape()->lift(t)});
  Var h = ad::tanh(ad::affine(w_.w_in, x, w_.b_in));
  h = h + ad::tanh(ad::affine(w_.w_h1, h, w_.b_h1));
  h = h + ad::tanh(ad::affine(w_.w_h2, h, w_.b_h2));
  return ad::affine(w_.w_out, h, w_.b_out);
}

Var ScoreNet::forward_position(double t, const Var& z) const {
  return forward(t, z, z.tape()->zeros(dim_));
}

}  // namespace ldvi
