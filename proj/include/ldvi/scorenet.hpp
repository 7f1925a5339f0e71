#pragma once

// Score approximation s(t, z, ρ): input (z, ρ, t) → H tanh units, two residual
// tanh blocks of width H, linear output of size D. The output layer starts at
// zero so s ≡ 0 at initialization.

#include <cstdint>
#include <string>

#include "ldvi/diffengine.hpp"
#include "ldvi/params.hpp"

namespace ldvi {

std::size_t default_hidden_width(std::size_t dim);

/// Adds score.{w_in,b_in,w_h1,b_h1,w_h2,b_h2,w_out,b_out} to `params`. Hidden
/// weights are uniform in ±1/√fan_in, biases and the output layer zero.
void init_score_net(ParameterSet& params, std::size_t dim, std::size_t hidden, std::uint64_t seed);

bool has_score_net(const ParameterSet& params);

/// Tape-level view of the network weights.
class ScoreNet {
 public:
  struct Weights {
    ad::Var w_in, b_in, w_h1, b_h1, w_h2, b_h2, w_out, b_out;
  };

  ScoreNet(Weights w, std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t hidden() const { return hidden_; }

  /// s(t, z, ρ) with t the normalized time k/K.
  ad::Var forward(double t, const ad::Var& z, const ad::Var& rho) const;
  /// s̃(t, z): the same network with the momentum inputs held at zero.
  ad::Var forward_position(double t, const ad::Var& z) const;

 private:
  Weights w_;
  std::size_t dim_;
  std::size_t hidden_;
};

}  // namespace ldvi
