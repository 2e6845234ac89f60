#pragma once

#include <string>

#include "mmdci/generator.hpp"
#include "mmdci/rng.hpp"
#include "mmdci/statistic.hpp"
#include "mmdci/types.hpp"

namespace mmdci {

/// The three simulation data-generating processes:
///   bernoulli_mixture(p):  Z = e3, Y = Z + e1, X = Z + d*e1 + (1-d)*e2 with
///                          d ~ Bernoulli(p); p = 0 gives H0, p > 0 the
///                          alternative. X|Z and Y|Z are N(z,1) for every p.
///   post_nonlinear(d_Z,b): Z ~ N(0, I), Y = sin(a_f'Z + e_f),
///                          X = cos(a_g'Z + bY + e_g), noise N(0, 0.25);
///                          b = 0 gives H0.
///   weak_ci(alternative):  binary (X,Y,Z); the alternative is conditionally
///                          dependent yet marginally independent, with all
///                          conditional marginals Bernoulli(1/2).
struct DgpSpec {
  enum class Kind { bernoulli_mixture, post_nonlinear, weak_ci };
  Kind kind = Kind::bernoulli_mixture;
  double p = 0.0;        // bernoulli_mixture
  Index d_z = 1;         // post_nonlinear
  double b = 0.0;        // post_nonlinear
  bool alternative = false;  // weak_ci

  void validate() const;
  std::string describe() const;
};

/// A sample plus the closed-form oracle generators of its conditional laws.
/// The oracles read only Z and noise, never X or Y; post_nonlinear keeps the
/// frozen coefficient vectors used for the draw.
struct DgpDraw {
  TripleSample sample;
  CondGenerator oracle_x;
  CondGenerator oracle_y;
  Vector a_f, a_g;
};

DgpDraw gen_bernoulli_mixture(Index n, double p, Rng& rng);
DgpDraw gen_postnonlinear(Index n, Index d_z, double b, Rng& rng);
DgpDraw gen_weakci(Index n, bool alternative, Rng& rng);

DgpDraw gen_dgp(const DgpSpec& spec, Index n, Rng& rng);

/// Deliberately wrong conditional law for robustness experiments: adds a
/// constant shift to continuous oracle outputs, or flips binary outputs with
/// probability `shift`.
CondGenerator corrupt_oracle(const CondGenerator& gen, double shift);

/// The weak-CI joint law as a finite-support law (exact tables), for the
/// oracle statistics and the population measure.
FiniteJointLaw weakci_law(bool alternative);

}  // namespace mmdci
