#pragma once

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "mmdci/kernels.hpp"
#include "mmdci/mlp.hpp"
#include "mmdci/rng.hpp"
#include "mmdci/types.hpp"

namespace mmdci {

/// Closed-form samplers of known conditional laws, used by the simulation
/// DGPs to isolate statistic behavior from generator estimation error.
/// All oracle kinds accept a 2-dimensional standard-normal noise vector
/// (unused coordinates are padding):
///   normal_shift     out = z + eta1                       (X|Z=z ~ N(z,1))
///   postnonlinear_y  out = sin(a_f'z + 0.5 eta1)
///   postnonlinear_x  out = cos(a_g'z + b sin(a_f'z + 0.5 eta2) + 0.5 eta1)
///   bernoulli_half   out = 1{eta1 > 0}                    (Bernoulli(1/2))
/// `shift` adds a constant to continuous outputs; `flip_prob` flips the
/// bernoulli output with probability flip_prob (decided by eta2). Both model
/// a deliberately wrong conditional law for robustness experiments.
enum class OracleKind { normal_shift, postnonlinear_y, postnonlinear_x, bernoulli_half };

struct OracleGenerator {
  OracleKind kind = OracleKind::normal_shift;
  Vector a_f;
  Vector a_g;
  double b = 0.0;
  double shift = 0.0;
  double flip_prob = 0.0;
};

struct GmmnGenerator {
  MlpParams net;  // input = concat(eta, z)
};

/// Conditional sampler (eta, z) -> output; eta is standard normal of length
/// latent_dim, drawn by the caller.
struct CondGenerator {
  std::variant<GmmnGenerator, OracleGenerator> impl;
  Index latent_dim = 0;
  Index z_dim = 0;
  Index output_dim = 0;

  bool is_oracle() const { return std::holds_alternative<OracleGenerator>(impl); }
};

Vector gen_sample(const CondGenerator& gen, const Vector& z, const Vector& eta);

/// Batched sampler: row r of `z`/`eta` gives row r of the output. For gmmn
/// generators this is one forward pass over [eta z].
Matrix gen_sample_batch(const CondGenerator& gen, const Matrix& z, const Matrix& eta);

/// The M synthetic draws per fold index. Row i*M + m of x holds the m-th
/// draw for index i; built from Z and fresh noise only, never from X or Y.
struct SyntheticBlock {
  Matrix x;
  Matrix y;
  Index m_draws = 0;
};

SyntheticBlock synthesize(const CondGenerator& gen_x, const CondGenerator& gen_y,
                          const Matrix& z, Index m_draws, Rng& rng);

struct TrainConfig {
  Index epochs = 200;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  Index latent_dim = 16;
  std::vector<Index> hidden{64, 64};
  Index m_train = 8;  // synthetic draws per observation inside the loss
  std::uint64_t seed = 0;
  bool full_batch = false;          // evaluate the loss on all rows per step
  double holdout_fraction = 0.2;    // rows reserved for the objective trace
  Index trace_every = 1;            // epochs between trace points; 0 = only
                                    // initial and final values

  void validate() const;
};

struct GmmnObjective {
  double loss = 0.0;
  MlpGrads grads;
};

/// Squared-MMD training objective on one batch: mean over ordered pairs
/// k != l of Uhat(X_k,X_l) K_Z(Z_k,Z_l), with Uhat built from the real rows
/// and the m_train generated draws per row. noise is (b*m_train) x latent,
/// row i*m_train + m belonging to batch row i. kx must be gaussian so the
/// kernel terms stay differentiable in the generated points.
double gmmn_loss(const MlpParams& net, const Matrix& x, const Matrix& z,
                 const Matrix& noise, Index m_train, const KernelSpec& kx,
                 const KernelSpec& kz);

GmmnObjective gmmn_loss_and_grad(const MlpParams& net, const Matrix& x,
                                 const Matrix& z, const Matrix& noise,
                                 Index m_train, const KernelSpec& kx,
                                 const KernelSpec& kz);

struct TrainResult {
  CondGenerator gen;
  // Objective on the held-out rows with frozen noise; entry 0 is the value
  // at initialization, entry e the value after epoch e.
  std::vector<double> holdout_trace;
};

/// Trains a gmmn generator for P_{data|Z} by Adam on shuffled minibatches
/// with fresh noise per step. Kernels are fixed by the caller before
/// training (median-heuristic bandwidths on the training split).
TrainResult train_gmmn(const Matrix& data, const Matrix& z,
                       const TrainConfig& cfg, const KernelSpec& kx,
                       const KernelSpec& kz);

void save_generator(std::ostream& os, const CondGenerator& gen);
CondGenerator load_generator(std::istream& is);

}  // namespace mmdci
