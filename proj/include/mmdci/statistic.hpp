#pragma once

#include <utility>
#include <vector>

#include "mmdci/generator.hpp"
#include "mmdci/kernels.hpp"
#include "mmdci/rng.hpp"
#include "mmdci/types.hpp"

namespace mmdci {

/// Disjoint index sets partitioning {0..n-1}; sizes differ by at most one.
struct FoldPlan {
  std::vector<std::vector<Index>> folds;
  Index n = 0;

  Index j_folds() const { return static_cast<Index>(folds.size()); }
  void validate() const;
};

/// Uniformly random fold assignment, deterministic given the rng seed.
FoldPlan make_fold_plan(Index n, Index j_folds, Rng& rng);

struct TripleKernels {
  KernelSpec kx, ky, kz;
};

/// Per-fold kernel specs with median-heuristic bandwidths computed on the
/// fold's own rows (reused for synthetic-sample evaluations).
std::vector<TripleKernels> fold_kernels(const TripleSample& sample,
                                        const FoldPlan& plan, KernelFamily fx,
                                        KernelFamily fy, KernelFamily fz);

/// Components of the Uhat/Vhat matrices for one fold and one side:
///   g(k,l) = K(real_k, real_l)
///   c(k,l) = mean_m K(real_k, synth_{l,m})
///   b(k,l) = mean_{m1,m2} K(synth_{k,m1}, synth_{l,m2})
/// so uhat = g - c - c^T + b. The c/b blocks are also what the plug-in
/// version of the non-robust statistic consumes.
struct UVBlocks {
  Matrix g, c, b;
};

UVBlocks uv_blocks(const Matrix& fold_rows, const Matrix& synth_rows,
                   Index m_draws, const KernelSpec& spec);

Matrix uhat_matrix(const Matrix& x_fold, const Matrix& synth_x, Index m_draws,
                   const KernelSpec& kx);
Matrix vhat_matrix(const Matrix& y_fold, const Matrix& synth_y, Index m_draws,
                   const KernelSpec& ky);

/// Mean of U .* V .* KZ over off-diagonal entries.
double fold_statistic(const Matrix& u, const Matrix& v, const Matrix& kz);

/// sum_{k != l} w(k,l) e_k e_l. Both the statistic (e = 1) and the wild
/// bootstrap evaluate this same routine, so the identity-multiplier draw
/// reproduces the statistic bitwise.
double offdiag_quadratic_form(const Matrix& w, const Vector& e);

/// Per-fold matrices retained for wild-bootstrap reuse. Diagonals are
/// computed but excluded from every sum.
struct UVMats {
  std::vector<Matrix> u, v, kz;
};

struct TjConfig {
  Index m_draws = 100;
  std::vector<TripleKernels> kernels;  // one entry per fold
  bool with_t0 = false;                // also evaluate the non-robust plug-in
};

struct TjResult {
  double t = 0.0;
  std::vector<double> per_fold;
  UVMats uv;
  double t0 = 0.0;  // valid when requested
  std::vector<double> per_fold_t0;
};

/// Cross-fitted statistic: average over folds of the degenerate U-statistic
/// built from Uhat, Vhat and the fold's K_Z Gram matrix. The fold-j
/// generators must have been trained without fold j's rows (caller
/// contract). Synthetic draws for fold j come from rng child stream j.
TjResult statistic_tj(const TripleSample& sample, const FoldPlan& plan,
                      const std::vector<std::pair<CondGenerator, CondGenerator>>& gens,
                      const TjConfig& cfg, Rng& rng);

/// Finite-support joint law of (X, Y, Z) for exact enumeration. Axis values
/// are rows of xs/ys/zs; probabilities are indexed (ix*ny + iy)*nz + iz.
struct FiniteJointLaw {
  Matrix xs, ys, zs;
  std::vector<double> p;

  Index nx() const { return xs.rows(); }
  Index ny() const { return ys.rows(); }
  Index nz() const { return zs.rows(); }
  double prob(Index ix, Index iy, Index iz) const {
    return p[static_cast<std::size_t>((ix * ny() + iy) * nz() + iz)];
  }
  void validate() const;

  Vector marginal_z() const;
  Matrix cond_x_given_z() const;  // nx x nz, column = P(X | Z=z)
  Matrix cond_y_given_z() const;
};

/// Population CI measure of the law, computed by exact enumeration through
/// BOTH equivalent characterizations (tilde-variable expansion and the
/// multiplicative U*V form); they must agree to 1e-10 or an InternalError
/// is raised. Returns the common value (>= 0 up to roundoff).
double population_mmdci_discrete(const FiniteJointLaw& law,
                                 const TripleKernels& kernels);

/// Oracle statistic in the doubly robust multiplicative form, with all
/// conditional expectations enumerated exactly. law_x governs the X-side
/// conditionals and law_y the Y-side, so deliberate misspecification of one
/// side is expressible; truth is law_x == law_y == the generating law.
double oracle_t_star(const TripleSample& sample, const FiniteJointLaw& law_x,
                     const FiniteJointLaw& law_y, const TripleKernels& kernels);

/// Oracle statistic in the non-doubly-robust arrangement.
double oracle_t0_star(const TripleSample& sample, const FiniteJointLaw& law_x,
                      const FiniteJointLaw& law_y, const TripleKernels& kernels);

}  // namespace mmdci
