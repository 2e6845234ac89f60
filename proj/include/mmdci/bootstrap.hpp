#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mmdci/statistic.hpp"
#include "mmdci/types.hpp"

namespace mmdci {

struct BootstrapDraws {
  std::vector<double> values;
  std::uint64_t multiplier_seed = 0;

  Index b_reps() const { return static_cast<Index>(values.size()); }
};

/// Wild bootstrap of the cross-fitted statistic: replicate b multiplies each
/// off-diagonal (k,l) term by e_bk * e_bl with i.i.d. standard normal
/// multipliers, reusing the stored Uhat/Vhat/K_Z products. One multiplier
/// vector indexed by the original observation order is shared across folds.
/// Replicate b draws from the substream seed_stream(multiplier_seed, b), so
/// results do not depend on evaluation order.
BootstrapDraws wild_bootstrap(const UVMats& uv, const FoldPlan& plan, Index b_reps,
                              std::uint64_t multiplier_seed);

/// Test hook: `fill(b, e)` supplies the multiplier vector for replicate b.
BootstrapDraws wild_bootstrap_with(
    const UVMats& uv, const FoldPlan& plan, Index b_reps,
    const std::function<void(Index, std::span<double>)>& fill);

/// Strict exceedance proportion: (1/B) #{b : draw_b > t}.
double p_value(double t, const BootstrapDraws& draws);

/// Reject iff p < gamma (strict).
bool decide(double p, double gamma);

struct TestOutcome {
  double t = 0.0;
  BootstrapDraws draws;
  double p = 1.0;
  double gamma = 0.05;
  bool reject = false;
  std::vector<double> per_fold;
  std::vector<TripleKernels> kernels;  // per-fold bandwidths actually used
  std::uint64_t seed = 0;
};

/// Assembles the outcome from a computed statistic and its bootstrap draws.
TestOutcome make_outcome(const TjResult& tj, BootstrapDraws draws, double gamma,
                         std::vector<TripleKernels> kernels, std::uint64_t seed);

}  // namespace mmdci
