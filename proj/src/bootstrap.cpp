#include "mmdci/bootstrap.hpp"

#include <cmath>

#include "mmdci/rng.hpp"

namespace mmdci {

BootstrapDraws wild_bootstrap_with(
    const UVMats& uv, const FoldPlan& plan, Index b_reps,
    const std::function<void(Index, std::span<double>)>& fill) {
  plan.validate();
  if (b_reps < 1) throw std::invalid_argument("wild_bootstrap: B must be >= 1");
  const std::size_t j_folds = plan.folds.size();
  if (uv.u.size() != j_folds || uv.v.size() != j_folds || uv.kz.size() != j_folds)
    throw std::invalid_argument("wild_bootstrap: UVMats do not match the fold plan");

  // Precompute W_j = U .* V .* KZ once; each replicate is then a quadratic
  // form minus its diagonal.
  std::vector<Matrix> w(j_folds);
  std::vector<double> denom(j_folds);
  for (std::size_t j = 0; j < j_folds; ++j) {
    const Index nj = static_cast<Index>(plan.folds[j].size());
    if (uv.u[j].rows() != nj || uv.u[j].cols() != nj || uv.v[j].rows() != nj ||
        uv.kz[j].rows() != nj)
      throw std::invalid_argument("wild_bootstrap: fold matrix shape mismatch");
    w[j] = uv.u[j].cwiseProduct(uv.v[j]).cwiseProduct(uv.kz[j]);
    denom[j] = double(nj) * double(nj - 1);
  }

  BootstrapDraws out;
  out.values.resize(static_cast<std::size_t>(b_reps));
  std::vector<double> e(static_cast<std::size_t>(plan.n));
  for (Index b = 0; b < b_reps; ++b) {
    fill(b, std::span<double>(e));
    double draw = 0.0;
    for (std::size_t j = 0; j < j_folds; ++j) {
      const auto& fold = plan.folds[j];
      const Index nj = static_cast<Index>(fold.size());
      Vector ef(nj);
      for (Index k = 0; k < nj; ++k)
        ef(k) = e[static_cast<std::size_t>(fold[static_cast<std::size_t>(k)])];
      draw += offdiag_quadratic_form(w[j], ef) / denom[j];
    }
    out.values[static_cast<std::size_t>(b)] = draw / double(j_folds);
  }
  return out;
}

BootstrapDraws wild_bootstrap(const UVMats& uv, const FoldPlan& plan, Index b_reps,
                              std::uint64_t multiplier_seed) {
  BootstrapDraws out = wild_bootstrap_with(
      uv, plan, b_reps, [multiplier_seed](Index b, std::span<double> e) {
        Rng rng(seed_stream(multiplier_seed, static_cast<std::uint64_t>(b)));
        for (double& v : e) v = rng.normal();
      });
  out.multiplier_seed = multiplier_seed;
  return out;
}

double p_value(double t, const BootstrapDraws& draws) {
  if (draws.values.empty()) throw std::invalid_argument("p_value: B must be >= 1");
  std::size_t count = 0;
  for (double v : draws.values)
    if (v > t) ++count;
  return double(count) / double(draws.values.size());
}

bool decide(double p, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("decide: gamma must lie in (0,1)");
  return p < gamma;
}

TestOutcome make_outcome(const TjResult& tj, BootstrapDraws draws, double gamma,
                         std::vector<TripleKernels> kernels, std::uint64_t seed) {
  TestOutcome out;
  out.t = tj.t;
  out.per_fold = tj.per_fold;
  out.p = p_value(tj.t, draws);
  out.gamma = gamma;
  out.reject = decide(out.p, gamma);
  out.draws = std::move(draws);
  out.kernels = std::move(kernels);
  out.seed = seed;
  return out;
}

}  // namespace mmdci
