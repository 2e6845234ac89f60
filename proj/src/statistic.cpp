#include "mmdci/statistic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmdci {

void FoldPlan::validate() const {
  if (folds.empty()) throw std::invalid_argument("FoldPlan: no folds");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::size_t total = 0;
  Index min_size = n, max_size = 0;
  for (const auto& f : folds) {
    if (static_cast<Index>(f.size()) < 2)
      throw std::invalid_argument("FoldPlan: fold of size < 2");
    min_size = std::min<Index>(min_size, f.size());
    max_size = std::max<Index>(max_size, f.size());
    for (Index i : f) {
      if (i < 0 || i >= n || seen[static_cast<std::size_t>(i)])
        throw std::invalid_argument("FoldPlan: folds not a partition");
      seen[static_cast<std::size_t>(i)] = 1;
      ++total;
    }
  }
  if (total != static_cast<std::size_t>(n))
    throw std::invalid_argument("FoldPlan: folds not exhaustive");
  if (max_size - min_size > 1)
    throw std::invalid_argument("FoldPlan: fold sizes differ by more than 1");
}

FoldPlan make_fold_plan(Index n, Index j_folds, Rng& rng) {
  if (j_folds < 1) throw std::invalid_argument("make_fold_plan: J must be >= 1");
  if (n < 2 * j_folds)
    throw std::invalid_argument("make_fold_plan: fold of size < 2 (need n >= 2J)");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  FoldPlan plan;
  plan.n = n;
  plan.folds.resize(static_cast<std::size_t>(j_folds));
  const Index base = n / j_folds, extra = n % j_folds;
  std::size_t pos = 0;
  for (Index j = 0; j < j_folds; ++j) {
    const Index size = base + (j < extra ? 1 : 0);
    auto& fold = plan.folds[static_cast<std::size_t>(j)];
    fold.assign(perm.begin() + pos, perm.begin() + pos + size);
    pos += static_cast<std::size_t>(size);
  }
  plan.validate();
  return plan;
}

namespace {

Matrix take_rows(const Matrix& src, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), src.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Index>(r)) = src.row(idx[r]);
  return out;
}

double offdiag_mean(const Matrix& m) {
  const Index n = m.rows();
  return (m.sum() - m.diagonal().sum()) / (double(n) * double(n - 1));
}

// Sorted-block index for 1-D laplacian kernel sums. For ascending values
// u_1..u_M it keeps
//   prefix[i] = sum_{j<=i} exp((u_j - u_i)/sigma)
//   suffix[i] = sum_{j>=i} exp((u_i - u_j)/sigma)
// built recursively from factors <= 1, so nothing can overflow. A query
// point t then gets sum_m exp(-|t - u_m|/sigma) from two scaled lookups,
// which collapses the (nM)^2 synthetic Gram sweep to n^2 M log M work.
struct LaplacianBlockIndex {
  std::vector<double> sorted;
  std::vector<double> prefix;
  std::vector<double> suffix;

  LaplacianBlockIndex(const double* vals, Index m, double sigma) {
    sorted.assign(vals, vals + m);
    std::sort(sorted.begin(), sorted.end());
    prefix.resize(static_cast<std::size_t>(m));
    suffix.resize(static_cast<std::size_t>(m));
    prefix[0] = 1.0;
    for (Index i = 1; i < m; ++i)
      prefix[i] = 1.0 + prefix[i - 1] * std::exp((sorted[i - 1] - sorted[i]) / sigma);
    suffix[static_cast<std::size_t>(m - 1)] = 1.0;
    for (Index i = m - 2; i >= 0; --i)
      suffix[i] = 1.0 + suffix[i + 1] * std::exp((sorted[i] - sorted[i + 1]) / sigma);
  }

  double kernel_sum(double t, double sigma) const {
    const auto up = std::upper_bound(sorted.begin(), sorted.end(), t);
    const Index idx = static_cast<Index>(up - sorted.begin()) - 1;
    double total = 0.0;
    if (idx >= 0)
      total += prefix[idx] * std::exp((sorted[idx] - t) / sigma);
    if (idx + 1 < static_cast<Index>(sorted.size()))
      total += suffix[idx + 1] * std::exp((t - sorted[idx + 1]) / sigma);
    return total;
  }
};

void uv_blocks_laplacian_1d(const Matrix& fold_rows, const Matrix& synth_rows,
                            Index m, double sigma, Matrix& c, Matrix& b) {
  const Index n = fold_rows.rows();
  std::vector<LaplacianBlockIndex> blocks;
  blocks.reserve(static_cast<std::size_t>(n));
  for (Index l = 0; l < n; ++l)
    blocks.emplace_back(synth_rows.data() + l * m, m, sigma);
  for (Index l = 0; l < n; ++l) {
    const auto& blk = blocks[static_cast<std::size_t>(l)];
    for (Index k = 0; k < n; ++k)
      c(k, l) = blk.kernel_sum(fold_rows(k, 0), sigma) / double(m);
    for (Index k = 0; k <= l; ++k) {
      double sum = 0.0;
      for (Index q = 0; q < m; ++q)
        sum += blk.kernel_sum(synth_rows(k * m + q, 0), sigma);
      const double v = sum / (double(m) * double(m));
      b(k, l) = v;
      b(l, k) = v;
    }
  }
}

}  // namespace

std::vector<TripleKernels> fold_kernels(const TripleSample& sample,
                                        const FoldPlan& plan, KernelFamily fx,
                                        KernelFamily fy, KernelFamily fz) {
  sample.validate();
  plan.validate();
  std::vector<TripleKernels> out;
  out.reserve(plan.folds.size());
  for (const auto& fold : plan.folds) {
    TripleKernels k;
    k.kx = median_kernel(fx, take_rows(sample.x, fold));
    k.ky = median_kernel(fy, take_rows(sample.y, fold));
    k.kz = median_kernel(fz, take_rows(sample.z, fold));
    out.push_back(k);
  }
  return out;
}

UVBlocks uv_blocks(const Matrix& fold_rows, const Matrix& synth_rows,
                   Index m_draws, const KernelSpec& spec) {
  const Index n = fold_rows.rows(), m = m_draws;
  if (m < 1) throw std::invalid_argument("uv_blocks: M must be >= 1");
  if (synth_rows.rows() != n * m)
    throw std::invalid_argument("uv_blocks: synth rows != fold rows * M");
  if (synth_rows.cols() != fold_rows.cols())
    throw std::invalid_argument("uv_blocks: column mismatch");

  UVBlocks blocks;
  blocks.g = gram(spec, fold_rows, fold_rows);
  blocks.c.resize(n, n);
  blocks.b.resize(n, n);
  if (spec.family == KernelFamily::laplacian && fold_rows.cols() == 1) {
    uv_blocks_laplacian_1d(fold_rows, synth_rows, m, spec.bandwidth, blocks.c,
                           blocks.b);
    return blocks;
  }
  // General path: column-block sweep keeps memory at O(nM * M) instead of
  // (nM)^2; the symmetric b matrix is built from its lower triangle so it
  // equals its transpose exactly.
  for (Index l = 0; l < n; ++l) {
    const auto synth_l = synth_rows.middleRows(l * m, m);
    blocks.c.col(l) = gram(spec, fold_rows, synth_l).rowwise().mean();
    const Vector rowsum =
        gram(spec, synth_rows.topRows((l + 1) * m), synth_l).rowwise().sum();
    for (Index k = 0; k <= l; ++k) {
      const double v = rowsum.segment(k * m, m).sum() / (double(m) * double(m));
      blocks.b(k, l) = v;
      blocks.b(l, k) = v;
    }
  }
  return blocks;
}

Matrix uhat_matrix(const Matrix& x_fold, const Matrix& synth_x, Index m_draws,
                   const KernelSpec& kx) {
  UVBlocks blk = uv_blocks(x_fold, synth_x, m_draws, kx);
  // Grouped so the result is bitwise symmetric.
  return (blk.g + blk.b) - (blk.c + blk.c.transpose());
}

Matrix vhat_matrix(const Matrix& y_fold, const Matrix& synth_y, Index m_draws,
                   const KernelSpec& ky) {
  return uhat_matrix(y_fold, synth_y, m_draws, ky);
}

double offdiag_quadratic_form(const Matrix& w, const Vector& e) {
  if (w.rows() != w.cols() || e.size() != w.rows())
    throw std::invalid_argument("offdiag_quadratic_form: shape mismatch");
  return e.dot(w * e) - w.diagonal().cwiseProduct(e.cwiseAbs2()).sum();
}

double fold_statistic(const Matrix& u, const Matrix& v, const Matrix& kz) {
  const Index n = u.rows();
  if (u.cols() != n || v.rows() != n || v.cols() != n || kz.rows() != n ||
      kz.cols() != n)
    throw std::invalid_argument("fold_statistic: shape mismatch");
  if (n < 2) throw std::invalid_argument("fold_statistic: need n >= 2");
  const Matrix w = u.cwiseProduct(v).cwiseProduct(kz);
  return offdiag_quadratic_form(w, Vector::Ones(n)) /
         (double(n) * double(n - 1));
}

TjResult statistic_tj(const TripleSample& sample, const FoldPlan& plan,
                      const std::vector<std::pair<CondGenerator, CondGenerator>>& gens,
                      const TjConfig& cfg, Rng& rng) {
  sample.validate();
  plan.validate();
  if (plan.n != sample.n())
    throw std::invalid_argument("statistic_tj: plan size != sample size");
  const std::size_t j_folds = plan.folds.size();
  if (gens.size() != j_folds)
    throw std::invalid_argument("statistic_tj: one generator pair per fold required");
  if (cfg.kernels.size() != j_folds)
    throw std::invalid_argument("statistic_tj: one kernel triple per fold required");
  if (cfg.m_draws < 1) throw std::invalid_argument("statistic_tj: M must be >= 1");

  TjResult res;
  res.uv.u.resize(j_folds);
  res.uv.v.resize(j_folds);
  res.uv.kz.resize(j_folds);
  res.per_fold.resize(j_folds);
  if (cfg.with_t0) res.per_fold_t0.resize(j_folds);

  for (std::size_t j = 0; j < j_folds; ++j) {
    const auto& fold = plan.folds[j];
    const Matrix xf = take_rows(sample.x, fold);
    const Matrix yf = take_rows(sample.y, fold);
    const Matrix zf = take_rows(sample.z, fold);
    const TripleKernels& k = cfg.kernels[j];

    Rng synth_rng = rng.spawn(static_cast<std::uint64_t>(j));
    const SyntheticBlock synth =
        synthesize(gens[j].first, gens[j].second, zf, cfg.m_draws, synth_rng);

    const UVBlocks bx = uv_blocks(xf, synth.x, cfg.m_draws, k.kx);
    const UVBlocks by = uv_blocks(yf, synth.y, cfg.m_draws, k.ky);
    res.uv.u[j] = (bx.g + bx.b) - (bx.c + bx.c.transpose());
    res.uv.v[j] = (by.g + by.b) - (by.c + by.c.transpose());
    res.uv.kz[j] = gram(k.kz, zf, zf);
    res.per_fold[j] = fold_statistic(res.uv.u[j], res.uv.v[j], res.uv.kz[j]);

    if (cfg.with_t0) {
      // Non-robust arrangement: products of per-side conditional-expectation
      // estimates instead of the product of centered factors.
      const Matrix inner =
          bx.g.cwiseProduct(by.g) -
          bx.c.transpose().cwiseProduct(by.c.transpose()) -
          bx.c.cwiseProduct(by.c) + bx.b.cwiseProduct(by.b);
      res.per_fold_t0[j] = offdiag_mean(inner.cwiseProduct(res.uv.kz[j]));
    }
  }
  res.t = std::accumulate(res.per_fold.begin(), res.per_fold.end(), 0.0) /
          double(j_folds);
  if (cfg.with_t0)
    res.t0 = std::accumulate(res.per_fold_t0.begin(), res.per_fold_t0.end(), 0.0) /
             double(j_folds);
  return res;
}

void FiniteJointLaw::validate() const {
  if (nx() < 1 || ny() < 1 || nz() < 1)
    throw std::invalid_argument("FiniteJointLaw: empty support");
  if (p.size() != static_cast<std::size_t>(nx() * ny() * nz()))
    throw std::invalid_argument("FiniteJointLaw: probability table size mismatch");
  double total = 0.0;
  for (double v : p) {
    if (v < 0.0 || !std::isfinite(v))
      throw std::invalid_argument("FiniteJointLaw: invalid probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("FiniteJointLaw: probabilities do not sum to 1");
}

Vector FiniteJointLaw::marginal_z() const {
  Vector mz = Vector::Zero(nz());
  for (Index ix = 0; ix < nx(); ++ix)
    for (Index iy = 0; iy < ny(); ++iy)
      for (Index iz = 0; iz < nz(); ++iz) mz(iz) += prob(ix, iy, iz);
  return mz;
}

Matrix FiniteJointLaw::cond_x_given_z() const {
  Matrix t = Matrix::Zero(nx(), nz());
  for (Index ix = 0; ix < nx(); ++ix)
    for (Index iy = 0; iy < ny(); ++iy)
      for (Index iz = 0; iz < nz(); ++iz) t(ix, iz) += prob(ix, iy, iz);
  const Vector mz = marginal_z();
  for (Index iz = 0; iz < nz(); ++iz) {
    if (mz(iz) <= 0.0)
      throw std::invalid_argument("FiniteJointLaw: conditioning on zero-mass z");
    t.col(iz) /= mz(iz);
  }
  return t;
}

Matrix FiniteJointLaw::cond_y_given_z() const {
  Matrix t = Matrix::Zero(ny(), nz());
  for (Index ix = 0; ix < nx(); ++ix)
    for (Index iy = 0; iy < ny(); ++iy)
      for (Index iz = 0; iz < nz(); ++iz) t(iy, iz) += prob(ix, iy, iz);
  const Vector mz = marginal_z();
  for (Index iz = 0; iz < nz(); ++iz) t.col(iz) /= mz(iz);
  return t;
}

namespace {

struct LawTables {
  Matrix kx, ky, kz;    // kernel tables over support values
  Matrix ex, ey;        // ex(iz, ix') = E[Kx(X, x_{ix'}) | Z = z_iz]
  Matrix dex, dey;      // dex(iz, iz') = E[Kx(X, X') | Z = z_iz, Z' = z_iz']
};

LawTables law_tables(const FiniteJointLaw& law_x, const FiniteJointLaw& law_y,
                     const TripleKernels& kernels) {
  law_x.validate();
  law_y.validate();
  LawTables t;
  t.kx = gram(kernels.kx, law_x.xs, law_x.xs);
  t.ky = gram(kernels.ky, law_y.ys, law_y.ys);
  t.kz = gram(kernels.kz, law_x.zs, law_x.zs);
  const Matrix px = law_x.cond_x_given_z();  // nx x nz
  const Matrix py = law_y.cond_y_given_z();
  t.ex = px.transpose() * t.kx;              // nz x nx
  t.ey = py.transpose() * t.ky;
  t.dex = px.transpose() * t.kx * px;        // nz x nz
  t.dey = py.transpose() * t.ky * py;
  return t;
}

Index find_row(const Matrix& support, const auto& value) {
  for (Index r = 0; r < support.rows(); ++r)
    if ((support.row(r) - value).template lpNorm<Eigen::Infinity>() < 1e-9)
      return r;
  throw std::invalid_argument("sample value outside law support");
}

struct SampleIndices {
  std::vector<Index> ix, iy, iz;
};

SampleIndices index_sample(const TripleSample& sample, const FiniteJointLaw& law_x,
                           const FiniteJointLaw& law_y) {
  if (law_x.zs.rows() != law_y.zs.rows() ||
      (law_x.zs - law_y.zs).lpNorm<Eigen::Infinity>() > 1e-12)
    throw std::invalid_argument("oracle statistics: X-law and Y-law must share the z support");
  SampleIndices si;
  const Index n = sample.n();
  si.ix.reserve(n);
  si.iy.reserve(n);
  si.iz.reserve(n);
  for (Index i = 0; i < n; ++i) {
    si.ix.push_back(find_row(law_x.xs, sample.x.row(i)));
    si.iy.push_back(find_row(law_y.ys, sample.y.row(i)));
    si.iz.push_back(find_row(law_x.zs, sample.z.row(i)));
  }
  return si;
}

}  // namespace

double population_mmdci_discrete(const FiniteJointLaw& law,
                                 const TripleKernels& kernels) {
  const LawTables t = law_tables(law, law, kernels);
  const Index nx = law.nx(), ny = law.ny(), nz = law.nz();

  double product_form = 0.0;   // multiplicative U*V characterization
  double expansion_form = 0.0; // tilde-variable elimination characterization
  for (Index ix = 0; ix < nx; ++ix)
    for (Index iy = 0; iy < ny; ++iy)
      for (Index iz = 0; iz < nz; ++iz) {
        const double pa = law.prob(ix, iy, iz);
        if (pa == 0.0) continue;
        for (Index jx = 0; jx < nx; ++jx)
          for (Index jy = 0; jy < ny; ++jy)
            for (Index jz = 0; jz < nz; ++jz) {
              const double pb = law.prob(jx, jy, jz);
              if (pb == 0.0) continue;
              const double w = pa * pb * t.kz(iz, jz);
              const double u = t.kx(ix, jx) - t.ex(jz, ix) - t.ex(iz, jx) +
                               t.dex(iz, jz);
              const double v = t.ky(iy, jy) - t.ey(jz, iy) - t.ey(iz, jy) +
                               t.dey(iz, jz);
              product_form += w * u * v;
              expansion_form +=
                  w * (t.kx(ix, jx) * t.ky(iy, jy) -
                       t.ex(jz, ix) * t.ey(jz, iy) -
                       t.ex(iz, jx) * t.ey(iz, jy) +
                       t.dex(iz, jz) * t.dey(iz, jz));
            }
      }
  if (std::abs(product_form - expansion_form) > 1e-10)
    throw InternalError("population_mmdci_discrete: characterizations disagree");
  return 0.5 * (product_form + expansion_form);
}

double oracle_t_star(const TripleSample& sample, const FiniteJointLaw& law_x,
                     const FiniteJointLaw& law_y, const TripleKernels& kernels) {
  sample.validate();
  if (sample.n() < 2) throw std::invalid_argument("oracle_t_star: need n >= 2");
  const SampleIndices si = index_sample(sample, law_x, law_y);
  const LawTables t = law_tables(law_x, law_y, kernels);
  const Index n = sample.n();
  double sum = 0.0;
  for (Index k = 0; k < n; ++k)
    for (Index l = 0; l < n; ++l) {
      if (k == l) continue;
      const double u = t.kx(si.ix[k], si.ix[l]) - t.ex(si.iz[l], si.ix[k]) -
                       t.ex(si.iz[k], si.ix[l]) + t.dex(si.iz[k], si.iz[l]);
      const double v = t.ky(si.iy[k], si.iy[l]) - t.ey(si.iz[l], si.iy[k]) -
                       t.ey(si.iz[k], si.iy[l]) + t.dey(si.iz[k], si.iz[l]);
      sum += u * v * t.kz(si.iz[k], si.iz[l]);
    }
  return sum / (double(n) * double(n - 1));
}

double oracle_t0_star(const TripleSample& sample, const FiniteJointLaw& law_x,
                      const FiniteJointLaw& law_y, const TripleKernels& kernels) {
  sample.validate();
  if (sample.n() < 2) throw std::invalid_argument("oracle_t0_star: need n >= 2");
  const SampleIndices si = index_sample(sample, law_x, law_y);
  const LawTables t = law_tables(law_x, law_y, kernels);
  const Index n = sample.n();
  double sum = 0.0;
  for (Index k = 0; k < n; ++k)
    for (Index l = 0; l < n; ++l) {
      if (k == l) continue;
      const double inner =
          t.kx(si.ix[k], si.ix[l]) * t.ky(si.iy[k], si.iy[l]) -
          t.ex(si.iz[k], si.ix[l]) * t.ey(si.iz[k], si.iy[l]) -
          t.ex(si.iz[l], si.ix[k]) * t.ey(si.iz[l], si.iy[k]) +
          t.dex(si.iz[k], si.iz[l]) * t.dey(si.iz[k], si.iz[l]);
      sum += inner * t.kz(si.iz[k], si.iz[l]);
    }
  return sum / (double(n) * double(n - 1));
}

}  // namespace mmdci
