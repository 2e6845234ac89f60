#include "mmdci/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mmdci {

const char* kernel_family_name(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "laplacian";
}

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "laplacian") return KernelFamily::laplacian;
  throw std::invalid_argument("unknown kernel family: " + name);
}

double kernel_eval(const KernelSpec& spec, const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  if (!(spec.bandwidth > 0.0))
    throw std::invalid_argument("kernel_eval: bandwidth must be positive");
  if (!a.allFinite() || !b.allFinite())
    throw std::invalid_argument("kernel_eval: non-finite input");
  const double d = spec.family == KernelFamily::gaussian
                       ? (a - b).squaredNorm()
                       : (a - b).lpNorm<1>();
  return std::exp(-d / spec.bandwidth);
}

Matrix distance_matrix(const Matrix& a, const Matrix& b, Norm norm) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("distance_matrix: dimension mismatch");
  const Index n = a.rows(), m = b.rows();
  Matrix d(n, m);
  if (norm == Norm::l2) {
    // One rounding per entry on top of the GEMM, with the two norms summed
    // first: entries (i,j) and (j,i) of a self-distance matrix then come out
    // bitwise equal, and distance_matrix(A, B) with B a copy of A matches
    // distance_matrix(A, A) bitwise.
    d.noalias() = -2.0 * a * b.transpose();
    const Vector na = a.rowwise().squaredNorm();
    const Vector nb = b.rowwise().squaredNorm();
    d.array() += na.replicate(1, m).array() + nb.transpose().replicate(n, 1).array();
    d = d.cwiseMax(0.0);  // clamp catastrophic-cancellation negatives
  } else {
    d.setZero();
    for (Index k = 0; k < a.cols(); ++k)
      d += (a.col(k).replicate(1, m) - b.col(k).transpose().replicate(n, 1))
               .cwiseAbs();
  }
  return d;
}

Matrix gram(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("gram: dimension mismatch");
  if (!(spec.bandwidth > 0.0))
    throw std::invalid_argument("gram: bandwidth must be positive");
  Matrix d = distance_matrix(a, b, norm_for(spec.family));
  return (-d / spec.bandwidth).array().exp().matrix();
}

MedianBandwidth median_heuristic(const Matrix& a, Norm norm) {
  const Index n = a.rows();
  if (n < 2) throw std::invalid_argument("median_heuristic: need >= 2 rows");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Index i = 0; i < n; ++i)
    for (Index s = i + 1; s < n; ++s) {
      const double d = norm == Norm::l2 ? (a.row(i) - a.row(s)).squaredNorm()
                                        : (a.row(i) - a.row(s)).lpNorm<1>();
      dist.push_back(d);
    }
  std::sort(dist.begin(), dist.end());
  const std::size_t k = dist.size();
  double med = (k % 2 == 1) ? dist[k / 2] : 0.5 * (dist[k / 2 - 1] + dist[k / 2]);
  if (med > 0.0) return {med, false};
  // Zero median: degenerate data. If any pair differs, the smallest positive
  // distance keeps the bandwidth usable; all-identical rows fall back to 1.0.
  for (double d : dist)
    if (d > 0.0) return {d, true};
  return {1.0, true};
}

KernelSpec median_kernel(KernelFamily family, const Matrix& a) {
  return {family, median_heuristic(a, norm_for(family)).bandwidth};
}

}  // namespace mmdci
