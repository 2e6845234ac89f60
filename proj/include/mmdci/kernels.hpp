#pragma once

#include "mmdci/types.hpp"

namespace mmdci {

enum class KernelFamily { gaussian, laplacian };

enum class Norm { l1, l2 };

/// K(a,b) = exp(-||a-b||_2^2 / sigma) for gaussian, exp(-||a-b||_1 / sigma)
/// for laplacian. Both are bounded by 1 with K(a,a) = 1.
struct KernelSpec {
  KernelFamily family = KernelFamily::laplacian;
  double bandwidth = 1.0;
};

const char* kernel_family_name(KernelFamily f);
KernelFamily parse_kernel_family(const std::string& name);

/// Distance norm the median heuristic should use for a kernel family
/// (squared l2 for gaussian, l1 for laplacian).
inline Norm norm_for(KernelFamily f) {
  return f == KernelFamily::gaussian ? Norm::l2 : Norm::l1;
}

double kernel_eval(const KernelSpec& spec, const Vector& a, const Vector& b);

/// Pairwise distances, rows(A) x rows(B). Norm::l2 returns *squared* l2
/// distances, matching the gaussian kernel exponent.
Matrix distance_matrix(const Matrix& a, const Matrix& b, Norm norm);

/// Gram matrix, entry (i,j) = kernel_eval(spec, A_i, B_j).
Matrix gram(const KernelSpec& spec, const Matrix& a, const Matrix& b);

struct MedianBandwidth {
  double bandwidth = 1.0;
  // True when the plain median was unusable: all rows identical (bandwidth
  // falls back to 1.0) or the median distance was zero (falls back to the
  // smallest positive pairwise distance).
  bool fallback = false;
};

/// Median of the n(n-1)/2 pairwise distances over distinct unordered pairs,
/// squared l2 for Norm::l2 and l1 for Norm::l1. Even counts average the two
/// middle order statistics.
MedianBandwidth median_heuristic(const Matrix& a, Norm norm);

/// Kernel spec with the median-heuristic bandwidth for the given data block.
KernelSpec median_kernel(KernelFamily family, const Matrix& a);

}  // namespace mmdci
