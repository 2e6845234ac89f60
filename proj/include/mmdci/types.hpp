#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mmdci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error conventions, mapped to exit codes by the CLI:
//   std::invalid_argument  -> caller misuse (bad shapes, bad config), exit 64
//   InputError             -> malformed input files, exit 2
//   TrainingError          -> numerical failure during optimization, exit 1
//   InternalError          -> consistency check inside the library failed
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what, long step = -1)
      : std::runtime_error(what), step(step) {}
  long step;
};

class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Aligned observations of (X, Y, Z); row i across the three blocks is one sample.
struct TripleSample {
  Matrix x;
  Matrix y;
  Matrix z;

  Index n() const { return x.rows(); }

  void validate() const {
    if (x.rows() < 1 || y.rows() < 1 || z.rows() < 1)
      throw std::invalid_argument("TripleSample: empty block");
    if (x.rows() != y.rows() || x.rows() != z.rows())
      throw std::invalid_argument("TripleSample: row counts differ");
    if (!x.allFinite() || !y.allFinite() || !z.allFinite())
      throw std::invalid_argument("TripleSample: non-finite entries");
  }
};

}  // namespace mmdci
