#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmdci/bootstrap.hpp"
#include "mmdci/dgp.hpp"
#include "mmdci/generator.hpp"
#include "mmdci/statistic.hpp"

namespace mmdci {

enum class GenMode { oracle, gmmn, corrupted };
enum class CorruptSide { x, y, both };

const char* gen_mode_name(GenMode m);
const char* corrupt_side_name(CorruptSide s);

/// Harness training defaults (desk scale): fewer epochs than the library
/// default and no held-out carve-out, so fold generators see the whole
/// complement.
TrainConfig harness_train_defaults();

struct ExperimentPlan {
  std::string id = "experiment";
  DgpSpec dgp;
  Index n = 200;
  Index reps = 300;
  std::vector<double> levels{0.05};
  Index j_folds = 2;
  Index m_draws = 100;
  Index b_boot = 500;
  KernelFamily kx = KernelFamily::laplacian;
  KernelFamily ky = KernelFamily::laplacian;
  KernelFamily kz = KernelFamily::laplacian;
  GenMode mode = GenMode::oracle;
  CorruptSide corrupt_side = CorruptSide::x;
  double corrupt_shift = 0.5;
  TrainConfig train = harness_train_defaults();
  std::uint64_t master_seed = 1;
  int threads = 0;      // 0 = hardware concurrency
  bool with_t0 = false; // also record the non-robust plug-in statistic

  void validate() const;
};

struct RepResult {
  double t = 0.0;
  double p = 1.0;
  double t0 = 0.0;
  bool failed = false;
  std::string error;
};

struct LevelRate {
  double level = 0.0;
  double rate = 0.0;
  double se = 0.0;  // sqrt(rate (1-rate) / reps)
};

struct ExperimentReport {
  std::string plan_id;
  std::vector<LevelRate> rates;
  std::vector<RepResult> reps;
  Index n_failed = 0;
  double wall_seconds = 0.0;  // console diagnostics only, never serialized

  std::vector<double> statistics() const;  // t of successful reps, rep order
  std::vector<double> p_values() const;
  std::vector<double> t0_statistics() const;
};

/// Per-fold GMMN generator pairs trained on the complement folds; fold j's
/// X and Y nets get seeds derived from (seed, side, j). Training-loss
/// kernels are median-heuristic on the complement split: gaussian for the
/// modeled block, `kz_family` for Z. The 2J trainings are independent and
/// run on `threads` workers; the result never depends on the thread count.
std::vector<std::pair<CondGenerator, CondGenerator>> train_fold_generators(
    const TripleSample& sample, const FoldPlan& plan, const TrainConfig& base,
    KernelFamily kz_family, std::uint64_t seed, int threads = 1);

/// Runs the Monte Carlo experiment: per rep, draw the DGP, build folds,
/// obtain generators per the plan mode, compute the statistic, bootstrap,
/// and the p-value. Reps run in parallel; every random stream derives from
/// master_seed and the rep index, so the report is identical for any thread
/// count. Training failures are recorded per rep and tolerated below 2%.
ExperimentReport run_experiment(const ExperimentPlan& plan);

/// Empirical critical value from the null statistics (the ceil((1-level)R)
/// order statistic), then the strict exceedance fraction of the alternative
/// statistics.
double size_adjusted_power(std::span<const double> null_stats,
                           std::span<const double> alt_stats, double level);

/// Runs the plans independently, offsetting each plan's master seed by its
/// position so shared seeds stay independent across plans.
std::vector<ExperimentReport> sweep(const std::vector<ExperimentPlan>& plans);

/// Long-format rates table: plan, level, rate, se, reps, failed.
void write_reports_csv(std::ostream& os, std::span<const ExperimentReport> reports);

/// Full per-rep detail, including the plan echo.
void write_reports_json(std::ostream& os, std::span<const ExperimentPlan> plans,
                        std::span<const ExperimentReport> reports);

}  // namespace mmdci
