#include "mmdci/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace mmdci {

using json = nlohmann::ordered_json;

const char* gen_mode_name(GenMode m) {
  switch (m) {
    case GenMode::oracle: return "oracle";
    case GenMode::gmmn: return "gmmn";
    case GenMode::corrupted: return "corrupted";
  }
  return "unknown";
}

const char* corrupt_side_name(CorruptSide s) {
  switch (s) {
    case CorruptSide::x: return "x";
    case CorruptSide::y: return "y";
    case CorruptSide::both: return "both";
  }
  return "unknown";
}

TrainConfig harness_train_defaults() {
  TrainConfig t;
  t.epochs = 100;
  t.holdout_fraction = 0.0;  // fold generators see the whole complement
  t.trace_every = 0;         // per-epoch traces are pure overhead here
  return t;
}

void ExperimentPlan::validate() const {
  dgp.validate();
  if (reps < 1) throw std::invalid_argument("ExperimentPlan: reps must be >= 1");
  if (n < 2 * j_folds)
    throw std::invalid_argument("ExperimentPlan: need n >= 2J");
  if (m_draws < 1 || b_boot < 1)
    throw std::invalid_argument("ExperimentPlan: M and B must be >= 1");
  if (levels.empty())
    throw std::invalid_argument("ExperimentPlan: no nominal levels");
  for (double g : levels)
    if (!(g > 0.0 && g < 1.0))
      throw std::invalid_argument("ExperimentPlan: level outside (0,1)");
  if (mode == GenMode::gmmn) {
    if (j_folds < 2)
      throw std::invalid_argument(
          "ExperimentPlan: gmmn mode needs J >= 2 so complement folds exist");
    train.validate();
  }
}

std::vector<double> ExperimentReport::statistics() const {
  std::vector<double> out;
  for (const auto& r : reps)
    if (!r.failed) out.push_back(r.t);
  return out;
}

std::vector<double> ExperimentReport::p_values() const {
  std::vector<double> out;
  for (const auto& r : reps)
    if (!r.failed) out.push_back(r.p);
  return out;
}

std::vector<double> ExperimentReport::t0_statistics() const {
  std::vector<double> out;
  for (const auto& r : reps)
    if (!r.failed) out.push_back(r.t0);
  return out;
}

std::vector<std::pair<CondGenerator, CondGenerator>> train_fold_generators(
    const TripleSample& sample, const FoldPlan& plan, const TrainConfig& base,
    KernelFamily kz_family, std::uint64_t seed, int threads) {
  const Index n = sample.n();
  const std::size_t j_folds = plan.folds.size();

  struct FoldData {
    Matrix x, y, z;
    KernelSpec kx, ky, kz;
  };
  std::vector<FoldData> complements(j_folds);
  for (std::size_t j = 0; j < j_folds; ++j) {
    std::vector<char> in_fold(static_cast<std::size_t>(n), 0);
    for (Index i : plan.folds[j]) in_fold[static_cast<std::size_t>(i)] = 1;
    const Index nc = n - static_cast<Index>(plan.folds[j].size());
    if (nc < 2)
      throw std::invalid_argument("train_fold_generators: complement too small");
    FoldData& fd = complements[j];
    fd.x.resize(nc, sample.x.cols());
    fd.y.resize(nc, sample.y.cols());
    fd.z.resize(nc, sample.z.cols());
    Index r = 0;
    for (Index i = 0; i < n; ++i) {
      if (in_fold[static_cast<std::size_t>(i)]) continue;
      fd.x.row(r) = sample.x.row(i);
      fd.y.row(r) = sample.y.row(i);
      fd.z.row(r) = sample.z.row(i);
      ++r;
    }
    fd.kx = median_kernel(KernelFamily::gaussian, fd.x);
    fd.ky = median_kernel(KernelFamily::gaussian, fd.y);
    fd.kz = median_kernel(kz_family, fd.z);
  }

  std::vector<std::pair<CondGenerator, CondGenerator>> gens(j_folds);
  // Task 2j trains fold j's X generator, task 2j+1 the Y generator.
  auto run_task = [&](std::size_t task) {
    const std::size_t j = task / 2;
    const bool x_side = task % 2 == 0;
    const FoldData& fd = complements[j];
    TrainConfig cfg = base;
    cfg.seed = seed_stream(
        seed_stream(seed, x_side ? stream::kTrainX : stream::kTrainY),
        static_cast<std::uint64_t>(j));
    if (x_side)
      gens[j].first = train_gmmn(fd.x, fd.z, cfg, fd.kx, fd.kz).gen;
    else
      gens[j].second = train_gmmn(fd.y, fd.z, cfg, fd.ky, fd.kz).gen;
  };

  const std::size_t n_tasks = 2 * j_folds;
  const unsigned n_workers =
      threads > 1 ? std::min<unsigned>(static_cast<unsigned>(threads),
                                       static_cast<unsigned>(n_tasks))
                  : 1;
  if (n_workers <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next_task{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    auto worker = [&]() {
      for (;;) {
        const std::size_t t = next_task.fetch_add(1);
        if (t >= n_tasks) return;
        try {
          run_task(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }
  return gens;
}

namespace {

RepResult run_one_rep(const ExperimentPlan& plan, Index rep,
                      std::uint64_t rep_seed) {
  RepResult out;
  Rng rep_rng(rep_seed);
  Rng data_rng = rep_rng.spawn(stream::kData);
  const DgpDraw draw = gen_dgp(plan.dgp, plan.n, data_rng);

  Rng fold_rng = rep_rng.spawn(stream::kFolds);
  const FoldPlan folds = make_fold_plan(plan.n, plan.j_folds, fold_rng);

  std::vector<std::pair<CondGenerator, CondGenerator>> gens;
  switch (plan.mode) {
    case GenMode::oracle:
      gens.assign(folds.folds.size(), {draw.oracle_x, draw.oracle_y});
      break;
    case GenMode::corrupted: {
      CondGenerator gx = draw.oracle_x, gy = draw.oracle_y;
      if (plan.corrupt_side == CorruptSide::x || plan.corrupt_side == CorruptSide::both)
        gx = corrupt_oracle(gx, plan.corrupt_shift);
      if (plan.corrupt_side == CorruptSide::y || plan.corrupt_side == CorruptSide::both)
        gy = corrupt_oracle(gy, plan.corrupt_shift);
      gens.assign(folds.folds.size(), {gx, gy});
      break;
    }
    case GenMode::gmmn:
      gens = train_fold_generators(draw.sample, folds, plan.train, plan.kz,
                                   rep_seed);
      break;
  }

  TjConfig cfg;
  cfg.m_draws = plan.m_draws;
  cfg.kernels = fold_kernels(draw.sample, folds, plan.kx, plan.ky, plan.kz);
  cfg.with_t0 = plan.with_t0;
  Rng synth_rng = rep_rng.spawn(stream::kSynth);
  const TjResult tj = statistic_tj(draw.sample, folds, gens, cfg, synth_rng);
  const BootstrapDraws draws = wild_bootstrap(
      tj.uv, folds, plan.b_boot, seed_stream(rep_seed, stream::kMultipliers));
  out.t = tj.t;
  out.p = p_value(tj.t, draws);
  if (plan.with_t0) out.t0 = tj.t0;
  (void)rep;
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  const auto t_start = std::chrono::steady_clock::now();

  ExperimentReport report;
  report.plan_id = plan.id;
  report.reps.resize(static_cast<std::size_t>(plan.reps));

  const std::uint64_t rep_base = seed_stream(plan.master_seed, stream::kRep);
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const unsigned n_threads =
      plan.threads > 0 ? static_cast<unsigned>(plan.threads)
                       : std::min<unsigned>(hw, static_cast<unsigned>(plan.reps));

  std::atomic<Index> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const Index rep = next.fetch_add(1);
      if (rep >= plan.reps) return;
      auto& slot = report.reps[static_cast<std::size_t>(rep)];
      try {
        slot = run_one_rep(plan, rep,
                           seed_stream(rep_base, static_cast<std::uint64_t>(rep)));
      } catch (const TrainingError& e) {
        slot.failed = true;
        slot.error = e.what();
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (const auto& r : report.reps)
    if (r.failed) ++report.n_failed;
  // Tolerate isolated training failures; a systematic problem is an error.
  if (report.n_failed * 50 >= plan.reps)
    throw TrainingError("run_experiment: " + std::to_string(report.n_failed) +
                        " of " + std::to_string(plan.reps) +
                        " reps failed (>= 2%)");

  const Index ok = plan.reps - report.n_failed;
  for (double level : plan.levels) {
    LevelRate lr;
    lr.level = level;
    Index rejected = 0;
    for (const auto& r : report.reps)
      if (!r.failed && r.p < level) ++rejected;
    lr.rate = ok > 0 ? double(rejected) / double(ok) : 0.0;
    lr.se = ok > 0 ? std::sqrt(lr.rate * (1.0 - lr.rate) / double(ok)) : 0.0;
    report.rates.push_back(lr);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

double size_adjusted_power(std::span<const double> null_stats,
                           std::span<const double> alt_stats, double level) {
  if (null_stats.empty() || alt_stats.empty())
    throw std::invalid_argument("size_adjusted_power: empty statistic list");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("size_adjusted_power: level outside (0,1)");
  std::vector<double> sorted(null_stats.begin(), null_stats.end());
  std::sort(sorted.begin(), sorted.end());
  const auto r = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil((1.0 - level) * r));
  k = std::min(std::max<std::size_t>(k, 1), sorted.size());
  const double critical = sorted[k - 1];
  std::size_t count = 0;
  for (double t : alt_stats)
    if (t > critical) ++count;
  return double(count) / double(alt_stats.size());
}

std::vector<ExperimentReport> sweep(const std::vector<ExperimentPlan>& plans) {
  std::vector<ExperimentReport> reports;
  reports.reserve(plans.size());
  for (std::size_t i = 0; i < plans.size(); ++i) {
    ExperimentPlan p = plans[i];
    p.master_seed = seed_stream(seed_stream(p.master_seed, stream::kPlan),
                                static_cast<std::uint64_t>(i));
    reports.push_back(run_experiment(p));
  }
  return reports;
}

void write_reports_csv(std::ostream& os, std::span<const ExperimentReport> reports) {
  os << "plan,level,rate,se,reps,failed\n";
  os.precision(17);
  for (const auto& rep : reports)
    for (const auto& lr : rep.rates)
      os << rep.plan_id << "," << lr.level << "," << lr.rate << "," << lr.se
         << "," << rep.reps.size() << "," << rep.n_failed << "\n";
}

namespace {

json plan_to_json(const ExperimentPlan& p) {
  json j;
  j["id"] = p.id;
  j["dgp"] = p.dgp.describe();
  j["n"] = p.n;
  j["reps"] = p.reps;
  j["levels"] = p.levels;
  j["folds"] = p.j_folds;
  j["m"] = p.m_draws;
  j["bootstrap"] = p.b_boot;
  j["kernel_x"] = kernel_family_name(p.kx);
  j["kernel_y"] = kernel_family_name(p.ky);
  j["kernel_z"] = kernel_family_name(p.kz);
  j["mode"] = gen_mode_name(p.mode);
  if (p.mode == GenMode::corrupted) {
    j["corrupt_side"] = corrupt_side_name(p.corrupt_side);
    j["corrupt_shift"] = p.corrupt_shift;
  }
  if (p.mode == GenMode::gmmn) {
    j["train"] = {{"epochs", p.train.epochs},
                  {"batch_size", p.train.batch_size},
                  {"learning_rate", p.train.learning_rate},
                  {"latent_dim", p.train.latent_dim},
                  {"hidden", p.train.hidden},
                  {"m_train", p.train.m_train}};
  }
  j["seed"] = p.master_seed;
  j["with_t0"] = p.with_t0;
  return j;
}

}  // namespace

void write_reports_json(std::ostream& os, std::span<const ExperimentPlan> plans,
                        std::span<const ExperimentReport> reports) {
  if (plans.size() != reports.size())
    throw std::invalid_argument("write_reports_json: plan/report count mismatch");
  json root = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    json entry;
    entry["plan"] = plan_to_json(plans[i]);
    json rates = json::array();
    for (const auto& lr : reports[i].rates)
      rates.push_back({{"level", lr.level}, {"rate", lr.rate}, {"se", lr.se}});
    entry["rates"] = rates;
    entry["failed"] = reports[i].n_failed;
    json reps = json::array();
    for (const auto& r : reports[i].reps) {
      json jr;
      jr["t"] = r.t;
      jr["p"] = r.p;
      if (plans[i].with_t0) jr["t0"] = r.t0;
      if (r.failed) {
        jr["failed"] = true;
        jr["error"] = r.error;
      }
      reps.push_back(jr);
    }
    entry["reps"] = reps;
    root.push_back(entry);
  }
  os << root.dump(2) << "\n";
}

}  // namespace mmdci
