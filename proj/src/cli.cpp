#include "mmdci/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmdci/bootstrap.hpp"
#include "mmdci/csv.hpp"
#include "mmdci/harness.hpp"

namespace mmdci {

namespace {

using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;
constexpr int kExitUsage = 64;

struct TestOptions {
  std::string x_path, y_path, z_path;
  std::string kernel_x = "laplacian", kernel_y = "laplacian", kernel_z = "laplacian";
  Index folds = 2;
  Index m = 100;
  Index bootstrap = 1000;
  double gamma = 0.05;
  std::uint64_t seed = 1;
  std::string generator = "gmmn";
  std::string gen_x_path, gen_y_path;
  std::string output;
  int threads = 0;
  TrainConfig train;
};

struct TrainOptions {
  std::string x_path, y_path, z_path;
  std::string kernel_z = "laplacian";
  std::string output;
  TrainConfig train;
};

struct BenchOptions {
  std::string dgp = "bernoulli_mixture";
  double p = 0.0;
  Index d_z = 1;
  double b = 0.0;
  bool alternative = false;
  Index n = 200;
  Index reps = 100;
  std::vector<double> levels{0.05};
  std::string mode = "oracle";
  std::string corrupt_side = "x";
  double shift = 0.5;
  Index folds = 2;
  Index m = 100;
  Index bootstrap = 1000;
  std::uint64_t seed = 1;
  int threads = 0;
  bool with_t0 = false;
  std::string output;
  TrainConfig train = harness_train_defaults();
};

void add_train_flags(CLI::App* cmd, TrainConfig& t) {
  cmd->add_option("--epochs", t.epochs, "training epochs");
  cmd->add_option("--batch", t.batch_size, "minibatch size");
  cmd->add_option("--lr", t.learning_rate, "learning rate");
  cmd->add_option("--latent", t.latent_dim, "latent noise dimension");
  cmd->add_option("--hidden", t.hidden, "hidden layer sizes");
  cmd->add_option("--m-train", t.m_train, "synthetic draws per row in the loss");
  cmd->add_flag("--full-batch", t.full_batch, "use all rows per step");
  cmd->add_option("--holdout", t.holdout_fraction,
                  "fraction of rows held out for the objective trace");
}

TripleSample load_triple(const std::string& x_path, const std::string& y_path,
                         const std::string& z_path) {
  TripleSample s;
  s.x = read_csv_file(x_path).values;
  s.y = read_csv_file(y_path).values;
  s.z = read_csv_file(z_path).values;
  if (s.x.rows() != s.y.rows() || s.x.rows() != s.z.rows())
    throw InputError("input files have different row counts: " + x_path + " (" +
                     std::to_string(s.x.rows()) + "), " + y_path + " (" +
                     std::to_string(s.y.rows()) + "), " + z_path + " (" +
                     std::to_string(s.z.rows()) + ")");
  return s;
}

CondGenerator load_generator_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open generator file: " + path);
  return load_generator(is);
}

CondGenerator named_oracle(const std::string& name, Index d_x, Index d_z) {
  OracleKind kind;
  if (name == "normal_shift") kind = OracleKind::normal_shift;
  else if (name == "bernoulli_half") kind = OracleKind::bernoulli_half;
  else
    throw std::invalid_argument("unknown oracle generator: " + name +
                                " (expected normal_shift or bernoulli_half)");
  if (d_x != 1 || d_z != 1)
    throw std::invalid_argument("oracle generator " + name +
                                " supports 1-D data and 1-D Z only");
  CondGenerator g;
  OracleGenerator o;
  o.kind = kind;
  g.impl = std::move(o);
  g.latent_dim = 2;
  g.z_dim = d_z;
  g.output_dim = 1;
  return g;
}

void emit(const std::string& output, const std::string& text) {
  if (output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(output);
  if (!os) throw InputError("cannot open output file: " + output);
  os << text;
}

json train_config_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"latent_dim", t.latent_dim},
              {"hidden", t.hidden},
              {"m_train", t.m_train},
              {"full_batch", t.full_batch},
              {"holdout_fraction", t.holdout_fraction}};
}

int cmd_test(const TestOptions& opt) {
  if (!(opt.gamma > 0.0 && opt.gamma < 1.0))
    throw std::invalid_argument("--gamma must lie in (0,1)");
  if (opt.folds < 1) throw std::invalid_argument("--folds must be >= 1");
  if (opt.m < 1 || opt.bootstrap < 1)
    throw std::invalid_argument("--m and --bootstrap must be >= 1");

  const TripleSample sample = load_triple(opt.x_path, opt.y_path, opt.z_path);
  sample.validate();
  const auto fx = parse_kernel_family(opt.kernel_x);
  const auto fy = parse_kernel_family(opt.kernel_y);
  const auto fz = parse_kernel_family(opt.kernel_z);

  Rng fold_rng(seed_stream(opt.seed, stream::kFolds));
  const FoldPlan plan = make_fold_plan(sample.n(), opt.folds, fold_rng);

  std::vector<std::pair<CondGenerator, CondGenerator>> gens;
  if (opt.generator == "gmmn") {
    if (opt.folds < 2)
      throw std::invalid_argument(
          "--generator gmmn needs --folds >= 2 so complement folds exist");
    gens = train_fold_generators(sample, plan, opt.train, fz, opt.seed,
                                 opt.threads);
  } else if (opt.generator == "load") {
    if (opt.gen_x_path.empty() || opt.gen_y_path.empty())
      throw std::invalid_argument("--generator load requires --gen-x and --gen-y");
    CondGenerator gx = load_generator_file(opt.gen_x_path);
    CondGenerator gy = load_generator_file(opt.gen_y_path);
    if (gx.z_dim != sample.z.cols() || gy.z_dim != sample.z.cols())
      throw InputError("loaded generator Z dimension does not match --z data");
    if (gx.output_dim != sample.x.cols() || gy.output_dim != sample.y.cols())
      throw InputError("loaded generator output dimension does not match data");
    gens.assign(plan.folds.size(), {std::move(gx), std::move(gy)});
  } else if (opt.generator.rfind("oracle:", 0) == 0) {
    const std::string name = opt.generator.substr(7);
    CondGenerator gx = named_oracle(name, sample.x.cols(), sample.z.cols());
    CondGenerator gy = named_oracle(name, sample.y.cols(), sample.z.cols());
    gens.assign(plan.folds.size(), {std::move(gx), std::move(gy)});
  } else {
    throw std::invalid_argument(
        "--generator must be gmmn, load, or oracle:<name>");
  }

  TjConfig cfg;
  cfg.m_draws = opt.m;
  cfg.kernels = fold_kernels(sample, plan, fx, fy, fz);
  Rng synth_rng(seed_stream(opt.seed, stream::kSynth));
  const TjResult tj = statistic_tj(sample, plan, gens, cfg, synth_rng);
  const BootstrapDraws draws = wild_bootstrap(
      tj.uv, plan, opt.bootstrap, seed_stream(opt.seed, stream::kMultipliers));
  const TestOutcome outcome =
      make_outcome(tj, draws, opt.gamma, cfg.kernels, opt.seed);

  json doc;
  doc["schema"] = "mmdci-test-result/1";
  doc["statistic"] = outcome.t;
  doc["p_value"] = outcome.p;
  doc["reject"] = outcome.reject;
  doc["gamma"] = outcome.gamma;
  doc["per_fold"] = outcome.per_fold;
  json bw = json::array();
  for (const auto& k : outcome.kernels)
    bw.push_back({{"x", k.kx.bandwidth}, {"y", k.ky.bandwidth}, {"z", k.kz.bandwidth}});
  doc["bandwidths"] = bw;
  json config;
  config["inputs"] = {{"x", opt.x_path}, {"y", opt.y_path}, {"z", opt.z_path}};
  config["n"] = sample.n();
  config["kernels"] = {{"x", opt.kernel_x}, {"y", opt.kernel_y}, {"z", opt.kernel_z}};
  config["folds"] = opt.folds;
  config["m"] = opt.m;
  config["bootstrap"] = opt.bootstrap;
  config["generator"] = opt.generator;
  if (opt.generator == "load")
    config["generator_files"] = {{"x", opt.gen_x_path}, {"y", opt.gen_y_path}};
  if (opt.generator == "gmmn") config["train"] = train_config_json(opt.train);
  doc["config"] = config;
  doc["seed"] = opt.seed;
  emit(opt.output, doc.dump(2) + "\n");
  return kExitOk;
}

int cmd_train(const TrainOptions& opt) {
  if (opt.x_path.empty() == opt.y_path.empty())
    throw std::invalid_argument("train: give exactly one of --x or --y");
  const std::string& data_path = opt.x_path.empty() ? opt.y_path : opt.x_path;
  if (opt.z_path.empty()) throw std::invalid_argument("train: --z is required");
  if (opt.output.empty()) throw std::invalid_argument("train: --output is required");

  const Matrix data = read_csv_file(data_path).values;
  const Matrix z = read_csv_file(opt.z_path).values;
  if (data.rows() != z.rows())
    throw InputError("train: row counts differ between " + data_path + " and " +
                     opt.z_path);

  const KernelSpec kx = median_kernel(KernelFamily::gaussian, data);
  const KernelSpec kz = median_kernel(parse_kernel_family(opt.kernel_z), z);
  const TrainResult res = train_gmmn(data, z, opt.train, kx, kz);

  std::ofstream os(opt.output);
  if (!os) throw InputError("cannot open output file: " + opt.output);
  save_generator(os, res.gen);

  std::cout << "trained generator written to " << opt.output << "\n";
  std::cout << "held-out objective: initial " << res.holdout_trace.front()
            << " final " << res.holdout_trace.back() << "\n";
  return kExitOk;
}

ExperimentPlan bench_plan(const BenchOptions& opt) {
  ExperimentPlan plan;
  plan.id = opt.dgp;
  if (opt.dgp == "bernoulli_mixture") {
    plan.dgp.kind = DgpSpec::Kind::bernoulli_mixture;
    plan.dgp.p = opt.p;
  } else if (opt.dgp == "post_nonlinear") {
    plan.dgp.kind = DgpSpec::Kind::post_nonlinear;
    plan.dgp.d_z = opt.d_z;
    plan.dgp.b = opt.b;
  } else if (opt.dgp == "weak_ci") {
    plan.dgp.kind = DgpSpec::Kind::weak_ci;
    plan.dgp.alternative = opt.alternative;
  } else {
    throw std::invalid_argument("unknown --dgp: " + opt.dgp);
  }
  plan.n = opt.n;
  plan.reps = opt.reps;
  plan.levels = opt.levels;
  plan.j_folds = opt.folds;
  plan.m_draws = opt.m;
  plan.b_boot = opt.bootstrap;
  if (opt.mode == "oracle") plan.mode = GenMode::oracle;
  else if (opt.mode == "gmmn") plan.mode = GenMode::gmmn;
  else if (opt.mode == "corrupted") plan.mode = GenMode::corrupted;
  else throw std::invalid_argument("unknown --mode: " + opt.mode);
  if (opt.corrupt_side == "x") plan.corrupt_side = CorruptSide::x;
  else if (opt.corrupt_side == "y") plan.corrupt_side = CorruptSide::y;
  else if (opt.corrupt_side == "both") plan.corrupt_side = CorruptSide::both;
  else throw std::invalid_argument("unknown --corrupt-side: " + opt.corrupt_side);
  plan.corrupt_shift = opt.shift;
  plan.train = opt.train;
  plan.master_seed = opt.seed;
  plan.threads = opt.threads;
  plan.with_t0 = opt.with_t0;
  return plan;
}

int cmd_bench(const BenchOptions& opt) {
  if (opt.output.empty()) throw std::invalid_argument("bench: --output is required");
  const ExperimentPlan plan = bench_plan(opt);
  const ExperimentReport report = run_experiment(plan);

  {
    std::ofstream os(opt.output + ".csv");
    if (!os) throw InputError("cannot open output file: " + opt.output + ".csv");
    const ExperimentReport reports[] = {report};
    write_reports_csv(os, reports);
  }
  {
    std::ofstream os(opt.output + ".json");
    if (!os) throw InputError("cannot open output file: " + opt.output + ".json");
    const ExperimentPlan plans[] = {plan};
    const ExperimentReport reports[] = {report};
    write_reports_json(os, plans, reports);
  }
  for (const auto& lr : report.rates)
    std::cout << plan.id << " level " << lr.level << ": rate " << lr.rate
              << " (se " << lr.se << ", reps " << report.reps.size()
              << ", failed " << report.n_failed << ")\n";
  std::cout << "wall seconds: " << report.wall_seconds << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"MMD-based conditional independence testing toolkit"};
  app.require_subcommand(1);

  TestOptions topt;
  CLI::App* test = app.add_subcommand(
      "test", "Test X indep Y given Z from three CSV files");
  test->add_option("--x", topt.x_path, "X block CSV")->required();
  test->add_option("--y", topt.y_path, "Y block CSV")->required();
  test->add_option("--z", topt.z_path, "Z block CSV")->required();
  test->add_option("--kernel-x", topt.kernel_x, "gaussian|laplacian");
  test->add_option("--kernel-y", topt.kernel_y, "gaussian|laplacian");
  test->add_option("--kernel-z", topt.kernel_z, "gaussian|laplacian");
  test->add_option("--folds", topt.folds, "number of cross-fitting folds J");
  test->add_option("--m", topt.m, "synthetic draws per observation");
  test->add_option("--bootstrap", topt.bootstrap, "bootstrap replicates B");
  test->add_option("--gamma", topt.gamma, "nominal level");
  test->add_option("--seed", topt.seed, "master seed for all randomness");
  test->add_option("--generator", topt.generator,
                   "gmmn | load | oracle:<normal_shift|bernoulli_half>");
  test->add_option("--gen-x", topt.gen_x_path, "saved X generator (load mode)");
  test->add_option("--gen-y", topt.gen_y_path, "saved Y generator (load mode)");
  test->add_option("--output", topt.output, "result JSON path (default stdout)");
  test->add_option("--threads", topt.threads, "fold-training parallelism");
  add_train_flags(test, topt.train);

  TrainOptions ropt;
  CLI::App* train = app.add_subcommand(
      "train", "Train one conditional generator and save it");
  train->add_option("--x", ropt.x_path, "modeled block CSV (X)");
  train->add_option("--y", ropt.y_path, "modeled block CSV (Y)");
  train->add_option("--z", ropt.z_path, "conditioning block CSV");
  train->add_option("--kernel-z", ropt.kernel_z, "gaussian|laplacian");
  train->add_option("--output", ropt.output, "generator file to write");
  train->add_option("--seed", ropt.train.seed, "training seed");
  add_train_flags(train, ropt.train);

  BenchOptions bopt;
  CLI::App* bench = app.add_subcommand(
      "bench", "Monte Carlo size/power experiment on a simulation DGP");
  bench->add_option("--dgp", bopt.dgp,
                    "bernoulli_mixture | post_nonlinear | weak_ci");
  bench->add_option("--p", bopt.p, "bernoulli_mixture dependence parameter");
  bench->add_option("--dz", bopt.d_z, "post_nonlinear Z dimension");
  bench->add_option("--b", bopt.b, "post_nonlinear dependence strength");
  bench->add_flag("--alternative", bopt.alternative, "weak_ci alternative tables");
  bench->add_option("--n", bopt.n, "sample size per rep");
  bench->add_option("--reps", bopt.reps, "Monte Carlo replications");
  bench->add_option("--levels", bopt.levels, "nominal levels");
  bench->add_option("--mode", bopt.mode, "oracle | gmmn | corrupted");
  bench->add_option("--corrupt-side", bopt.corrupt_side, "x | y | both");
  bench->add_option("--shift", bopt.shift, "corruption shift");
  bench->add_option("--folds", bopt.folds, "number of folds J");
  bench->add_option("--m", bopt.m, "synthetic draws per observation");
  bench->add_option("--bootstrap", bopt.bootstrap, "bootstrap replicates B");
  bench->add_option("--seed", bopt.seed, "master seed");
  bench->add_option("--threads", bopt.threads, "parallel reps (0 = cores)");
  bench->add_flag("--with-t0", bopt.with_t0,
                  "also record the non-robust plug-in statistic");
  bench->add_option("--output", bopt.output, "output prefix (.csv and .json)");
  add_train_flags(bench, bopt.train);

  try {
    app.parse(argc, argv);
    if (*test) return cmd_test(topt);
    if (*train) return cmd_train(ropt);
    if (*bench) return cmd_bench(bopt);
    throw std::invalid_argument("no subcommand given");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("mmdci");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mmdci
