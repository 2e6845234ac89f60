#include "mmdci/generator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace mmdci {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double oracle_eval(const OracleGenerator& o, const Vector& z, const Vector& eta) {
  switch (o.kind) {
    case OracleKind::normal_shift:
      return z(0) + eta(0) + o.shift;
    case OracleKind::postnonlinear_y:
      return std::sin(o.a_f.dot(z) + 0.5 * eta(0)) + o.shift;
    case OracleKind::postnonlinear_x: {
      const double y_prime = std::sin(o.a_f.dot(z) + 0.5 * eta(1));
      return std::cos(o.a_g.dot(z) + o.b * y_prime + 0.5 * eta(0)) + o.shift;
    }
    case OracleKind::bernoulli_half: {
      double v = eta(0) > 0.0 ? 1.0 : 0.0;
      if (o.flip_prob > 0.0 && normal_cdf(eta(1)) < o.flip_prob) v = 1.0 - v;
      return v;
    }
  }
  throw std::invalid_argument("oracle_eval: unknown kind");
}

}  // namespace

Vector gen_sample(const CondGenerator& gen, const Vector& z, const Vector& eta) {
  if (z.size() != gen.z_dim)
    throw std::invalid_argument("gen_sample: z dimension mismatch");
  if (eta.size() != gen.latent_dim)
    throw std::invalid_argument("gen_sample: eta dimension mismatch");
  if (const auto* o = std::get_if<OracleGenerator>(&gen.impl)) {
    Vector out(1);
    out(0) = oracle_eval(*o, z, eta);
    return out;
  }
  const auto& g = std::get<GmmnGenerator>(gen.impl);
  Matrix in(1, gen.latent_dim + gen.z_dim);
  in << eta.transpose(), z.transpose();
  return mlp_forward(g.net, in).row(0).transpose();
}

Matrix gen_sample_batch(const CondGenerator& gen, const Matrix& z, const Matrix& eta) {
  if (z.cols() != gen.z_dim || eta.cols() != gen.latent_dim ||
      z.rows() != eta.rows())
    throw std::invalid_argument("gen_sample_batch: shape mismatch");
  if (gen.is_oracle()) {
    const auto& o = std::get<OracleGenerator>(gen.impl);
    Matrix out(z.rows(), 1);
    for (Index i = 0; i < z.rows(); ++i)
      out(i, 0) = oracle_eval(o, z.row(i).transpose(), eta.row(i).transpose());
    return out;
  }
  const auto& g = std::get<GmmnGenerator>(gen.impl);
  Matrix in(z.rows(), gen.latent_dim + gen.z_dim);
  in << eta, z;
  return mlp_forward(g.net, in);
}

SyntheticBlock synthesize(const CondGenerator& gen_x, const CondGenerator& gen_y,
                          const Matrix& z, Index m_draws, Rng& rng) {
  if (m_draws < 1) throw std::invalid_argument("synthesize: M must be >= 1");
  const Index n = z.rows();
  auto draw_noise = [&](Index latent) {
    Matrix e(n * m_draws, latent);
    for (Index r = 0; r < e.rows(); ++r)
      for (Index c = 0; c < latent; ++c) e(r, c) = rng.normal();
    return e;
  };
  // Row i*M+m pairs with z row i; the eta stream is drawn before kappa.
  Matrix zrep(n * m_draws, z.cols());
  for (Index i = 0; i < n; ++i)
    zrep.middleRows(i * m_draws, m_draws) = z.row(i).replicate(m_draws, 1);
  SyntheticBlock out;
  out.m_draws = m_draws;
  out.x = gen_sample_batch(gen_x, zrep, draw_noise(gen_x.latent_dim));
  out.y = gen_sample_batch(gen_y, zrep, draw_noise(gen_y.latent_dim));
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs < 0");
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size < 2");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("TrainConfig: learning_rate <= 0");
  if (latent_dim < 1) throw std::invalid_argument("TrainConfig: latent_dim < 1");
  if (m_train < 1) throw std::invalid_argument("TrainConfig: m_train < 1");
  for (Index h : hidden)
    if (h < 1) throw std::invalid_argument("TrainConfig: hidden size < 1");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw std::invalid_argument("TrainConfig: holdout_fraction outside [0,1)");
  if (trace_every < 0)
    throw std::invalid_argument("TrainConfig: trace_every must be >= 0");
}

namespace {

// Shared core of the Eq-style batch objective. Gradients (w.r.t. the
// generated rows, then backpropagated) are produced only when `grads` is
// non-null; the column-block loop keeps memory at O(bM * M) instead of
// materializing the (bM)x(bM) synthetic Gram matrix.
double gmmn_objective(const MlpParams& net, const Matrix& x, const Matrix& z,
                      const Matrix& noise, Index m_train, const KernelSpec& kx,
                      const KernelSpec& kz, MlpGrads* grads) {
  const Index b = x.rows();
  const Index m = m_train;
  if (b < 2) throw std::invalid_argument("gmmn objective: batch size < 2");
  if (z.rows() != b) throw std::invalid_argument("gmmn objective: X/Z mismatch");
  if (noise.rows() != b * m)
    throw std::invalid_argument("gmmn objective: noise rows != batch * m_train");
  if (kx.family != KernelFamily::gaussian)
    throw std::invalid_argument(
        "gmmn objective: K_X must be gaussian; the laplacian kernel is not "
        "differentiable at coincident points, so gradients through generated "
        "samples would be ill-defined");
  if (noise.cols() + z.cols() != net.input_dim())
    throw std::invalid_argument("gmmn objective: net input width mismatch");

  Matrix in(b * m, noise.cols() + z.cols());
  for (Index i = 0; i < b; ++i)
    in.middleRows(i * m, m) << noise.middleRows(i * m, m),
        z.row(i).replicate(m, 1);
  ForwardCache cache;
  const Matrix s = mlp_forward(net, in, grads ? &cache : nullptr);

  Matrix w = gram(kz, z, z);
  w.diagonal().setZero();
  const Matrix gxx = gram(kx, x, x);
  const Matrix gxs = gram(kx, x, s);  // b x bM

  Matrix c_mat(b, b);   // c_mat(k,i) = mean_m K(X_k, S_{i,m})
  Matrix b_mat(b, b);   // b_mat(k,i) = mean_{m1,m2} K(S_{k,m1}, S_{i,m2})
  Matrix grad_s;
  if (grads) grad_s = Matrix::Zero(b * m, s.cols());

  Vector wrep(b * m);  // source-row weights, expanded per draw
  for (Index i = 0; i < b; ++i) {
    const Matrix colblock = gram(kx, s, s.middleRows(i * m, m));  // bM x M
    for (Index k = 0; k < b; ++k) {
      c_mat(k, i) = gxs.row(k).segment(i * m, m).mean();
      b_mat(k, i) = colblock.middleRows(k * m, m).mean();
    }
    if (grads) {
      for (Index k = 0; k < b; ++k)
        wrep.segment(k * m, m).setConstant(w(k, i));
      const Matrix qi = colblock.array().colwise() * wrep.array();
      Matrix gb = qi.transpose() * s;  // M x d
      const Vector qsum = qi.colwise().sum().transpose();
      gb -= (s.middleRows(i * m, m).array().colwise() * qsum.array()).matrix();
      grad_s.middleRows(i * m, m) = gb;
    }
  }

  const Matrix uhat = gxx - c_mat - c_mat.transpose() + b_mat;
  const double denom = double(b) * double(b - 1);
  const double loss = uhat.cwiseProduct(w).sum() / denom;

  if (grads) {
    // Real-vs-synthetic cross term of the gradient.
    Matrix wexp(b, b * m);
    for (Index i = 0; i < b; ++i)
      wexp.middleCols(i * m, m) = w.col(i).replicate(1, m);
    const Matrix p = gxs.cwiseProduct(wexp);
    Matrix grad_a = p.transpose() * x;  // bM x d
    const Vector psum = p.colwise().sum().transpose();
    grad_a -= (s.array().colwise() * psum.array()).matrix();

    const double scale = 4.0 / (denom * kx.bandwidth);
    grad_s = scale * (grad_s / double(m * m) - grad_a / double(m));
    *grads = mlp_backward(net, cache, grad_s);
  }
  return loss;
}

}  // namespace

double gmmn_loss(const MlpParams& net, const Matrix& x, const Matrix& z,
                 const Matrix& noise, Index m_train, const KernelSpec& kx,
                 const KernelSpec& kz) {
  return gmmn_objective(net, x, z, noise, m_train, kx, kz, nullptr);
}

GmmnObjective gmmn_loss_and_grad(const MlpParams& net, const Matrix& x,
                                 const Matrix& z, const Matrix& noise,
                                 Index m_train, const KernelSpec& kx,
                                 const KernelSpec& kz) {
  GmmnObjective out;
  out.loss = gmmn_objective(net, x, z, noise, m_train, kx, kz, &out.grads);
  if (!std::isfinite(out.loss))
    throw TrainingError("gmmn loss is not finite");
  return out;
}

TrainResult train_gmmn(const Matrix& data, const Matrix& z,
                       const TrainConfig& cfg, const KernelSpec& kx,
                       const KernelSpec& kz) {
  cfg.validate();
  if (data.rows() != z.rows())
    throw std::invalid_argument("train_gmmn: data/Z row mismatch");
  if (data.rows() < 2)
    throw std::invalid_argument("train_gmmn: need at least 2 rows");
  if (kx.family != KernelFamily::gaussian)
    throw std::invalid_argument(
        "train_gmmn: training loss requires a gaussian K_X (test-time kernels "
        "are configured independently)");

  const Index n = data.rows();
  Rng rng(cfg.seed);
  Rng init_rng = rng.spawn(10);
  Rng shuffle_rng = rng.spawn(11);
  Rng noise_rng = rng.spawn(12);
  Rng holdout_rng = rng.spawn(stream::kHoldout);

  // Held-out rows are used only for the objective trace.
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), holdout_rng.engine());
  Index n_hold = static_cast<Index>(std::floor(cfg.holdout_fraction * double(n)));
  if (n_hold == 1) n_hold = 0;           // a 1-row holdout cannot form pairs
  if (n - n_hold < 2) n_hold = 0;
  const bool trace_on_train = n_hold == 0;

  auto take = [&](Index from, Index count, const Matrix& src) {
    Matrix out(count, src.cols());
    for (Index r = 0; r < count; ++r) out.row(r) = src.row(order[from + r]);
    return out;
  };
  const Matrix hold_x = trace_on_train ? data : take(0, n_hold, data);
  const Matrix hold_z = trace_on_train ? z : take(0, n_hold, z);
  const Matrix train_x = trace_on_train ? data : take(n_hold, n - n_hold, data);
  const Matrix train_z = trace_on_train ? z : take(n_hold, n - n_hold, z);
  const Index n_train = train_x.rows();

  std::vector<Index> sizes;
  sizes.push_back(cfg.latent_dim + z.cols());
  for (Index h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(data.cols());
  MlpParams net = mlp_init(sizes, Activation::tanh, init_rng.next_u64());
  OptState opt = opt_state_like(net);

  // Frozen noise so trace values are comparable across epochs.
  Matrix hold_noise(hold_x.rows() * cfg.m_train, cfg.latent_dim);
  for (Index r = 0; r < hold_noise.rows(); ++r)
    for (Index c = 0; c < hold_noise.cols(); ++c)
      hold_noise(r, c) = holdout_rng.normal();
  auto trace_value = [&]() {
    return gmmn_loss(net, hold_x, hold_z, hold_noise, cfg.m_train, kx, kz);
  };

  TrainResult result;
  result.holdout_trace.push_back(trace_value());

  const Index batch = cfg.full_batch ? n_train : std::min(cfg.batch_size, n_train);
  std::vector<Index> perm(n_train);
  std::iota(perm.begin(), perm.end(), Index{0});
  long step = 0;
  bool traced_last = true;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), shuffle_rng.engine());
    for (Index start = 0; start + 2 <= n_train; start += batch) {
      const Index bsz = std::min(batch, n_train - start);
      if (bsz < 2) break;
      Matrix bx(bsz, train_x.cols()), bz(bsz, train_z.cols());
      for (Index r = 0; r < bsz; ++r) {
        bx.row(r) = train_x.row(perm[start + r]);
        bz.row(r) = train_z.row(perm[start + r]);
      }
      Matrix noise(bsz * cfg.m_train, cfg.latent_dim);
      for (Index r = 0; r < noise.rows(); ++r)
        for (Index c = 0; c < noise.cols(); ++c) noise(r, c) = noise_rng.normal();
      GmmnObjective obj;
      try {
        obj = gmmn_loss_and_grad(net, bx, bz, noise, cfg.m_train, kx, kz);
        adam_step(net, obj.grads, opt, cfg.learning_rate);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at step " +
                                std::to_string(step),
                            step);
      }
      ++step;
    }
    traced_last = cfg.trace_every > 0 && (epoch + 1) % cfg.trace_every == 0;
    if (traced_last) result.holdout_trace.push_back(trace_value());
  }
  if (cfg.epochs > 0 && !traced_last)
    result.holdout_trace.push_back(trace_value());

  result.gen.impl = GmmnGenerator{std::move(net)};
  result.gen.latent_dim = cfg.latent_dim;
  result.gen.z_dim = z.cols();
  result.gen.output_dim = data.cols();
  return result;
}

void save_generator(std::ostream& os, const CondGenerator& gen) {
  os << "mmdci-gen v1\n";
  os << "latent " << gen.latent_dim << "\n";
  os << "zdim " << gen.z_dim << "\n";
  os << "outdim " << gen.output_dim << "\n";
  if (const auto* o = std::get_if<OracleGenerator>(&gen.impl)) {
    const char* name = nullptr;
    switch (o->kind) {
      case OracleKind::normal_shift: name = "normal_shift"; break;
      case OracleKind::postnonlinear_y: name = "postnonlinear_y"; break;
      case OracleKind::postnonlinear_x: name = "postnonlinear_x"; break;
      case OracleKind::bernoulli_half: name = "bernoulli_half"; break;
    }
    os << "kind oracle " << name << "\n";
    os << std::hexfloat;
    os << "b " << o->b << "\n";
    os << "shift " << o->shift << "\n";
    os << "flip_prob " << o->flip_prob << "\n";
    os << "a_f " << o->a_f.size();
    for (Index i = 0; i < o->a_f.size(); ++i) os << " " << o->a_f(i);
    os << "\n";
    os << "a_g " << o->a_g.size();
    for (Index i = 0; i < o->a_g.size(); ++i) os << " " << o->a_g(i);
    os << "\n" << std::defaultfloat;
    return;
  }
  os << "kind gmmn\n";
  save_mlp(os, std::get<GmmnGenerator>(gen.impl).net);
}

CondGenerator load_generator(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "mmdci-gen" || version != "v1")
    throw InputError("load_generator: not a v1 generator record");
  CondGenerator gen;
  std::string key;
  is >> key >> gen.latent_dim;
  if (key != "latent") throw InputError("load_generator: missing latent");
  is >> key >> gen.z_dim;
  if (key != "zdim") throw InputError("load_generator: missing zdim");
  is >> key >> gen.output_dim;
  if (key != "outdim") throw InputError("load_generator: missing outdim");
  std::string kind;
  is >> key >> kind;
  if (key != "kind") throw InputError("load_generator: missing kind");
  if (kind == "gmmn") {
    GmmnGenerator g;
    g.net = load_mlp(is);
    if (g.net.input_dim() != gen.latent_dim + gen.z_dim ||
        g.net.output_dim() != gen.output_dim)
      throw InputError("load_generator: net shape disagrees with header");
    gen.impl = std::move(g);
    return gen;
  }
  std::string name;
  is >> name;
  OracleGenerator o;
  if (name == "normal_shift") o.kind = OracleKind::normal_shift;
  else if (name == "postnonlinear_y") o.kind = OracleKind::postnonlinear_y;
  else if (name == "postnonlinear_x") o.kind = OracleKind::postnonlinear_x;
  else if (name == "bernoulli_half") o.kind = OracleKind::bernoulli_half;
  else throw InputError("load_generator: unknown oracle kind " + name);
  auto read_value = [&is]() {
    std::string tok;
    is >> tok;
    if (!is) throw InputError("load_generator: truncated record");
    return std::strtod(tok.c_str(), nullptr);
  };
  auto read_vec = [&](const char* expect) {
    std::string k;
    Index len = 0;
    is >> k >> len;
    if (k != expect || len < 0) throw InputError("load_generator: bad vector");
    Vector v(len);
    for (Index i = 0; i < len; ++i) v(i) = read_value();
    return v;
  };
  is >> key;
  if (key != "b") throw InputError("load_generator: missing b");
  o.b = read_value();
  is >> key;
  if (key != "shift") throw InputError("load_generator: missing shift");
  o.shift = read_value();
  is >> key;
  if (key != "flip_prob") throw InputError("load_generator: missing flip_prob");
  o.flip_prob = read_value();
  o.a_f = read_vec("a_f");
  o.a_g = read_vec("a_g");
  gen.impl = std::move(o);
  return gen;
}

}  // namespace mmdci
