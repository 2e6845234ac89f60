#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mmdci/generator.hpp"

using namespace mmdci;

namespace {

Matrix random_matrix(Index n, Index d, Rng& rng, double scale = 1.0) {
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = scale * rng.normal();
  return m;
}

CondGenerator tiny_gmmn(Index latent, Index z_dim, Index out_dim,
                        std::uint64_t seed) {
  CondGenerator g;
  g.impl = GmmnGenerator{mlp_init({latent + z_dim, 4, out_dim}, Activation::tanh, seed)};
  g.latent_dim = latent;
  g.z_dim = z_dim;
  g.output_dim = out_dim;
  return g;
}

CondGenerator oracle_normal_shift() {
  CondGenerator g;
  OracleGenerator o;
  o.kind = OracleKind::normal_shift;
  g.impl = o;
  g.latent_dim = 2;
  g.z_dim = 1;
  g.output_dim = 1;
  return g;
}

// Direct four-term evaluation of the batch objective, no Gram reuse.
double naive_gmmn_loss(const MlpParams& net, const Matrix& x, const Matrix& z,
                       const Matrix& noise, Index m, const KernelSpec& kx,
                       const KernelSpec& kz) {
  const Index b = x.rows();
  Matrix s(b * m, x.cols());
  for (Index i = 0; i < b; ++i)
    for (Index q = 0; q < m; ++q) {
      Matrix in(1, noise.cols() + z.cols());
      in << noise.row(i * m + q), z.row(i);
      s.row(i * m + q) = mlp_forward(net, in).row(0);
    }
  double sum = 0.0;
  for (Index k = 0; k < b; ++k)
    for (Index l = 0; l < b; ++l) {
      if (k == l) continue;
      double u = kernel_eval(kx, x.row(k).transpose(), x.row(l).transpose());
      for (Index q = 0; q < m; ++q) {
        u -= kernel_eval(kx, x.row(k).transpose(), s.row(l * m + q).transpose()) /
             double(m);
        u -= kernel_eval(kx, x.row(l).transpose(), s.row(k * m + q).transpose()) /
             double(m);
      }
      for (Index q1 = 0; q1 < m; ++q1)
        for (Index q2 = 0; q2 < m; ++q2)
          u += kernel_eval(kx, s.row(k * m + q1).transpose(),
                           s.row(l * m + q2).transpose()) /
               (double(m) * double(m));
      sum += u * kernel_eval(kz, z.row(k).transpose(), z.row(l).transpose());
    }
  return sum / (double(b) * double(b - 1));
}

}  // namespace

TEST_CASE("gen_sample basics") {
  auto oracle = oracle_normal_shift();
  Vector z(1), eta(2);
  z << 2.0;
  eta << 0.0, 0.0;
  CHECK(gen_sample(oracle, z, eta)(0) == doctest::Approx(2.0));

  // zero-weight net returns the final-layer bias (zero after init)
  CondGenerator g;
  MlpParams net;
  net.act = Activation::tanh;
  net.layers.push_back({Matrix::Zero(3, 4), Vector::Zero(3)});
  net.layers.push_back({Matrix::Zero(1, 3), Vector::Zero(1)});
  g.impl = GmmnGenerator{net};
  g.latent_dim = 3;
  g.z_dim = 1;
  g.output_dim = 1;
  Vector eta3(3);
  eta3 << 0.3, -1.0, 2.0;
  CHECK(gen_sample(g, z, eta3)(0) == 0.0);

  auto g2 = tiny_gmmn(3, 1, 1, 9);
  CHECK(gen_sample(g2, z, eta3) == gen_sample(g2, z, eta3));
  Vector bad(2);
  bad.setZero();
  CHECK_THROWS_AS(gen_sample(g2, z, bad), std::invalid_argument);
  CHECK_THROWS_AS(gen_sample(g2, bad, eta3), std::invalid_argument);
}

TEST_CASE("synthesize shapes, determinism, and oracle conditional mean") {
  auto gx = oracle_normal_shift();
  auto gy = oracle_normal_shift();
  Matrix z(1, 1);
  z << 0.7;

  Rng rng(5);
  auto one = synthesize(gx, gy, z, 1, rng);
  CHECK(one.x.rows() == 1);
  CHECK(one.y.rows() == 1);

  Rng r1(99), r2(99);
  auto a = synthesize(gx, gy, z, 7, r1);
  auto b = synthesize(gx, gy, z, 7, r2);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);

  const Index m = 10000;
  Matrix z2(1, 1);
  z2 << -1.25;
  Rng r3(1234);
  auto big = synthesize(gx, gy, z2, m, r3);
  const double mean = big.x.col(0).mean();
  CHECK(std::abs(mean - (-1.25)) < 3.0 / std::sqrt(double(m)));
}

TEST_CASE("gmmn loss: perfect generator gives zero loss") {
  // X = Z and the net copies z, so every generated draw equals the real row.
  MlpParams net;
  net.act = Activation::tanh;
  Matrix w(1, 2);
  w << 0.0, 1.0;  // input = [eta, z]
  net.layers.push_back({w, Vector::Zero(1)});
  Rng rng(3);
  Matrix z = random_matrix(6, 1, rng);
  Matrix x = z;
  KernelSpec kx{KernelFamily::gaussian, 1.0};
  KernelSpec kz{KernelFamily::laplacian, 1.0};
  // M=1 cancels bitwise; larger M only up to roundoff in the 1/M means.
  Matrix noise1 = random_matrix(6, 1, rng);
  CHECK(gmmn_loss(net, x, z, noise1, 1, kx, kz) == 0.0);
  Matrix noise3 = random_matrix(6 * 3, 1, rng);
  CHECK(std::abs(gmmn_loss(net, x, z, noise3, 3, kx, kz)) < 1e-15);
}

TEST_CASE("gmmn loss: b=2, M=1 matches the hand-expanded four terms") {
  auto gen = tiny_gmmn(2, 1, 1, 21);
  const auto& net = std::get<GmmnGenerator>(gen.impl).net;
  Matrix x(2, 1), z(2, 1), noise(2, 2);
  x << 0.3, -1.1;
  z << 0.5, 2.0;
  noise << 0.2, -0.4, 1.0, 0.7;
  KernelSpec kx{KernelFamily::gaussian, 1.3};
  KernelSpec kz{KernelFamily::laplacian, 0.8};

  Matrix in1(1, 3), in2(1, 3);
  in1 << noise.row(0), z.row(0);
  in2 << noise.row(1), z.row(1);
  const double s1 = mlp_forward(net, in1)(0, 0);
  const double s2 = mlp_forward(net, in2)(0, 0);
  auto k = [&](double a, double b) {
    return std::exp(-(a - b) * (a - b) / kx.bandwidth);
  };
  const double uhat = k(x(0, 0), x(1, 0)) - k(x(0, 0), s2) - k(x(1, 0), s1) +
                      k(s1, s2);
  const double expected =
      uhat * std::exp(-std::abs(z(0, 0) - z(1, 0)) / kz.bandwidth);
  CHECK(gmmn_loss(net, x, z, noise, 1, kx, kz) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gmmn loss matches a naive no-reuse evaluation") {
  Rng rng(14);
  auto gen = tiny_gmmn(2, 2, 2, rng.next_u64());
  const auto& net = std::get<GmmnGenerator>(gen.impl).net;
  Matrix x = random_matrix(5, 2, rng);
  Matrix z = random_matrix(5, 2, rng);
  Matrix noise = random_matrix(5 * 3, 2, rng);
  KernelSpec kx{KernelFamily::gaussian, 0.9};
  KernelSpec kz{KernelFamily::laplacian, 1.4};
  CHECK(gmmn_loss(net, x, z, noise, 3, kx, kz) ==
        doctest::Approx(naive_gmmn_loss(net, x, z, noise, 3, kx, kz))
            .epsilon(1e-12));
}

TEST_CASE("gmmn loss is invariant under batch permutation and bounded below") {
  Rng rng(8);
  auto gen = tiny_gmmn(2, 1, 1, rng.next_u64());
  const auto& net = std::get<GmmnGenerator>(gen.impl).net;
  const Index b = 7, m = 2;
  Matrix x = random_matrix(b, 1, rng);
  Matrix z = random_matrix(b, 1, rng);
  Matrix noise = random_matrix(b * m, 2, rng);
  KernelSpec kx{KernelFamily::gaussian, 1.0};
  KernelSpec kz{KernelFamily::laplacian, 1.0};
  const double base = gmmn_loss(net, x, z, noise, m, kx, kz);

  std::vector<Index> perm{3, 0, 6, 1, 5, 2, 4};
  Matrix xp(b, 1), zp(b, 1), np(b * m, 2);
  for (Index i = 0; i < b; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
    np.middleRows(i * m, m) = noise.middleRows(perm[static_cast<std::size_t>(i)] * m, m);
  }
  CHECK(gmmn_loss(net, xp, zp, np, m, kx, kz) ==
        doctest::Approx(base).epsilon(1e-12));
  CHECK(base > -4.0 / double(b - 1));
}

TEST_CASE("gmmn loss rejects a laplacian K_X") {
  auto gen = tiny_gmmn(2, 1, 1, 3);
  Matrix x(2, 1), z(2, 1), noise(2, 2);
  x.setZero();
  z.setZero();
  noise.setZero();
  KernelSpec lap{KernelFamily::laplacian, 1.0};
  CHECK_THROWS_AS(gmmn_loss(std::get<GmmnGenerator>(gen.impl).net, x, z, noise,
                            1, lap, lap),
                  std::invalid_argument);
}

TEST_CASE("gmmn gradients match central finite differences") {
  Rng rng(33);
  const double step = 1e-5;
  KernelSpec kz{KernelFamily::laplacian, 1.2};
  for (int trial = 0; trial < 4; ++trial) {
    auto gen = tiny_gmmn(2, 1, 1, rng.next_u64());
    MlpParams net = std::get<GmmnGenerator>(gen.impl).net;
    const Index b = 4, m = 2;
    Matrix x = random_matrix(b, 1, rng);
    Matrix z = random_matrix(b, 1, rng);
    Matrix noise = random_matrix(b * m, 2, rng);
    KernelSpec kx{KernelFamily::gaussian, 0.75 + rng.uniform()};

    const auto obj = gmmn_loss_and_grad(net, x, z, noise, m, kx, kz);
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto probe = [&](Index i, Index j, bool is_bias) {
        MlpParams pp = net, pm = net;
        if (is_bias) {
          pp.layers[l].b(i) += step;
          pm.layers[l].b(i) -= step;
        } else {
          pp.layers[l].w(i, j) += step;
          pm.layers[l].w(i, j) -= step;
        }
        const double fd = (gmmn_loss(pp, x, z, noise, m, kx, kz) -
                           gmmn_loss(pm, x, z, noise, m, kx, kz)) /
                          (2.0 * step);
        const double an =
            is_bias ? obj.grads.layers[l].b(i) : obj.grads.layers[l].w(i, j);
        worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
      };
      for (Index i = 0; i < net.layers[l].w.rows(); ++i)
        for (Index j = 0; j < net.layers[l].w.cols(); ++j) probe(i, j, false);
      for (Index i = 0; i < net.layers[l].b.size(); ++i) probe(i, 0, true);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("train_gmmn: determinism, epochs=0, and objective reduction") {
  Rng rng(55);
  const Index n = 500;
  Matrix z = random_matrix(n, 1, rng);
  Matrix x = z + random_matrix(n, 1, rng);  // X = Z + eps

  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 7;
  KernelSpec kx{KernelFamily::gaussian, median_heuristic(x, Norm::l2).bandwidth};
  KernelSpec kz{KernelFamily::laplacian, median_heuristic(z, Norm::l1).bandwidth};
  auto r0a = train_gmmn(x, z, cfg, kx, kz);
  auto r0b = train_gmmn(x, z, cfg, kx, kz);
  CHECK(r0a.holdout_trace.size() == 1);
  const auto& net_a = std::get<GmmnGenerator>(r0a.gen.impl).net;
  const auto& net_b = std::get<GmmnGenerator>(r0b.gen.impl).net;
  for (std::size_t l = 0; l < net_a.layers.size(); ++l) {
    CHECK(net_a.layers[l].w == net_b.layers[l].w);
    CHECK(net_a.layers[l].b == net_b.layers[l].b);
  }

  cfg.epochs = 40;
  cfg.learning_rate = 2e-3;
  auto ra = train_gmmn(x, z, cfg, kx, kz);
  auto rb = train_gmmn(x, z, cfg, kx, kz);
  const auto& net1 = std::get<GmmnGenerator>(ra.gen.impl).net;
  const auto& net2 = std::get<GmmnGenerator>(rb.gen.impl).net;
  for (std::size_t l = 0; l < net1.layers.size(); ++l)
    CHECK(net1.layers[l].w == net2.layers[l].w);

  CHECK(ra.holdout_trace.size() == 41);
  CHECK(ra.holdout_trace.back() <= ra.holdout_trace.front() / 3.0);
}

TEST_CASE("generator serialization round-trips") {
  auto g = tiny_gmmn(3, 2, 1, 77);
  std::stringstream ss;
  save_generator(ss, g);
  auto h = load_generator(ss);
  CHECK(h.latent_dim == 3);
  CHECK(h.z_dim == 2);
  CHECK(h.output_dim == 1);
  Rng rng(4);
  Matrix z = random_matrix(5, 2, rng);
  Matrix eta = random_matrix(5, 3, rng);
  CHECK(gen_sample_batch(g, z, eta) == gen_sample_batch(h, z, eta));

  auto oracle = oracle_normal_shift();
  std::get<OracleGenerator>(oracle.impl).shift = 0.25;
  std::stringstream so;
  save_generator(so, oracle);
  auto o2 = load_generator(so);
  Matrix z1(3, 1), e1(3, 2);
  z1 << 1.0, -2.0, 0.5;
  e1.setConstant(0.3);
  CHECK(gen_sample_batch(oracle, z1, e1) == gen_sample_batch(o2, z1, e1));
}
