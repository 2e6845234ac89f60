#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mmdci/mlp.hpp"
#include "mmdci/rng.hpp"

using namespace mmdci;

namespace {

Matrix random_matrix(Index n, Index d, Rng& rng, double scale = 1.0) {
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Plain re-evaluation of the net, one sample and one unit at a time.
Matrix naive_forward(const MlpParams& p, const Matrix& batch) {
  Matrix cur = batch;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& ly = p.layers[l];
    Matrix next(cur.rows(), ly.w.rows());
    for (Index r = 0; r < cur.rows(); ++r)
      for (Index o = 0; o < ly.w.rows(); ++o) {
        double acc = ly.b(o);
        for (Index i = 0; i < ly.w.cols(); ++i) acc += ly.w(o, i) * cur(r, i);
        if (l + 1 < p.layers.size())
          acc = p.act == Activation::relu ? std::max(acc, 0.0) : std::tanh(acc);
        next(r, o) = acc;
      }
    cur = next;
  }
  return cur;
}

double contraction(const MlpParams& p, const Matrix& batch, const Matrix& g) {
  return (mlp_forward(p, batch).cwiseProduct(g)).sum();
}

}  // namespace

TEST_CASE("init is deterministic, zero-biased, and bounded") {
  auto a = mlp_init({2, 3, 1}, Activation::tanh, 99);
  auto b = mlp_init({2, 3, 1}, Activation::tanh, 99);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].w == b.layers[l].w);
    CHECK(a.layers[l].b == b.layers[l].b);
    CHECK(a.layers[l].b.cwiseAbs().maxCoeff() == 0.0);
  }
  auto big = mlp_init({4, 8, 8, 2}, Activation::tanh, 5);
  const std::vector<Index> sizes{4, 8, 8, 2};
  for (std::size_t l = 0; l < big.layers.size(); ++l) {
    const double bound = std::sqrt(6.0 / double(sizes[l] + sizes[l + 1]));
    CHECK(big.layers[l].w.cwiseAbs().maxCoeff() <= bound);
  }
  CHECK_THROWS_AS(mlp_init({}, Activation::tanh, 1), std::invalid_argument);
  CHECK_THROWS_AS(mlp_init({3}, Activation::tanh, 1), std::invalid_argument);
}

TEST_CASE("forward handles degenerate nets") {
  MlpParams zero;
  zero.act = Activation::tanh;
  zero.layers.push_back({Matrix::Zero(2, 3), Vector::Zero(2)});
  Matrix batch(4, 3);
  batch.setRandom();
  CHECK(mlp_forward(zero, batch).cwiseAbs().maxCoeff() == 0.0);

  MlpParams ident;
  ident.act = Activation::tanh;
  ident.layers.push_back({Matrix::Identity(3, 3), Vector::Zero(3)});
  CHECK((mlp_forward(ident, batch) - batch).cwiseAbs().maxCoeff() == 0.0);

  Matrix wrong(4, 2);
  wrong.setZero();
  CHECK_THROWS_AS(mlp_forward(ident, wrong), std::invalid_argument);
}

TEST_CASE("forward matches a naive per-unit evaluator") {
  Rng rng(17);
  for (auto act : {Activation::tanh, Activation::relu}) {
    auto p = mlp_init({3, 5, 4, 2}, act, rng.next_u64());
    Matrix batch = random_matrix(6, 3, rng);
    CHECK((mlp_forward(p, batch) - naive_forward(p, batch)).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("backward: trivial cases") {
  auto p = mlp_init({2, 3, 2}, Activation::tanh, 1);
  Matrix batch(3, 2);
  batch.setRandom();
  ForwardCache cache;
  mlp_forward(p, batch, &cache);
  auto g = mlp_backward(p, cache, Matrix::Zero(3, 2));
  for (const auto& gl : g.layers) {
    CHECK(gl.w.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gl.b.cwiseAbs().maxCoeff() == 0.0);
  }

  // single linear layer: weight gradient is g^T batch
  MlpParams lin;
  lin.act = Activation::tanh;
  lin.layers.push_back({Matrix::Random(2, 3), Vector::Zero(2)});
  Matrix b2(4, 3);
  b2.setRandom();
  ForwardCache c2;
  mlp_forward(lin, b2, &c2);
  Matrix og(4, 2);
  og.setRandom();
  auto g2 = mlp_backward(lin, c2, og);
  CHECK((g2.layers[0].w - og.transpose() * b2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward rejects a stale cache") {
  auto p = mlp_init({2, 3, 2}, Activation::tanh, 1);
  auto q = mlp_init({2, 4, 2}, Activation::tanh, 1);
  Matrix batch(3, 2);
  batch.setRandom();
  ForwardCache cache;
  mlp_forward(p, batch, &cache);
  CHECK_THROWS_AS(mlp_backward(q, cache, Matrix::Zero(3, 2)),
                  std::invalid_argument);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(23);
  const double step = 1e-5;
  for (int trial = 0; trial < 6; ++trial) {
    const auto act = trial % 2 == 0 ? Activation::tanh : Activation::relu;
    auto p = mlp_init({4, 7, 6, 3}, act, rng.next_u64());
    Matrix batch = random_matrix(9, 4, rng);
    Matrix og = random_matrix(9, 3, rng);
    ForwardCache cache;
    mlp_forward(p, batch, &cache);
    const auto grads = mlp_backward(p, cache, og);

    double worst = 0.0;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto check_entry = [&](Index i, Index j, bool is_bias) {
        MlpParams pp = p;
        MlpParams pm = p;
        if (is_bias) {
          pp.layers[l].b(i) += step;
          pm.layers[l].b(i) -= step;
        } else {
          pp.layers[l].w(i, j) += step;
          pm.layers[l].w(i, j) -= step;
        }
        const double fd =
            (contraction(pp, batch, og) - contraction(pm, batch, og)) /
            (2.0 * step);
        const double an = is_bias ? grads.layers[l].b(i) : grads.layers[l].w(i, j);
        const double rel = std::abs(fd - an) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
      };
      for (Index i = 0; i < p.layers[l].w.rows(); ++i)
        for (Index j = 0; j < p.layers[l].w.cols(); ++j) check_entry(i, j, false);
      for (Index i = 0; i < p.layers[l].b.size(); ++i) check_entry(i, 0, true);
    }
    CHECK(worst < 1e-4);

    // input gradient against finite differences, a few entries
    for (int probe = 0; probe < 5; ++probe) {
      const Index r = Index(rng.uniform() * double(batch.rows()));
      const Index c = Index(rng.uniform() * double(batch.cols()));
      Matrix bp = batch, bm = batch;
      bp(r, c) += step;
      bm(r, c) -= step;
      const double fd =
          (contraction(p, bp, og) - contraction(p, bm, og)) / (2.0 * step);
      CHECK(std::abs(fd - grads.input(r, c)) / std::max(1.0, std::abs(fd)) < 1e-4);
    }
  }
}

TEST_CASE("tanh hidden activations stay in [-1,1]") {
  Rng rng(31);
  auto p = mlp_init({3, 8, 8, 2}, Activation::tanh, 2);
  Matrix batch = random_matrix(20, 3, rng, 5.0);
  ForwardCache cache;
  mlp_forward(p, batch, &cache);
  for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
    CHECK(cache.post[l].maxCoeff() <= 1.0);
    CHECK(cache.post[l].minCoeff() >= -1.0);
  }
}

TEST_CASE("adam_step: zero gradient leaves parameters unchanged") {
  auto p = mlp_init({2, 3, 1}, Activation::tanh, 4);
  auto p0 = p;
  auto st = opt_state_like(p);
  MlpGrads g;
  g.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    g.layers[l].w = Matrix::Zero(p.layers[l].w.rows(), p.layers[l].w.cols());
    g.layers[l].b = Vector::Zero(p.layers[l].b.size());
  }
  adam_step(p, g, st, 0.01);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK(p.layers[l].w == p0.layers[l].w);
    CHECK(p.layers[l].b == p0.layers[l].b);
  }
  CHECK(st.t == 1);
}

TEST_CASE("adam_step: first bias-corrected step moves by about lr") {
  MlpParams p;
  p.act = Activation::tanh;
  p.layers.push_back({Matrix::Constant(1, 1, 2.0), Vector::Zero(1)});
  auto st = opt_state_like(p);
  MlpGrads g;
  g.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1)});
  adam_step(p, g, st, 0.01);
  // m_hat = 1, v_hat = 1 -> update = lr / (1 + eps)
  CHECK(p.layers[0].w(0, 0) == doctest::Approx(2.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("adam_step rejects non-finite gradients") {
  auto p = mlp_init({2, 2}, Activation::tanh, 4);
  auto st = opt_state_like(p);
  MlpGrads g;
  g.layers.push_back({Matrix::Constant(2, 2, std::nan("")), Vector::Zero(2)});
  CHECK_THROWS_AS(adam_step(p, g, st, 0.01), TrainingError);
}

TEST_CASE("adam trajectories are bitwise reproducible") {
  auto run = [] {
    auto p = mlp_init({2, 4, 1}, Activation::tanh, 12);
    auto st = opt_state_like(p);
    Rng rng(77);
    for (int step = 0; step < 25; ++step) {
      Matrix batch = random_matrix(6, 2, rng);
      ForwardCache cache;
      Matrix out = mlp_forward(p, batch, &cache);
      auto g = mlp_backward(p, cache, out);  // gradient of 0.5 sum out^2
      adam_step(p, g, st, 1e-2);
    }
    return p;
  };
  auto a = run();
  auto b = run();
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].w == b.layers[l].w);
    CHECK(a.layers[l].b == b.layers[l].b);
  }
}

TEST_CASE("mlp serialization round-trips bitwise") {
  auto p = mlp_init({3, 5, 2}, Activation::relu, 123);
  std::stringstream ss;
  save_mlp(ss, p);
  auto q = load_mlp(ss);
  CHECK(q.act == p.act);
  REQUIRE(q.layers.size() == p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK(q.layers[l].w == p.layers[l].w);
    CHECK(q.layers[l].b == p.layers[l].b);
  }
  std::stringstream bad("not-a-record v9");
  CHECK_THROWS_AS(load_mlp(bad), InputError);
}
