#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mmdci/dgp.hpp"

using namespace mmdci;

namespace {

// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("bernoulli_mixture: p=1 ties X to Y, any p keeps X|Z standard normal") {
  Rng rng(3);
  auto d1 = gen_bernoulli_mixture(200, 1.0, rng);
  // p=1: X - Z = Y - Z rowwise
  CHECK((d1.sample.x - d1.sample.z - (d1.sample.y - d1.sample.z))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const Index n = 10000;
  Rng r0(11), r1(12);
  auto a = gen_bernoulli_mixture(n, 0.0, r0);
  auto b = gen_bernoulli_mixture(n, 1.0, r1);
  std::vector<double> res_a, res_b;
  for (Index i = 0; i < n; ++i) {
    res_a.push_back(a.sample.x(i, 0) - a.sample.z(i, 0));
    res_b.push_back(b.sample.x(i, 0) - b.sample.z(i, 0));
  }
  CHECK(ks_distance(res_a, res_b) < 0.03);

  // oracle is the conditional mean at zero noise
  Vector z(1), eta(2);
  z << 2.0;
  eta.setZero();
  CHECK(gen_sample(a.oracle_x, z, eta)(0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(gen_bernoulli_mixture(200, 1.5, rng), std::invalid_argument);
}

TEST_CASE("post_nonlinear: normalized coefficients and bounded outputs") {
  Rng rng(21);
  auto d = gen_postnonlinear(500, 7, 0.8, rng);
  CHECK(d.a_f.lpNorm<1>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.a_g.lpNorm<1>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.a_f.minCoeff() >= 0.0);
  CHECK(d.sample.y.maxCoeff() <= 1.0);
  CHECK(d.sample.y.minCoeff() >= -1.0);
  CHECK(d.sample.x.maxCoeff() <= 1.0);
  CHECK(d.sample.x.minCoeff() >= -1.0);

  // oracle_y at zero noise equals sin(a_f'z)
  Vector z = Vector::Ones(7), eta = Vector::Zero(2);
  CHECK(gen_sample(d.oracle_y, z, eta)(0) ==
        doctest::Approx(std::sin(d.a_f.sum())).epsilon(1e-12));
}

TEST_CASE("post_nonlinear oracle X draws the marginal conditional law") {
  // At b=0 the X oracle must not depend on the inner Y' coordinate.
  Rng rng(31);
  auto d = gen_postnonlinear(10, 3, 0.0, rng);
  Vector z(3), e1(2), e2(2);
  z << 0.2, -0.4, 1.0;
  e1 << 0.5, -2.0;
  e2 << 0.5, 3.0;
  CHECK(gen_sample(d.oracle_x, z, e1)(0) ==
        doctest::Approx(gen_sample(d.oracle_x, z, e2)(0)).epsilon(1e-14));

  // With b != 0 the second coordinate matters.
  auto d2 = gen_postnonlinear(10, 3, 1.0, rng);
  CHECK(gen_sample(d2.oracle_x, z, e1)(0) != gen_sample(d2.oracle_x, z, e2)(0));
}

TEST_CASE("weak_ci: table frequencies and marginal/conditional covariance") {
  const Index n = 100000;
  Rng rng(41);
  auto alt = gen_weakci(n, true, rng);
  Index n00z0 = 0, nz0 = 0;
  double sum_xy = 0.0, sum_x = 0.0, sum_y = 0.0;
  double z0_sum_xy = 0.0, z0_sum_x = 0.0, z0_sum_y = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double x = alt.sample.x(i, 0), y = alt.sample.y(i, 0),
                 z = alt.sample.z(i, 0);
    sum_xy += x * y;
    sum_x += x;
    sum_y += y;
    if (z == 0.0) {
      ++nz0;
      if (x == 0.0 && y == 0.0) ++n00z0;
      z0_sum_xy += x * y;
      z0_sum_x += x;
      z0_sum_y += y;
    }
  }
  CHECK(std::abs(double(n00z0) / double(nz0) - 1.0 / 6.0) < 0.005);
  // marginally independent: cov(X,Y) ~ 0
  const double cov = sum_xy / n - (sum_x / n) * (sum_y / n);
  CHECK(std::abs(cov) < 0.01);
  // conditionally dependent: cov(X,Y | Z=0) ~ 1/6 - 1/4 = -1/12
  const double cov_z0 = z0_sum_xy / nz0 - (z0_sum_x / nz0) * (z0_sum_y / nz0);
  CHECK(cov_z0 == doctest::Approx(-1.0 / 12.0).epsilon(0.12));

  Rng rng2(42);
  auto null = gen_weakci(10000, false, rng2);
  double sxy = 0.0, sx = 0.0, sy = 0.0;
  for (Index i = 0; i < 10000; ++i) {
    sxy += null.sample.x(i, 0) * null.sample.y(i, 0);
    sx += null.sample.x(i, 0);
    sy += null.sample.y(i, 0);
  }
  const double corr_null = (sxy / 10000 - (sx / 10000) * (sy / 10000)) / 0.25;
  CHECK(std::abs(corr_null) < 0.02);
}

TEST_CASE("weak_ci oracles emit Bernoulli(1/2) via noise thresholding") {
  Rng rng(51);
  auto d = gen_weakci(10, true, rng);
  Vector z(1), eta(2);
  z << 1.0;
  eta << 0.5, 0.0;
  CHECK(gen_sample(d.oracle_x, z, eta)(0) == 1.0);
  eta << -0.5, 0.0;
  CHECK(gen_sample(d.oracle_x, z, eta)(0) == 0.0);

  Index ones = 0;
  const Index m = 20000;
  Rng noise(52);
  for (Index i = 0; i < m; ++i) {
    Vector e(2);
    e << noise.normal(), noise.normal();
    ones += gen_sample(d.oracle_y, z, e)(0) == 1.0 ? 1 : 0;
  }
  CHECK(std::abs(double(ones) / double(m) - 0.5) < 0.01);
}

TEST_CASE("corrupt_oracle shifts continuous oracles and flips binary ones") {
  Rng rng(61);
  auto d = gen_bernoulli_mixture(10, 0.0, rng);
  auto same = corrupt_oracle(d.oracle_x, 0.0);
  auto shifted = corrupt_oracle(d.oracle_x, 0.5);
  Vector z(1), eta(2);
  z << 1.0;
  eta.setZero();
  CHECK(gen_sample(same, z, eta)(0) == gen_sample(d.oracle_x, z, eta)(0));
  CHECK(gen_sample(shifted, z, eta)(0) == doctest::Approx(1.5));

  Rng noise(62);
  for (int i = 0; i < 50; ++i) {
    Vector e(2);
    e << noise.normal(), noise.normal();
    CHECK(gen_sample(shifted, z, e)(0) - gen_sample(d.oracle_x, z, e)(0) ==
          doctest::Approx(0.5).epsilon(1e-15));
  }

  auto w = gen_weakci(10, false, rng);
  CHECK_THROWS_AS(corrupt_oracle(w.oracle_x, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(corrupt_oracle(w.oracle_x, -0.1), std::invalid_argument);
  auto flip_all = corrupt_oracle(w.oracle_x, 1.0);
  Rng noise2(63);
  Index flips = 0;
  for (int i = 0; i < 100; ++i) {
    Vector e(2);
    e << noise2.normal(), noise2.normal();
    if (gen_sample(flip_all, z, e)(0) != gen_sample(w.oracle_x, z, e)(0)) ++flips;
  }
  CHECK(flips == 100);

  // corrupting a gmmn generator is a usage error
  CondGenerator g;
  g.impl = GmmnGenerator{mlp_init({3, 2, 1}, Activation::tanh, 5)};
  g.latent_dim = 2;
  g.z_dim = 1;
  g.output_dim = 1;
  CHECK_THROWS_AS(corrupt_oracle(g, 0.5), std::invalid_argument);
}

TEST_CASE("gen_dgp dispatches and validates") {
  Rng rng(71);
  DgpSpec spec;
  spec.kind = DgpSpec::Kind::weak_ci;
  spec.alternative = true;
  auto d = gen_dgp(spec, 50, rng);
  CHECK(d.sample.n() == 50);
  DgpSpec bad;
  bad.kind = DgpSpec::Kind::bernoulli_mixture;
  bad.p = -0.2;
  CHECK_THROWS_AS(gen_dgp(bad, 50, rng), std::invalid_argument);
}
