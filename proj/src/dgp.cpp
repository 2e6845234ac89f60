#include "mmdci/dgp.hpp"

#include <cmath>

namespace mmdci {

void DgpSpec::validate() const {
  switch (kind) {
    case Kind::bernoulli_mixture:
      if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("DgpSpec: p must lie in [0,1]");
      break;
    case Kind::post_nonlinear:
      if (d_z < 1) throw std::invalid_argument("DgpSpec: d_z must be >= 1");
      break;
    case Kind::weak_ci:
      break;
  }
}

std::string DgpSpec::describe() const {
  switch (kind) {
    case Kind::bernoulli_mixture:
      return "bernoulli_mixture(p=" + std::to_string(p) + ")";
    case Kind::post_nonlinear:
      return "post_nonlinear(d_z=" + std::to_string(d_z) +
             ",b=" + std::to_string(b) + ")";
    case Kind::weak_ci:
      return std::string("weak_ci(") + (alternative ? "alternative" : "null") + ")";
  }
  return "unknown";
}

namespace {

CondGenerator make_oracle(OracleKind kind, Index z_dim) {
  CondGenerator g;
  OracleGenerator o;
  o.kind = kind;
  g.impl = std::move(o);
  g.latent_dim = 2;  // fixed oracle noise interface; unused coords are padding
  g.z_dim = z_dim;
  g.output_dim = 1;
  return g;
}

}  // namespace

DgpDraw gen_bernoulli_mixture(Index n, double p, Rng& rng) {
  if (n < 2) throw std::invalid_argument("gen_bernoulli_mixture: n must be >= 2");
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("gen_bernoulli_mixture: p must lie in [0,1]");
  DgpDraw draw;
  draw.sample.x.resize(n, 1);
  draw.sample.y.resize(n, 1);
  draw.sample.z.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double e1 = rng.normal();
    const double e2 = rng.normal();
    const double e3 = rng.normal();
    const double delta = rng.uniform() < p ? 1.0 : 0.0;
    draw.sample.z(i, 0) = e3;
    draw.sample.y(i, 0) = e3 + e1;
    draw.sample.x(i, 0) = e3 + delta * e1 + (1.0 - delta) * e2;
  }
  // The mixture d*e1 + (1-d)*e2 is standard normal given Z for every p, so
  // both conditional marginals are N(z, 1) regardless of p.
  draw.oracle_x = make_oracle(OracleKind::normal_shift, 1);
  draw.oracle_y = make_oracle(OracleKind::normal_shift, 1);
  return draw;
}

DgpDraw gen_postnonlinear(Index n, Index d_z, double b, Rng& rng) {
  if (n < 2) throw std::invalid_argument("gen_postnonlinear: n must be >= 2");
  if (d_z < 1) throw std::invalid_argument("gen_postnonlinear: d_z must be >= 1");
  DgpDraw draw;
  draw.a_f.resize(d_z);
  draw.a_g.resize(d_z);
  for (Index k = 0; k < d_z; ++k) draw.a_f(k) = rng.uniform();
  for (Index k = 0; k < d_z; ++k) draw.a_g(k) = rng.uniform();
  draw.a_f /= draw.a_f.lpNorm<1>();
  draw.a_g /= draw.a_g.lpNorm<1>();

  draw.sample.x.resize(n, 1);
  draw.sample.y.resize(n, 1);
  draw.sample.z.resize(n, d_z);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < d_z; ++k) draw.sample.z(i, k) = rng.normal();
    const double ef = 0.5 * rng.normal();  // N(0, 0.25)
    const double eg = 0.5 * rng.normal();
    const double y = std::sin(draw.a_f.dot(draw.sample.z.row(i)) + ef);
    draw.sample.y(i, 0) = y;
    draw.sample.x(i, 0) =
        std::cos(draw.a_g.dot(draw.sample.z.row(i)) + b * y + eg);
  }

  draw.oracle_y = make_oracle(OracleKind::postnonlinear_y, d_z);
  std::get<OracleGenerator>(draw.oracle_y.impl).a_f = draw.a_f;
  // The X-oracle samples the marginal conditional P_{X|Z}: it consumes a
  // fresh Y'|Z draw internally rather than the realized Y.
  draw.oracle_x = make_oracle(OracleKind::postnonlinear_x, d_z);
  auto& ox = std::get<OracleGenerator>(draw.oracle_x.impl);
  ox.a_f = draw.a_f;
  ox.a_g = draw.a_g;
  ox.b = b;
  return draw;
}

DgpDraw gen_weakci(Index n, bool alternative, Rng& rng) {
  if (n < 2) throw std::invalid_argument("gen_weakci: n must be >= 2");
  DgpDraw draw;
  draw.sample.x.resize(n, 1);
  draw.sample.y.resize(n, 1);
  draw.sample.z.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double z = rng.uniform() < 0.5 ? 0.0 : 1.0;
    double x, y;
    if (!alternative) {
      x = rng.uniform() < 0.5 ? 0.0 : 1.0;
      y = rng.uniform() < 0.5 ? 0.0 : 1.0;
    } else {
      // (X,Y)|Z=0 ~ [1/6 1/3; 1/3 1/6], (X,Y)|Z=1 ~ [1/3 1/6; 1/6 1/3],
      // cells ordered (0,0),(0,1),(1,0),(1,1).
      const double u = rng.uniform();
      const double p00 = z == 0.0 ? 1.0 / 6.0 : 1.0 / 3.0;
      const double p01 = z == 0.0 ? 1.0 / 3.0 : 1.0 / 6.0;
      const double p10 = z == 0.0 ? 1.0 / 3.0 : 1.0 / 6.0;
      if (u < p00) {
        x = 0.0; y = 0.0;
      } else if (u < p00 + p01) {
        x = 0.0; y = 1.0;
      } else if (u < p00 + p01 + p10) {
        x = 1.0; y = 0.0;
      } else {
        x = 1.0; y = 1.0;
      }
    }
    draw.sample.z(i, 0) = z;
    draw.sample.x(i, 0) = x;
    draw.sample.y(i, 0) = y;
  }
  // Every conditional marginal of both regimes is Bernoulli(1/2).
  draw.oracle_x = make_oracle(OracleKind::bernoulli_half, 1);
  draw.oracle_y = make_oracle(OracleKind::bernoulli_half, 1);
  return draw;
}

DgpDraw gen_dgp(const DgpSpec& spec, Index n, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case DgpSpec::Kind::bernoulli_mixture:
      return gen_bernoulli_mixture(n, spec.p, rng);
    case DgpSpec::Kind::post_nonlinear:
      return gen_postnonlinear(n, spec.d_z, spec.b, rng);
    case DgpSpec::Kind::weak_ci:
      return gen_weakci(n, spec.alternative, rng);
  }
  throw std::invalid_argument("gen_dgp: unknown kind");
}

CondGenerator corrupt_oracle(const CondGenerator& gen, double shift) {
  const auto* o = std::get_if<OracleGenerator>(&gen.impl);
  if (o == nullptr)
    throw std::invalid_argument("corrupt_oracle: generator is not an oracle");
  CondGenerator out = gen;
  auto& oc = std::get<OracleGenerator>(out.impl);
  if (o->kind == OracleKind::bernoulli_half) {
    if (shift < 0.0 || shift > 1.0)
      throw std::invalid_argument(
          "corrupt_oracle: flip probability outside [0,1] for a binary oracle");
    oc.flip_prob = shift;
  } else {
    oc.shift += shift;
  }
  return out;
}

FiniteJointLaw weakci_law(bool alternative) {
  FiniteJointLaw law;
  law.xs.resize(2, 1);
  law.xs << 0.0, 1.0;
  law.ys = law.xs;
  law.zs = law.xs;
  law.p.assign(8, 0.0);
  auto set = [&law](Index ix, Index iy, Index iz, double v) {
    law.p[static_cast<std::size_t>((ix * 2 + iy) * 2 + iz)] = v;
  };
  if (!alternative) {
    for (Index ix = 0; ix < 2; ++ix)
      for (Index iy = 0; iy < 2; ++iy)
        for (Index iz = 0; iz < 2; ++iz) set(ix, iy, iz, 0.125);
  } else {
    // P(Z=z) = 1/2 times the conditional cell probabilities.
    set(0, 0, 0, 0.5 / 6.0);
    set(0, 1, 0, 0.5 / 3.0);
    set(1, 0, 0, 0.5 / 3.0);
    set(1, 1, 0, 0.5 / 6.0);
    set(0, 0, 1, 0.5 / 3.0);
    set(0, 1, 1, 0.5 / 6.0);
    set(1, 0, 1, 0.5 / 6.0);
    set(1, 1, 1, 0.5 / 3.0);
  }
  law.validate();
  return law;
}

}  // namespace mmdci
