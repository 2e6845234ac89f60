#include "mmdci/mlp.hpp"

#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>

#include "mmdci/rng.hpp"

namespace mmdci {

const char* activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

void MlpParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("MlpParams: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& ly = layers[l];
    if (ly.w.rows() != ly.b.size())
      throw std::invalid_argument("MlpParams: bias/weight shape mismatch");
    if (l > 0 && layers[l - 1].w.rows() != ly.w.cols())
      throw std::invalid_argument("MlpParams: layer dimensions do not chain");
    if (!ly.w.allFinite() || !ly.b.allFinite())
      throw std::invalid_argument("MlpParams: non-finite parameters");
  }
}

MlpParams mlp_init(const std::vector<Index>& sizes, Activation act,
                   std::uint64_t seed) {
  if (sizes.size() < 2)
    throw std::invalid_argument("mlp_init: need at least input and output size");
  for (Index s : sizes)
    if (s < 1) throw std::invalid_argument("mlp_init: sizes must be >= 1");

  Rng rng(seed);
  MlpParams p;
  p.act = act;
  p.layers.resize(sizes.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const Index fan_in = sizes[l], fan_out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Index i = 0; i < fan_out; ++i)
      for (Index j = 0; j < fan_in; ++j)
        w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    p.layers[l].w = std::move(w);
    p.layers[l].b = Vector::Zero(fan_out);
  }
  return p;
}

namespace {

inline Matrix apply_act(const Matrix& pre, Activation act) {
  if (act == Activation::relu) return pre.cwiseMax(0.0);
  return pre.array().tanh().matrix();
}

// Derivative of the activation expressed through pre/post values.
inline Matrix act_grad(const Matrix& pre, const Matrix& post, Activation act) {
  if (act == Activation::relu)
    return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - post.array().square()).matrix();
}

}  // namespace

Matrix mlp_forward(const MlpParams& params, const Matrix& batch,
                   ForwardCache* cache) {
  params.validate();
  if (batch.cols() != params.input_dim())
    throw std::invalid_argument("mlp_forward: batch width mismatch");
  const std::size_t nl = params.layers.size();
  Matrix cur = batch;
  if (cache) {
    cache->input = batch;
    cache->pre.assign(nl, Matrix());
    cache->post.assign(nl, Matrix());
  }
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& ly = params.layers[l];
    Matrix pre = cur * ly.w.transpose();
    pre.rowwise() += ly.b.transpose();
    Matrix post = (l + 1 == nl) ? pre : apply_act(pre, params.act);
    if (cache) {
      cache->pre[l] = pre;
      cache->post[l] = post;
    }
    cur = std::move(post);
  }
  return cur;
}

MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                      const Matrix& out_grad) {
  const std::size_t nl = params.layers.size();
  if (cache.pre.size() != nl || cache.post.size() != nl)
    throw std::invalid_argument("mlp_backward: cache does not match params");
  if (cache.input.cols() != params.input_dim())
    throw std::invalid_argument("mlp_backward: cache input width mismatch");
  if (out_grad.rows() != cache.input.rows() ||
      out_grad.cols() != params.output_dim())
    throw std::invalid_argument("mlp_backward: out_grad shape mismatch");
  for (std::size_t l = 0; l < nl; ++l)
    if (cache.pre[l].rows() != cache.input.rows() ||
        cache.pre[l].cols() != params.layers[l].w.rows())
      throw std::invalid_argument("mlp_backward: stale cache");

  MlpGrads g;
  g.layers.resize(nl);
  Matrix delta = out_grad;  // gradient at the current layer's pre-activation
  for (std::size_t l = nl; l-- > 0;) {
    if (l + 1 != nl)
      delta = delta.cwiseProduct(act_grad(cache.pre[l], cache.post[l], params.act));
    const Matrix& below = (l == 0) ? cache.input : cache.post[l - 1];
    g.layers[l].w.noalias() = delta.transpose() * below;
    g.layers[l].b = delta.colwise().sum().transpose();
    if (l > 0)
      delta = delta * params.layers[l].w;
    else
      g.input.noalias() = delta * params.layers[0].w;
  }
  return g;
}

OptState opt_state_like(const MlpParams& params) {
  OptState s;
  s.m.resize(params.layers.size());
  s.v.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    s.m[l].w = Matrix::Zero(params.layers[l].w.rows(), params.layers[l].w.cols());
    s.m[l].b = Vector::Zero(params.layers[l].b.size());
    s.v[l].w = s.m[l].w;
    s.v[l].b = s.m[l].b;
  }
  return s;
}

void adam_step(MlpParams& params, const MlpGrads& grads, OptState& state,
               double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (grads.layers.size() != params.layers.size() ||
      state.m.size() != params.layers.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  for (const auto& gl : grads.layers)
    if (!gl.w.allFinite() || !gl.b.allFinite())
      throw TrainingError("adam_step: non-finite gradient", state.t);

  state.t += 1;
  const double c1 = 1.0 - std::pow(kBeta1, double(state.t));
  const double c2 = 1.0 - std::pow(kBeta2, double(state.t));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
    p -= lr * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + kEps).matrix());
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].w, grads.layers[l].w, state.m[l].w, state.v[l].w);
    update(params.layers[l].b, grads.layers[l].b, state.m[l].b, state.v[l].b);
  }
}

void save_mlp(std::ostream& os, const MlpParams& params) {
  params.validate();
  os << "mmdci-mlp v1\n";
  os << "activation " << activation_name(params.act) << "\n";
  os << "sizes " << params.layers.size() + 1;
  os << " " << params.input_dim();
  for (const auto& ly : params.layers) os << " " << ly.w.rows();
  os << "\n";
  os << std::hexfloat;
  for (const auto& ly : params.layers) {
    for (Index i = 0; i < ly.w.rows(); ++i)
      for (Index j = 0; j < ly.w.cols(); ++j) os << ly.w(i, j) << "\n";
    for (Index i = 0; i < ly.b.size(); ++i) os << ly.b(i) << "\n";
  }
  os << std::defaultfloat;
}

MlpParams load_mlp(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "mmdci-mlp" || version != "v1")
    throw InputError("load_mlp: not a v1 mlp record");
  std::string key, act;
  is >> key >> act;
  if (key != "activation") throw InputError("load_mlp: missing activation");
  std::size_t count = 0;
  is >> key >> count;
  if (key != "sizes" || count < 2) throw InputError("load_mlp: bad sizes line");
  std::vector<Index> sizes(count);
  for (auto& s : sizes) {
    is >> s;
    if (!is || s < 1) throw InputError("load_mlp: bad layer size");
  }
  MlpParams p;
  p.act = parse_activation(act);
  p.layers.resize(count - 1);
  auto read_value = [&is]() {
    std::string tok;
    is >> tok;
    if (!is) throw InputError("load_mlp: truncated parameter payload");
    return std::strtod(tok.c_str(), nullptr);  // parses hexfloat exactly
  };
  for (std::size_t l = 0; l + 1 < count; ++l) {
    p.layers[l].w.resize(sizes[l + 1], sizes[l]);
    p.layers[l].b.resize(sizes[l + 1]);
    for (Index i = 0; i < sizes[l + 1]; ++i)
      for (Index j = 0; j < sizes[l]; ++j) p.layers[l].w(i, j) = read_value();
    for (Index i = 0; i < sizes[l + 1]; ++i) p.layers[l].b(i) = read_value();
  }
  p.validate();
  return p;
}

}  // namespace mmdci
