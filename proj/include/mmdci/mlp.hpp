#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mmdci/types.hpp"

namespace mmdci {

enum class Activation { relu, tanh };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// One affine layer; w is out x in, applied to row-major batches as b w^T + 1 b^T.
struct MlpLayer {
  Matrix w;
  Vector b;
};

/// Feedforward net: affine layers with the activation after every layer
/// except the last (last layer linear).
struct MlpParams {
  std::vector<MlpLayer> layers;
  Activation act = Activation::tanh;

  Index input_dim() const { return layers.front().w.cols(); }
  Index output_dim() const { return layers.back().w.rows(); }
  void validate() const;
};

/// Pre-activations and activations kept by forward() for the backward pass.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre[l]: batch x out_l, before activation
  std::vector<Matrix> post;  // post[l]: after activation (last = output)
};

struct MlpGrads {
  std::vector<MlpLayer> layers;  // same shapes as the parameters
  Matrix input;                  // gradient w.r.t. the batch input
};

/// Adam accumulators, shaped like the parameters.
struct OptState {
  std::vector<MlpLayer> m;
  std::vector<MlpLayer> v;
  long t = 0;
};

/// Glorot-uniform weights (U on +-sqrt(6/(fan_in+fan_out))), zero biases.
MlpParams mlp_init(const std::vector<Index>& sizes, Activation act,
                   std::uint64_t seed);

/// Row-major batch forward pass; fills *cache when given.
Matrix mlp_forward(const MlpParams& params, const Matrix& batch,
                   ForwardCache* cache = nullptr);

/// Reverse-mode gradients of <output, out_grad> w.r.t. parameters and input.
MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                      const Matrix& out_grad);

OptState opt_state_like(const MlpParams& params);

/// Adam update in place: decay 0.9/0.999, eps 1e-8, bias-corrected by step.
void adam_step(MlpParams& params, const MlpGrads& grads, OptState& state,
               double lr);

// Flat text record (versioned, hexfloat payload); round-trips bitwise.
void save_mlp(std::ostream& os, const MlpParams& params);
MlpParams load_mlp(std::istream& is);

}  // namespace mmdci
