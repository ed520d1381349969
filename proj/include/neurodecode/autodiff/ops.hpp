#pragma once

// Differentiable operations. Every op records its output on the tape of its
// first input and supplies exact gradients for all inputs that require them.
//
// Layout conventions:
//   conv/pool/batch-norm inputs are [batch, features, height, time]
//   sequence inputs are [batch, steps, width]
//   graph inputs are [batch, nodes, features]

#include "neurodecode/autodiff/tape.hpp"
#include "neurodecode/random.hpp"

#include <optional>
#include <span>

namespace neurodecode::ad {

enum class Padding { valid, same };

// y = x W + b over the last axis of x. W: [in, out], b: [out].
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b = std::nullopt);

// 1-D convolution (cross-correlation) along the last axis.
// x: [B, Cin, H, T], k: [Cout, Cin/groups, K], bias: [Cout].
// `same` pads (K-1)/2 on the left and the remainder on the right.
template <typename T>
Var<T> conv_temporal(const Var<T>& x, const Var<T>& k, const std::optional<Var<T>>& bias, std::size_t groups,
                     Padding padding);

// Convolution whose kernel spans the whole height axis (all electrodes).
// x: [B, Cin, H, T], k: [Cout, Cin/groups, H], bias: [Cout] -> [B, Cout, 1, T].
template <typename T>
Var<T> conv_spatial(const Var<T>& x, const Var<T>& k, const std::optional<Var<T>>& bias, std::size_t groups);

// conv_spatial with groups = Cin and Cout = Cin * depth multiplier.
template <typename T>
Var<T> conv_spatial_depthwise(const Var<T>& x, const Var<T>& k);

// Depthwise temporal conv (kd: [C, 1, K]) followed by pointwise mixing (kp: [Cout, C, 1]).
template <typename T>
Var<T> separable_conv(const Var<T>& x, const Var<T>& kd, const Var<T>& kp, Padding padding);

// Per-feature (axis 1) normalization. Training mode uses biased batch
// statistics and updates the running estimates (unbiased variance); eval mode
// uses the running estimates.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                  bool training, double momentum = 0.1, double eps = 1e-5);

template <typename T>
Var<T> elu(const Var<T>& x);

template <typename T>
Var<T> relu(const Var<T>& x);

// Along the last axis.
template <typename T>
Var<T> softmax(const Var<T>& x);

// Non-overlapping average pooling of the last axis, floor(T / k) outputs.
template <typename T>
Var<T> avg_pool_time(const Var<T>& x, std::size_t k);

// Inverted dropout: kept entries are scaled by 1/(1-rate) in training mode;
// identity otherwise.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool training, Rng* rng);

// Single LSTM layer, gates ordered (input, forget, cell, output), zero initial
// state. x: [B, S, D], wih: [D, 4H], whh: [H, 4H], b: [4H] -> [B, S, H].
template <typename T>
Var<T> lstm_layer(const Var<T>& x, const Var<T>& wih, const Var<T>& whh, const Var<T>& b);

template <typename T>
struct AttentionWeights {
  Var<T> wq, bq, wk, bk, wv, bv, wo, bo;  // [d, d] and [d]
};

// Scaled dot-product self-attention with `heads` heads. x: [B, S, d].
template <typename T>
Var<T> multi_head_attention(const Var<T>& x, const AttentionWeights<T>& w, std::size_t heads);

// Attention core on already-projected q, k, v ([B, S, d] each).
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads);

// Normalizes the last axis.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);

// Fixed sin/cos position table [steps, d].
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t steps, std::size_t d);

struct GraphConvOptions {
  // Pinned spectral radius; when empty it is estimated on every call.
  std::optional<double> lambda_max;
  double degree_eps = 1e-6;
  int power_steps = 20;
};

template <typename T>
struct ScaledLaplacian {
  Tensor<T> rectified;  // relu((A + A^T)/2) with zero diagonal
  Tensor<T> inv_sqrt_degree;
  Tensor<T> laplacian;  // I - D^-1/2 Â D^-1/2
  Tensor<T> scaled;     // 2 L / lambda_max - I
  double lambda_max = 0.0;
};

// Builds the rescaled normalized Laplacian of a learnable adjacency [N, N].
template <typename T>
ScaledLaplacian<T> scaled_laplacian(const Tensor<T>& adjacency, const GraphConvOptions& opts);

// Largest eigenvalue estimate of a symmetric [N, N] matrix from `steps` power
// iterations, taking the best Rayleigh quotient over the span of the iterates.
template <typename T>
double power_iteration(const Tensor<T>& sym, int steps);

// Chebyshev spectral graph convolution sum_k T_k(L~) X Theta_k.
// x: [B, N, F], adjacency: [N, N], theta: [K, F, H] -> [B, N, H].
// lambda_max is treated as a constant by the backward pass.
template <typename T>
Var<T> chebyshev_graph_conv(const Var<T>& x, const Var<T>& adjacency, const Var<T>& theta,
                            const GraphConvOptions& opts = {}, double* lambda_used = nullptr);

// Mean softmax cross-entropy. logits: [B, C].
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels);

// x + y where y's shape equals a suffix of x's shape (broadcast over leading axes).
template <typename T>
Var<T> add(const Var<T>& x, const Var<T>& y);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

// [B, M, N] -> [B, N, M].
template <typename T>
Var<T> transpose_last2(const Var<T>& x);

// Mean over one axis (removed from the shape).
template <typename T>
Var<T> mean_axis(const Var<T>& x, std::size_t axis);

// [B, S, H] -> [B, H] at step `step`.
template <typename T>
Var<T> select_step(const Var<T>& x, std::size_t step);

// sum(x * weights) as a scalar; weights is a constant of x's shape.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

}  // namespace neurodecode::ad
