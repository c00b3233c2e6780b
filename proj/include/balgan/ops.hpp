#pragma once

// Differentiable tensor operations. Unless noted otherwise, each op's backward
// is expressed with these same ops, so gradients can be differentiated again.

#include "balgan/autograd.hpp"
#include "balgan/kernels.hpp"

namespace balgan {

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);
Var add_scalar(const Var& a, float offset);
Var square(const Var& a);

// Reductions (accumulated in double).
Var sum(const Var& a);
Var mean(const Var& a);
// Scalar -> tensor of `shape` filled with the scalar.
Var expand(const Var& scalar, const Shape& shape);
// N x ... -> N.
Var sum_per_sample(const Var& a);
// N -> `shape` (leading extent N), repeating each sample's value.
Var broadcast_per_sample(const Var& a, const Shape& shape);
// Sum over every axis except axis 1 -> C.
Var channel_sum(const Var& a);
// C -> `shape`, repeating along every axis except axis 1.
Var broadcast_channel(const Var& a, const Shape& shape);

Var reshape(const Var& a, Shape shape);
// Row range [begin, end) of the leading axis.
Var slice_rows(const Var& a, int begin, int end);

// x: N x C x ... ; bias: C.
Var add_bias(const Var& x, const Var& bias);
// op(a) * op(b) for 2-d operands.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
// x: N x F, weight: F x K, bias: K.
Var dense(const Var& x, const Var& weight, const Var& bias);

// Cross-correlation, NCHW input, OIHW kernel (I = C / groups).
Var conv2d(const Var& x, const Var& kernel, int stride, int padding, int groups = 1);
// Kernel layout [in_channels, out_channels, k, k]; output extent (H-1)s - 2p + k.
Var conv2d_transpose(const Var& x, const Var& kernel, int stride, int padding);
// Adjoint of conv2d w.r.t. its input for an explicit input extent.
Var conv2d_input_grad(const Var& grad_out, const Var& kernel, const kernels::ConvGeometry& g, int in_h, int in_w);
// Adjoint of conv2d w.r.t. its kernel.
Var conv2d_weight_grad(const Var& x, const Var& grad_out, const kernels::ConvGeometry& g, int kh, int kw);

enum class ActivationKind { relu, leaky_relu, sigmoid, tanh };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  float alpha = 0.2f;  // leaky_relu slope

  static Activation relu() { return {ActivationKind::relu, 0.0f}; }
  static Activation leaky(float alpha = 0.2f) { return {ActivationKind::leaky_relu, alpha}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.0f}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0f}; }
};

// Rejects non-finite input with NumericError.
Var activation(const Var& x, Activation kind);
inline Var relu(const Var& x) { return activation(x, Activation::relu()); }
inline Var leaky_relu(const Var& x, float alpha = 0.2f) { return activation(x, Activation::leaky(alpha)); }
inline Var sigmoid(const Var& x) { return activation(x, Activation::sigmoid()); }
inline Var tanh(const Var& x) { return activation(x, Activation::tanh()); }

struct BatchNormOptions {
  bool training = true;
  float momentum = 0.9f;  // running = momentum * running + (1 - momentum) * batch
  float eps = 1e-5f;
};

// Per-channel normalization over every axis except axis 1 (rank 2 or 4).
// Training mode uses batch statistics and updates the running buffers when
// given; inference mode uses the running buffers. First-order only.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor* running_mean, Tensor* running_var,
               const BatchNormOptions& options);

// 2x2 average pooling with stride 2 (floor on odd extents) and its adjoint.
Var avg_pool2(const Var& x);
Var avg_unpool2(const Var& g, int in_h, int in_w);

// Elementwise natural log; first-order only.
Var log(const Var& x);
// Gradient passes where lo <= x <= hi.
Var clamp(const Var& x, float lo, float hi);
// Per-sample Euclidean norm, N x ... -> N. First-order only; gradient is 0
// where the norm is 0.
Var l2norm_per_sample(const Var& x);
// mean over samples of the binary cross entropy of sigmoid(logits) against
// targets in {0,1}; numerically stable. First-order only.
Var bce_with_logits(const Var& logits, const Tensor& targets);

// Per-sample Euclidean norm of d(sum of critic_output)/d(input_batch), with
// the gradient graph recorded so the norms can be differentiated again. The
// critic must score samples independently (no batch statistics). Throws
// ContractError when input_batch does not take part in differentiation.
Var grad_norm_wrt_input(const Var& critic_output, const Var& input_batch);

}  // namespace balgan
