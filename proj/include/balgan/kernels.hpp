#pragma once

// Raw float32 compute kernels. No autograd here; ops.cpp composes these into
// differentiable operations.

#include "balgan/tensor.hpp"

namespace balgan::kernels {

// C[M,N] (+)= A[M,K] * B[K,N], row-major, contiguous.
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C[M,N] (+)= A^T * B with A stored [K,M].
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C[M,N] (+)= A * B^T with B stored [N,K].
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// (extent + 2p - k) / s + 1; throws ConfigError unless a positive integer.
int conv_output_extent(int extent, int kernel, int stride, int padding);
// (extent - 1) * s - 2p + k; throws ConfigError unless positive.
int conv_transpose_output_extent(int extent, int kernel, int stride, int padding);

// Cross-correlation. x: N x C x H x W, w: O x (C/groups) x KH x KW.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const ConvGeometry& g);
// Gradient of conv2d_forward w.r.t. x, for an input of spatial size in_h x in_w.
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, const ConvGeometry& g, int in_h, int in_w);
// Gradient of conv2d_forward w.r.t. w.
Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, const ConvGeometry& g, int kh, int kw);

}  // namespace balgan::kernels
