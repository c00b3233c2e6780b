#include "balgan/ops.hpp"

#include <cmath>
#include <string>

#include "balgan/errors.hpp"

namespace balgan {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
}

template <class F>
Tensor map_values(const Tensor& t, F f) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = f(t[i]);
  return out;
}

template <class F>
Tensor zip_values(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

std::size_t per_sample(const Shape& s) {
  if (s.empty()) throw ShapeError("per-sample op on a scalar");
  return s[0] == 0 ? 0 : numel(s) / static_cast<std::size_t>(s[0]);
}

// Inner size (product of axes after axis 1) for channel ops.
std::size_t channel_inner(const Shape& s) {
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= static_cast<std::size_t>(s[i]);
  return inner;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_result(zip_values(a.value(), b.value(), [](float x, float y) { return x + y; }), "add", {a, b},
                     [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_result(zip_values(a.value(), b.value(), [](float x, float y) { return x - y; }), "sub", {a, b},
                     [](const Var& g, const std::vector<bool>& needs) {
                       return std::vector<Var>{g, needs[1] ? scale(g, -1.0f) : Var{}};
                     });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_result(zip_values(a.value(), b.value(), [](float x, float y) { return x * y; }), "mul", {a, b},
                     [a, b](const Var& g, const std::vector<bool>& needs) {
                       return std::vector<Var>{needs[0] ? mul(g, b) : Var{}, needs[1] ? mul(g, a) : Var{}};
                     });
}

Var scale(const Var& a, float factor) {
  return make_result(map_values(a.value(), [factor](float x) { return x * factor; }), "scale", {a},
                     [factor](const Var& g, const std::vector<bool>&) { return std::vector<Var>{scale(g, factor)}; });
}

Var add_scalar(const Var& a, float offset) {
  return make_result(map_values(a.value(), [offset](float x) { return x + offset; }), "add_scalar", {a},
                     [](const Var& g, const std::vector<bool>&) { return std::vector<Var>{g}; });
}

Var square(const Var& a) { return mul(a, a); }

Var sum(const Var& a) {
  double acc = 0.0;
  for (float v : a.value().data()) acc += v;
  const Shape shape = a.shape();
  return make_result(Tensor::scalar(static_cast<float>(acc)), "sum", {a},
                     [shape](const Var& g, const std::vector<bool>&) { return std::vector<Var>{expand(g, shape)}; });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0f / static_cast<float>(n));
}

Var expand(const Var& scalar, const Shape& shape) {
  if (scalar.value().size() != 1) throw ShapeError("expand: source is not a scalar");
  return make_result(Tensor(shape, scalar.value()[0]), "expand", {scalar},
                     [src = scalar.shape()](const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{reshape(sum(g), src)};
                     });
}

Var sum_per_sample(const Var& a) {
  const Tensor& v = a.value();
  const std::size_t inner = per_sample(v.shape());
  const int n = v.dim(0);
  Tensor out(Shape{n});
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < inner; ++j) acc += v[static_cast<std::size_t>(i) * inner + j];
    out[static_cast<std::size_t>(i)] = static_cast<float>(acc);
  }
  return make_result(std::move(out), "sum_per_sample", {a},
                     [shape = v.shape()](const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{broadcast_per_sample(g, shape)};
                     });
}

Var broadcast_per_sample(const Var& a, const Shape& shape) {
  if (a.value().rank() != 1 || shape.empty() || shape[0] != a.value().dim(0)) {
    throw ShapeError("broadcast_per_sample: " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  const std::size_t inner = per_sample(shape);
  Tensor out(shape);
  for (int i = 0; i < shape[0]; ++i) {
    const float v = a.value()[static_cast<std::size_t>(i)];
    std::fill_n(out.ptr() + static_cast<std::size_t>(i) * inner, inner, v);
  }
  return make_result(std::move(out), "broadcast_per_sample", {a}, [](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{sum_per_sample(g)};
  });
}

Var channel_sum(const Var& a) {
  const Tensor& v = a.value();
  if (v.rank() < 2) throw ShapeError("channel_sum needs rank >= 2, got " + shape_to_string(v.shape()));
  const int n = v.dim(0), c = v.dim(1);
  const std::size_t inner = channel_inner(v.shape());
  std::vector<double> acc(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float* p = v.ptr() + (static_cast<std::size_t>(i) * c + ch) * inner;
      double s = 0.0;
      for (std::size_t j = 0; j < inner; ++j) s += p[j];
      acc[static_cast<std::size_t>(ch)] += s;
    }
  }
  Tensor out(Shape{c});
  for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(ch)] = static_cast<float>(acc[static_cast<std::size_t>(ch)]);
  return make_result(std::move(out), "channel_sum", {a}, [shape = v.shape()](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{broadcast_channel(g, shape)};
  });
}

Var broadcast_channel(const Var& a, const Shape& shape) {
  if (a.value().rank() != 1 || shape.size() < 2 || shape[1] != a.value().dim(0)) {
    throw ShapeError("broadcast_channel: " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  const int n = shape[0], c = shape[1];
  const std::size_t inner = channel_inner(shape);
  Tensor out(shape);
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      std::fill_n(out.ptr() + (static_cast<std::size_t>(i) * c + ch) * inner, inner,
                  a.value()[static_cast<std::size_t>(ch)]);
    }
  }
  return make_result(std::move(out), "broadcast_channel", {a}, [](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{channel_sum(g)};
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), "reshape", {a}, [src = a.shape()](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{reshape(g, src)};
  });
}

Var slice_rows(const Var& a, int begin, int end) {
  Tensor out = a.value().slice_rows(static_cast<std::size_t>(begin), static_cast<std::size_t>(end));
  const Shape src = a.shape();
  return make_result(std::move(out), "slice_rows", {a}, [src, begin, end](const Var& g, const std::vector<bool>&) {
    // Zero-padded embedding back into the source rows; linear in g.
    const std::size_t inner = per_sample(src);
    const Shape gs = g.shape();
    return std::vector<Var>{make_result(
        [&] {
          Tensor t(src);
          std::copy(g.value().data().begin(), g.value().data().end(),
                    t.ptr() + static_cast<std::size_t>(begin) * inner);
          return t;
        }(),
        "pad_rows", {g},
        [begin, end](const Var& gg, const std::vector<bool>&) {
          return std::vector<Var>{slice_rows(gg, begin, end)};
        })};
  });
}

Var add_bias(const Var& x, const Var& bias) {
  if (bias.value().rank() != 1 || x.value().rank() < 2 || x.value().dim(1) != bias.value().dim(0)) {
    throw ShapeError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match input " +
                     shape_to_string(x.shape()));
  }
  return add(x, broadcast_channel(bias, x.shape()));
}

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2) {
    throw ShapeError("matmul: expected 2-d operands, got " + shape_to_string(av.shape()) + " and " +
                     shape_to_string(bv.shape()));
  }
  const int m = transpose_a ? av.dim(1) : av.dim(0);
  const int k = transpose_a ? av.dim(0) : av.dim(1);
  const int kb = transpose_b ? bv.dim(1) : bv.dim(0);
  const int n = transpose_b ? bv.dim(0) : bv.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner extents disagree (" + shape_to_string(av.shape()) + " x " +
                     shape_to_string(bv.shape()) + ")");
  }
  Tensor out(Shape{m, n});
  if (!transpose_a && !transpose_b) {
    kernels::gemm_nn(m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
  } else if (transpose_a && !transpose_b) {
    kernels::gemm_tn(m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
  } else if (!transpose_a && transpose_b) {
    kernels::gemm_nt(m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
  } else {
    Tensor at(Shape{m, k});
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < m; ++j) at[static_cast<std::size_t>(j) * k + i] = av[static_cast<std::size_t>(i) * m + j];
    }
    kernels::gemm_nt(m, n, k, at.ptr(), bv.ptr(), out.ptr(), false);
  }
  return make_result(std::move(out), "matmul", {a, b},
                     [a, b, transpose_a, transpose_b](const Var& g, const std::vector<bool>& needs) {
                       Var ga, gb;
                       if (needs[0]) {
                         ga = transpose_a ? matmul(b, g, transpose_b, true) : matmul(g, b, false, !transpose_b);
                       }
                       if (needs[1]) {
                         gb = transpose_b ? matmul(g, a, true, transpose_a) : matmul(a, g, !transpose_a, false);
                       }
                       return std::vector<Var>{ga, gb};
                     });
}

Var dense(const Var& x, const Var& weight, const Var& bias) {
  if (x.value().rank() != 2 || weight.value().rank() != 2 || x.value().dim(1) != weight.value().dim(0)) {
    throw ShapeError("dense: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                     shape_to_string(weight.shape()));
  }
  return add_bias(matmul(x, weight), bias);
}

Var conv2d(const Var& x, const Var& kernel, int stride, int padding, int groups) {
  const kernels::ConvGeometry geom{stride, padding, groups};
  Tensor out = kernels::conv2d_forward(x.value(), kernel.value(), geom);
  const int in_h = x.value().dim(2), in_w = x.value().dim(3);
  const int kh = kernel.value().dim(2), kw = kernel.value().dim(3);
  return make_result(std::move(out), "conv2d", {x, kernel},
                     [x, kernel, geom, in_h, in_w, kh, kw](const Var& g, const std::vector<bool>& needs) {
                       return std::vector<Var>{needs[0] ? conv2d_input_grad(g, kernel, geom, in_h, in_w) : Var{},
                                               needs[1] ? conv2d_weight_grad(x, g, geom, kh, kw) : Var{}};
                     });
}

Var conv2d_input_grad(const Var& grad_out, const Var& kernel, const kernels::ConvGeometry& geom, int in_h, int in_w) {
  Tensor out = kernels::conv2d_backward_input(grad_out.value(), kernel.value(), geom, in_h, in_w);
  const int kh = kernel.value().dim(2), kw = kernel.value().dim(3);
  return make_result(std::move(out), "conv2d_input_grad", {grad_out, kernel},
                     [grad_out, kernel, geom, kh, kw](const Var& g, const std::vector<bool>& needs) {
                       return std::vector<Var>{
                           needs[0] ? conv2d(g, kernel, geom.stride, geom.padding, geom.groups) : Var{},
                           needs[1] ? conv2d_weight_grad(g, grad_out, geom, kh, kw) : Var{}};
                     });
}

Var conv2d_weight_grad(const Var& x, const Var& grad_out, const kernels::ConvGeometry& geom, int kh, int kw) {
  Tensor out = kernels::conv2d_backward_weight(x.value(), grad_out.value(), geom, kh, kw);
  const int in_h = x.value().dim(2), in_w = x.value().dim(3);
  return make_result(std::move(out), "conv2d_weight_grad", {x, grad_out},
                     [x, grad_out, geom, in_h, in_w](const Var& g, const std::vector<bool>& needs) {
                       return std::vector<Var>{
                           needs[0] ? conv2d_input_grad(grad_out, g, geom, in_h, in_w) : Var{},
                           needs[1] ? conv2d(x, g, geom.stride, geom.padding, geom.groups) : Var{}};
                     });
}

Var conv2d_transpose(const Var& x, const Var& kernel, int stride, int padding) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  if (xv.rank() != 4 || kv.rank() != 4) {
    throw ShapeError("conv2d_transpose: expected 4-d input and kernel, got " + shape_to_string(xv.shape()) + " and " +
                     shape_to_string(kv.shape()));
  }
  if (kv.dim(0) != xv.dim(1)) {
    throw ShapeError("conv2d_transpose: input has " + std::to_string(xv.dim(1)) + " channels but kernel " +
                     shape_to_string(kv.shape()) + " expects " + std::to_string(kv.dim(0)));
  }
  const int out_h = kernels::conv_transpose_output_extent(xv.dim(2), kv.dim(2), stride, padding);
  const int out_w = kernels::conv_transpose_output_extent(xv.dim(3), kv.dim(3), stride, padding);
  return conv2d_input_grad(x, kernel, kernels::ConvGeometry{stride, padding, 1}, out_h, out_w);
}

Var activation(const Var& x, Activation act) {
  const Tensor& v = x.value();
  if (!v.all_finite()) throw NumericError("activation: non-finite input");
  switch (act.kind) {
    case ActivationKind::relu:
    case ActivationKind::leaky_relu: {
      const float slope = act.kind == ActivationKind::relu ? 0.0f : act.alpha;
      if (act.kind == ActivationKind::leaky_relu && !(slope > 0.0f && slope < 1.0f)) {
        throw ConfigError("leaky_relu slope must lie in (0,1)");
      }
      Tensor out = map_values(v, [slope](float a) { return a > 0.0f ? a : slope * a; });
      return make_result(std::move(out), act.kind == ActivationKind::relu ? "relu" : "leaky_relu", {x},
                         [x, slope](const Var& g, const std::vector<bool>&) {
                           Tensor mask = map_values(x.value(), [slope](float a) { return a > 0.0f ? 1.0f : slope; });
                           return std::vector<Var>{mul(g, Var::constant(std::move(mask)))};
                         });
    }
    case ActivationKind::sigmoid: {
      Tensor out = map_values(v, [](float a) {
        return a >= 0.0f ? 1.0f / (1.0f + std::exp(-a)) : std::exp(a) / (1.0f + std::exp(a));
      });
      Tensor y = out;
      return make_result(std::move(out), "sigmoid", {x}, [x, y](const Var& g, const std::vector<bool>&) {
        if (GradMode::enabled()) {
          const Var s = sigmoid(x);
          return std::vector<Var>{mul(g, mul(s, add_scalar(scale(s, -1.0f), 1.0f)))};
        }
        return std::vector<Var>{mul(g, Var::constant(map_values(y, [](float s) { return s * (1.0f - s); })))};
      });
    }
    case ActivationKind::tanh: {
      Tensor out = map_values(v, [](float a) { return std::tanh(a); });
      Tensor y = out;
      return make_result(std::move(out), "tanh", {x}, [x, y](const Var& g, const std::vector<bool>&) {
        if (GradMode::enabled()) {
          const Var t = tanh(x);
          return std::vector<Var>{mul(g, add_scalar(scale(square(t), -1.0f), 1.0f))};
        }
        return std::vector<Var>{mul(g, Var::constant(map_values(y, [](float t) { return 1.0f - t * t; })))};
      });
    }
  }
  throw ConfigError("unknown activation kind");
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor* running_mean, Tensor* running_var,
               const BatchNormOptions& opt) {
  const Tensor& v = x.value();
  if (v.rank() != 2 && v.rank() != 4) throw ShapeError("batch_norm expects rank 2 or 4, got " + shape_to_string(v.shape()));
  const int n = v.dim(0), c = v.dim(1);
  const std::size_t inner = channel_inner(v.shape());
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("batch_norm: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  if (!(opt.eps > 0.0f)) throw ConfigError("batch_norm eps must be positive");
  const std::size_t count = static_cast<std::size_t>(n) * inner;
  std::vector<float> mu(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));

  if (opt.training) {
    if (n < 2) throw ContractError("batch_norm: degenerate batch of size " + std::to_string(n) + " in training mode");
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0, ss = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = v.ptr() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += p[j];
      }
      const double m = s / static_cast<double>(count);
      for (int i = 0; i < n; ++i) {
        const float* p = v.ptr() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) ss += (p[j] - m) * (p[j] - m);
      }
      const double var = ss / static_cast<double>(count);
      mu[static_cast<std::size_t>(ch)] = static_cast<float>(m);
      inv_std[static_cast<std::size_t>(ch)] = static_cast<float>(1.0 / std::sqrt(var + opt.eps));
      if (running_mean && running_var) {
        const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
        float& rm = (*running_mean)[static_cast<std::size_t>(ch)];
        float& rv = (*running_var)[static_cast<std::size_t>(ch)];
        rm = static_cast<float>(opt.momentum * rm + (1.0 - opt.momentum) * m);
        rv = static_cast<float>(opt.momentum * rv + (1.0 - opt.momentum) * unbiased);
      }
    }
  } else {
    if (!running_mean || !running_var) throw ContractError("batch_norm inference needs running statistics");
    for (int ch = 0; ch < c; ++ch) {
      mu[static_cast<std::size_t>(ch)] = (*running_mean)[static_cast<std::size_t>(ch)];
      inv_std[static_cast<std::size_t>(ch)] =
          static_cast<float>(1.0 / std::sqrt(static_cast<double>((*running_var)[static_cast<std::size_t>(ch)]) + opt.eps));
    }
  }

  Tensor xhat(v.shape());
  Tensor out(v.shape());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
      const float m = mu[static_cast<std::size_t>(ch)], is = inv_std[static_cast<std::size_t>(ch)];
      const float ga = gamma.value()[static_cast<std::size_t>(ch)], be = beta.value()[static_cast<std::size_t>(ch)];
      for (std::size_t j = 0; j < inner; ++j) {
        const float h = (v[off + j] - m) * is;
        xhat[off + j] = h;
        out[off + j] = ga * h + be;
      }
    }
  }

  const bool training = opt.training;
  return make_result(
      std::move(out), "batch_norm", {x, gamma, beta},
      [xhat = std::move(xhat), inv_std, gamma, training, n, c, inner](const Var& g, const std::vector<bool>& needs) {
        const Tensor& gv = g.value();
        const std::size_t m = static_cast<std::size_t>(n) * inner;
        Tensor gx(gv.shape()), ggamma(Shape{c}), gbeta(Shape{c});
        for (int ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (int i = 0; i < n; ++i) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
              sum_g += gv[off + j];
              sum_gh += static_cast<double>(gv[off + j]) * xhat[off + j];
            }
          }
          ggamma[static_cast<std::size_t>(ch)] = static_cast<float>(sum_gh);
          gbeta[static_cast<std::size_t>(ch)] = static_cast<float>(sum_g);
          if (!needs[0]) continue;
          const double ga = gamma.value()[static_cast<std::size_t>(ch)];
          const double is = inv_std[static_cast<std::size_t>(ch)];
          for (int i = 0; i < n; ++i) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
              double d;
              if (training) {
                d = ga * is / static_cast<double>(m) *
                    (static_cast<double>(m) * gv[off + j] - sum_g - xhat[off + j] * sum_gh);
              } else {
                d = ga * is * gv[off + j];
              }
              gx[off + j] = static_cast<float>(d);
            }
          }
        }
        return std::vector<Var>{needs[0] ? Var::constant(std::move(gx)) : Var{},
                                needs[1] ? Var::constant(std::move(ggamma)) : Var{},
                                needs[2] ? Var::constant(std::move(gbeta)) : Var{}};
      },
      false);
}

Var avg_pool2(const Var& x) {
  const Tensor& v = x.value();
  if (v.rank() != 4) throw ShapeError("avg_pool2 expects NCHW, got " + shape_to_string(v.shape()));
  const int n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw ConfigError("avg_pool2: spatial extent " + shape_to_string(v.shape()) + " too small");
  Tensor out(Shape{n, c, oh, ow});
  for (int p = 0; p < n * c; ++p) {
    const float* src = v.ptr() + static_cast<std::size_t>(p) * h * w;
    float* dst = out.ptr() + static_cast<std::size_t>(p) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const float* a = src + static_cast<std::size_t>(2 * i) * w + 2 * j;
        dst[i * ow + j] = 0.25f * (a[0] + a[1] + a[w] + a[w + 1]);
      }
    }
  }
  return make_result(std::move(out), "avg_pool2", {x}, [h, w](const Var& g, const std::vector<bool>&) {
    return std::vector<Var>{avg_unpool2(g, h, w)};
  });
}

Var avg_unpool2(const Var& g, int in_h, int in_w) {
  const Tensor& v = g.value();
  if (v.rank() != 4 || v.dim(2) != in_h / 2 || v.dim(3) != in_w / 2) {
    throw ShapeError("avg_unpool2: " + shape_to_string(v.shape()) + " is not the pooled size of " +
                     std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  const int n = v.dim(0), c = v.dim(1), oh = v.dim(2), ow = v.dim(3);
  Tensor out(Shape{n, c, in_h, in_w});
  for (int p = 0; p < n * c; ++p) {
    const float* src = v.ptr() + static_cast<std::size_t>(p) * oh * ow;
    float* dst = out.ptr() + static_cast<std::size_t>(p) * in_h * in_w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const float q = 0.25f * src[i * ow + j];
        float* a = dst + static_cast<std::size_t>(2 * i) * in_w + 2 * j;
        a[0] = q;
        a[1] = q;
        a[in_w] = q;
        a[in_w + 1] = q;
      }
    }
  }
  return make_result(std::move(out), "avg_unpool2", {g}, [](const Var& gg, const std::vector<bool>&) {
    return std::vector<Var>{avg_pool2(gg)};
  });
}

Var log(const Var& x) {
  Tensor out = map_values(x.value(), [](float a) { return std::log(a); });
  return make_result(
      std::move(out), "log", {x},
      [x](const Var& g, const std::vector<bool>&) {
        return std::vector<Var>{mul(g, Var::constant(map_values(x.value(), [](float a) { return 1.0f / a; })))};
      },
      false);
}

Var clamp(const Var& x, float lo, float hi) {
  Tensor out = map_values(x.value(), [lo, hi](float a) { return std::min(std::max(a, lo), hi); });
  return make_result(std::move(out), "clamp", {x}, [x, lo, hi](const Var& g, const std::vector<bool>&) {
    Tensor mask = map_values(x.value(), [lo, hi](float a) { return (a >= lo && a <= hi) ? 1.0f : 0.0f; });
    return std::vector<Var>{mul(g, Var::constant(std::move(mask)))};
  });
}

Var l2norm_per_sample(const Var& x) {
  const Tensor& v = x.value();
  const std::size_t inner = per_sample(v.shape());
  const int n = v.dim(0);
  Tensor out(Shape{n});
  for (int i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < inner; ++j) {
      const double a = v[static_cast<std::size_t>(i) * inner + j];
      ss += a * a;
    }
    out[static_cast<std::size_t>(i)] = static_cast<float>(std::sqrt(ss));
  }
  Tensor inv = map_values(out, [](float r) { return r > 0.0f ? 1.0f / r : 0.0f; });
  return make_result(
      std::move(out), "l2norm_per_sample", {x},
      [x, inv = std::move(inv)](const Var& g, const std::vector<bool>&) {
        return std::vector<Var>{mul(broadcast_per_sample(mul(g, Var::constant(inv)), x.shape()), x)};
      },
      false);
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.size() != targets.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(z.size()) + " logits vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (z.size() == 0) throw ContractError("bce_with_logits on an empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double a = z[i], t = targets[i];
    acc += std::max(a, 0.0) - a * t + std::log1p(std::exp(-std::abs(a)));
  }
  const float n = static_cast<float>(z.size());
  return make_result(
      Tensor::scalar(static_cast<float>(acc / z.size())), "bce_with_logits", {logits},
      [logits, targets, n](const Var& g, const std::vector<bool>&) {
        const Tensor& zv = logits.value();
        const float gs = g.value()[0] / n;
        Tensor d(zv.shape());
        for (std::size_t i = 0; i < zv.size(); ++i) {
          const float a = zv[i];
          const float s = a >= 0.0f ? 1.0f / (1.0f + std::exp(-a)) : std::exp(a) / (1.0f + std::exp(a));
          d[i] = gs * (s - targets[i]);
        }
        return std::vector<Var>{Var::constant(std::move(d))};
      },
      false);
}

Var grad_norm_wrt_input(const Var& critic_output, const Var& input_batch) {
  if (!input_batch.defined() || !input_batch.requires_grad()) {
    throw ContractError("grad_norm_wrt_input: input batch is detached from differentiation");
  }
  const Tensor& out = critic_output.value();
  if (out.rank() != 1 || input_batch.value().rank() < 1 || out.dim(0) != input_batch.value().dim(0)) {
    throw ShapeError("grad_norm_wrt_input: expected one score per sample, got " + shape_to_string(out.shape()) +
                     " for inputs " + shape_to_string(input_batch.shape()));
  }
  Var g = grad(sum(critic_output), {input_batch}, true).front();
  if (!g.defined()) g = Var::constant(Tensor(input_batch.shape()));
  return l2norm_per_sample(g);
}

}  // namespace balgan
