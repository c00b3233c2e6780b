#include "balgan/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "balgan/errors.hpp"

namespace balgan::kernels {

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0f);
  for (int i = 0; i < m; ++i) {
    float* __restrict crow = c + static_cast<std::size_t>(i) * n;
    const float* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* __restrict brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0f);
  for (int p = 0; p < k; ++p) {
    const float* arow = a + static_cast<std::size_t>(p) * m;
    const float* __restrict brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const float av = arow[i];
      float* __restrict crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  std::vector<float> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

int conv_output_extent(int extent, int kernel, int stride, int padding) {
  if (stride < 1 || padding < 0 || kernel < 1) {
    throw ConfigError("conv geometry needs stride >= 1, padding >= 0, kernel >= 1");
  }
  const int span = extent + 2 * padding - kernel;
  if (span < 0 || span % stride != 0) {
    throw ConfigError("conv output extent (" + std::to_string(extent) + " + 2*" + std::to_string(padding) + " - " +
                      std::to_string(kernel) + ")/" + std::to_string(stride) + " + 1 is not a positive integer");
  }
  return span / stride + 1;
}

int conv_transpose_output_extent(int extent, int kernel, int stride, int padding) {
  if (stride < 1 || padding < 0 || kernel < 1) {
    throw ConfigError("transposed conv geometry needs stride >= 1, padding >= 0, kernel >= 1");
  }
  const int out = (extent - 1) * stride - 2 * padding + kernel;
  if (out <= 0) {
    throw ConfigError("transposed conv output extent " + std::to_string(out) + " is not positive");
  }
  return out;
}

namespace {

struct Layout {
  int n, c, h, w;      // input
  int o, kh, kw;       // kernel
  int oh, ow;          // output
  int cg, og;          // per-group channels
  int stride, pad, groups;
  int patch() const { return cg * kh * kw; }
  int pixels() const { return oh * ow; }
};

Layout make_layout(const Shape& xs, const Shape& ws, const ConvGeometry& g, int oh, int ow) {
  Layout l{};
  l.n = xs[0];
  l.c = xs[1];
  l.h = xs[2];
  l.w = xs[3];
  l.o = ws[0];
  l.kh = ws[2];
  l.kw = ws[3];
  l.oh = oh;
  l.ow = ow;
  l.groups = g.groups;
  l.stride = g.stride;
  l.pad = g.padding;
  l.cg = l.c / g.groups;
  l.og = l.o / g.groups;
  return l;
}

void check_conv_shapes(const Shape& xs, const Shape& ws, const ConvGeometry& g, const char* what) {
  if (xs.size() != 4 || ws.size() != 4) {
    throw ShapeError(std::string(what) + ": expected 4-d input and kernel, got " + shape_to_string(xs) + " and " +
                     shape_to_string(ws));
  }
  if (g.groups < 1 || xs[1] % g.groups != 0 || ws[0] % g.groups != 0) {
    throw ShapeError(std::string(what) + ": channel counts not divisible by groups=" + std::to_string(g.groups));
  }
  if (ws[1] * g.groups != xs[1]) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(xs[1]) + " channels but kernel " +
                     shape_to_string(ws) + " expects " + std::to_string(ws[1] * g.groups));
  }
}

// Samples per chunk so that the column buffer stays around 4M floats.
int chunk_samples(const Layout& l) {
  const std::size_t per = static_cast<std::size_t>(l.patch()) * l.pixels();
  const std::size_t budget = std::size_t{1} << 22;
  return static_cast<int>(std::clamp<std::size_t>(budget / std::max<std::size_t>(per, 1), 1, std::max(l.n, 1)));
}

// col[(ci*kh + i)*kw + j][s*P + pix] for samples [n0, n0+nb) and group grp.
void im2col(const Layout& l, const float* x, int n0, int nb, int grp, float* col) {
  const int p_count = l.pixels();
  const std::size_t row_len = static_cast<std::size_t>(nb) * p_count;
  for (int ci = 0; ci < l.cg; ++ci) {
    const int c = grp * l.cg + ci;
    for (int i = 0; i < l.kh; ++i) {
      for (int j = 0; j < l.kw; ++j) {
        float* row = col + static_cast<std::size_t>((ci * l.kh + i) * l.kw + j) * row_len;
        for (int s = 0; s < nb; ++s) {
          const float* plane = x + (static_cast<std::size_t>(n0 + s) * l.c + c) * l.h * l.w;
          float* dst = row + static_cast<std::size_t>(s) * p_count;
          for (int oy = 0; oy < l.oh; ++oy) {
            const int iy = oy * l.stride + i - l.pad;
            float* d = dst + oy * l.ow;
            if (iy < 0 || iy >= l.h) {
              std::fill(d, d + l.ow, 0.0f);
              continue;
            }
            const float* src = plane + static_cast<std::size_t>(iy) * l.w;
            for (int ox = 0; ox < l.ow; ++ox) {
              const int ix = ox * l.stride + j - l.pad;
              d[ox] = (ix >= 0 && ix < l.w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const Layout& l, const float* col, int n0, int nb, int grp, float* x) {
  const int p_count = l.pixels();
  const std::size_t row_len = static_cast<std::size_t>(nb) * p_count;
  for (int ci = 0; ci < l.cg; ++ci) {
    const int c = grp * l.cg + ci;
    for (int i = 0; i < l.kh; ++i) {
      for (int j = 0; j < l.kw; ++j) {
        const float* row = col + static_cast<std::size_t>((ci * l.kh + i) * l.kw + j) * row_len;
        for (int s = 0; s < nb; ++s) {
          float* plane = x + (static_cast<std::size_t>(n0 + s) * l.c + c) * l.h * l.w;
          const float* src = row + static_cast<std::size_t>(s) * p_count;
          for (int oy = 0; oy < l.oh; ++oy) {
            const int iy = oy * l.stride + i - l.pad;
            if (iy < 0 || iy >= l.h) continue;
            float* dst = plane + static_cast<std::size_t>(iy) * l.w;
            const float* sr = src + oy * l.ow;
            for (int ox = 0; ox < l.ow; ++ox) {
              const int ix = ox * l.stride + j - l.pad;
              if (ix >= 0 && ix < l.w) dst[ix] += sr[ox];
            }
          }
        }
      }
    }
  }
}

// mat[oo][s*P + pix] <-> y[n0+s][grp*og + oo][pix]
void gather_output(const Layout& l, const float* y, int n0, int nb, int grp, float* mat) {
  const int p_count = l.pixels();
  for (int oo = 0; oo < l.og; ++oo) {
    for (int s = 0; s < nb; ++s) {
      const float* src = y + (static_cast<std::size_t>(n0 + s) * l.o + grp * l.og + oo) * p_count;
      std::memcpy(mat + (static_cast<std::size_t>(oo) * nb + s) * p_count, src, sizeof(float) * p_count);
    }
  }
}

void scatter_output(const Layout& l, const float* mat, int n0, int nb, int grp, float* y) {
  const int p_count = l.pixels();
  for (int oo = 0; oo < l.og; ++oo) {
    for (int s = 0; s < nb; ++s) {
      float* dst = y + (static_cast<std::size_t>(n0 + s) * l.o + grp * l.og + oo) * p_count;
      std::memcpy(dst, mat + (static_cast<std::size_t>(oo) * nb + s) * p_count, sizeof(float) * p_count);
    }
  }
}

const float* group_weight(const Layout& l, const float* w, int grp) {
  return w + static_cast<std::size_t>(grp) * l.og * l.patch();
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
  check_conv_shapes(x.shape(), w.shape(), g, "conv2d");
  const int oh = conv_output_extent(x.dim(2), w.dim(2), g.stride, g.padding);
  const int ow = conv_output_extent(x.dim(3), w.dim(3), g.stride, g.padding);
  const Layout l = make_layout(x.shape(), w.shape(), g, oh, ow);
  Tensor y(Shape{l.n, l.o, oh, ow});
  if (l.n == 0) return y;
  const int chunk = chunk_samples(l);
  std::vector<float> col, out;
  for (int n0 = 0; n0 < l.n; n0 += chunk) {
    const int nb = std::min(chunk, l.n - n0);
    const int cols = nb * l.pixels();
    col.resize(static_cast<std::size_t>(l.patch()) * cols);
    out.resize(static_cast<std::size_t>(l.og) * cols);
    for (int grp = 0; grp < l.groups; ++grp) {
      im2col(l, x.ptr(), n0, nb, grp, col.data());
      gemm_nn(l.og, cols, l.patch(), group_weight(l, w.ptr(), grp), col.data(), out.data(), false);
      scatter_output(l, out.data(), n0, nb, grp, y.ptr());
    }
  }
  return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, const ConvGeometry& g, int in_h, int in_w) {
  if (gy.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d_backward_input: expected 4-d tensors");
  if (gy.dim(1) != w.dim(0)) {
    throw ShapeError("conv2d_backward_input: gradient has " + std::to_string(gy.dim(1)) +
                     " channels but kernel " + shape_to_string(w.shape()) + " produces " + std::to_string(w.dim(0)));
  }
  const Shape xs{gy.dim(0), w.dim(1) * g.groups, in_h, in_w};
  check_conv_shapes(xs, w.shape(), g, "conv2d_backward_input");
  const int oh = conv_output_extent(in_h, w.dim(2), g.stride, g.padding);
  const int ow = conv_output_extent(in_w, w.dim(3), g.stride, g.padding);
  if (oh != gy.dim(2) || ow != gy.dim(3)) {
    throw ShapeError("conv2d_backward_input: gradient " + shape_to_string(gy.shape()) +
                     " inconsistent with input extent " + std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  const Layout l = make_layout(xs, w.shape(), g, oh, ow);
  Tensor gx(xs);
  if (l.n == 0) return gx;
  const int chunk = chunk_samples(l);
  std::vector<float> col, mat;
  for (int n0 = 0; n0 < l.n; n0 += chunk) {
    const int nb = std::min(chunk, l.n - n0);
    const int cols = nb * l.pixels();
    col.resize(static_cast<std::size_t>(l.patch()) * cols);
    mat.resize(static_cast<std::size_t>(l.og) * cols);
    for (int grp = 0; grp < l.groups; ++grp) {
      gather_output(l, gy.ptr(), n0, nb, grp, mat.data());
      gemm_tn(l.patch(), cols, l.og, group_weight(l, w.ptr(), grp), mat.data(), col.data(), false);
      col2im_add(l, col.data(), n0, nb, grp, gx.ptr());
    }
  }
  return gx;
}

Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, const ConvGeometry& g, int kh, int kw) {
  if (x.rank() != 4 || gy.rank() != 4) throw ShapeError("conv2d_backward_weight: expected 4-d tensors");
  if (x.dim(0) != gy.dim(0)) throw ShapeError("conv2d_backward_weight: batch extents differ");
  if (g.groups < 1 || x.dim(1) % g.groups != 0 || gy.dim(1) % g.groups != 0) {
    throw ShapeError("conv2d_backward_weight: channels not divisible by groups");
  }
  const Shape ws{gy.dim(1), x.dim(1) / g.groups, kh, kw};
  const int oh = conv_output_extent(x.dim(2), kh, g.stride, g.padding);
  const int ow = conv_output_extent(x.dim(3), kw, g.stride, g.padding);
  if (oh != gy.dim(2) || ow != gy.dim(3)) {
    throw ShapeError("conv2d_backward_weight: gradient " + shape_to_string(gy.shape()) + " inconsistent with input " +
                     shape_to_string(x.shape()));
  }
  const Layout l = make_layout(x.shape(), ws, g, oh, ow);
  Tensor gw(ws);
  if (l.n == 0) return gw;
  const int chunk = chunk_samples(l);
  std::vector<float> col, mat;
  for (int n0 = 0; n0 < l.n; n0 += chunk) {
    const int nb = std::min(chunk, l.n - n0);
    const int cols = nb * l.pixels();
    col.resize(static_cast<std::size_t>(l.patch()) * cols);
    mat.resize(static_cast<std::size_t>(l.og) * cols);
    for (int grp = 0; grp < l.groups; ++grp) {
      im2col(l, x.ptr(), n0, nb, grp, col.data());
      gather_output(l, gy.ptr(), n0, nb, grp, mat.data());
      float* dst = gw.ptr() + static_cast<std::size_t>(grp) * l.og * l.patch();
      gemm_nt(l.og, l.patch(), cols, mat.data(), col.data(), dst, true);
    }
  }
  return gw;
}

}  // namespace balgan::kernels
