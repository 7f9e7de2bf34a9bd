#include "scpc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scpc::ops {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require(t.defined() && t.rank() == rank,
          std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
              (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

void grad_into(const Tensor& t, std::span<const float> g) {
  if (t.requires_grad()) accumulate_grad(t, g);
}

// C[m×n] += A[m×k] · B[k×n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const float* a, const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * k + p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const float* a, const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m×n] += A[k×m]ᵀ · B[k×n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const float* a, const float* b, float* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const float* arow = a + p * m;
    const float* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float av = arow[i];
      if (av == 0.0f) continue;
      float* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t out_hw() const { return oh * ow; }
};

void im2col(const ConvGeometry& g, const float* in, float* col) {
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        float* row = col + ((ci * g.kh + ky) * g.kw + kx) * g.out_hw();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.h) &&
                                x < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.ow + ox] = inside ? in[(ci * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* col, float* in) {
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const float* row = col + ((ci * g.kh + ky) * g.kw + kx) * g.out_hw();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.w)) continue;
            in[(ci * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tape::record(a.shape(), std::move(out), {&a, &b}, [a, b](std::span<const float> g) {
    grad_into(a, g);
    grad_into(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return Tape::record(a.shape(), std::move(out), {&a, &b}, [a, b](std::span<const float> g) {
    grad_into(a, g);
    if (b.requires_grad()) {
      std::vector<float> neg(g.begin(), g.end());
      for (auto& v : neg) v = -v;
      accumulate_grad(b, neg);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tape::record(a.shape(), std::move(out), {&a, &b}, [a, b](std::span<const float> g) {
    if (a.requires_grad()) {
      std::vector<float> ga(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b.at(i);
      accumulate_grad(a, ga);
    }
    if (b.requires_grad()) {
      std::vector<float> gb(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a.at(i);
      accumulate_grad(b, gb);
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tape::record(a.shape(), std::move(out), {&a}, [a, factor](std::span<const float> g) {
    std::vector<float> ga(g.begin(), g.end());
    for (auto& v : ga) v *= factor;
    grad_into(a, ga);
  });
}

Tensor relu(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.at(i), 0.0f);
  return Tape::record(a.shape(), std::move(out), {&a}, [a](std::span<const float> g) {
    std::vector<float> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = a.at(i) > 0.0f ? g[i] : 0.0f;
    grad_into(a, ga);
  });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_row_bias");
  require_rank(bias, 1, "add_row_bias");
  const std::size_t m = a.dim(0), n = a.dim(1);
  require(bias.dim(0) == n, "add_row_bias: bias width mismatch");
  std::vector<float> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.at(j);
  return Tape::record(a.shape(), std::move(out), {&a, &bias}, [a, bias, m, n](std::span<const float> g) {
    grad_into(a, g);
    if (bias.requires_grad()) {
      std::vector<float> gb(n, 0.0f);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      accumulate_grad(bias, gb);
    }
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require(x.rank() == 3 || x.rank() == 4, "add_channel_bias: expected [c×h×w] or [N×c×h×w]");
  require_rank(bias, 1, "add_channel_bias");
  const std::size_t batch = x.rank() == 4 ? x.dim(0) : 1;
  const std::size_t c = x.dim(x.rank() - 3);
  const std::size_t hw = x.dim(x.rank() - 2) * x.dim(x.rank() - 1);
  require(bias.dim(0) == c, "add_channel_bias: bias length mismatch");
  std::vector<float> out(x.data().begin(), x.data().end());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) out[(n * c + ch) * hw + i] += bias.at(ch);
  return Tape::record(x.shape(), std::move(out), {&x, &bias}, [x, bias, batch, c, hw](std::span<const float> g) {
    grad_into(x, g);
    if (bias.requires_grad()) {
      std::vector<float> gb(c, 0.0f);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < hw; ++i) gb[ch] += g[(n * c + ch) * hw + i];
      accumulate_grad(bias, gb);
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<float> out(m * n, 0.0f);
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  return Tape::record({m, n}, std::move(out), {&a, &b}, [a, b, m, k, n](std::span<const float> g) {
    if (a.requires_grad()) {
      std::vector<float> ga(m * k, 0.0f);
      gemm_nt(m, n, k, g.data(), b.data().data(), ga.data());
      accumulate_grad(a, ga);
    }
    if (b.requires_grad()) {
      std::vector<float> gb(k * n, 0.0f);
      gemm_tn(k, m, n, a.data().data(), g.data(), gb.data());
      accumulate_grad(b, gb);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  require(b.dim(1) == k, "matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
  std::vector<float> out(m * n, 0.0f);
  gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data());
  return Tape::record({m, n}, std::move(out), {&a, &b}, [a, b, m, k, n](std::span<const float> g) {
    if (a.requires_grad()) {
      std::vector<float> ga(m * k, 0.0f);
      gemm_nn(m, n, k, g.data(), b.data().data(), ga.data());
      accumulate_grad(a, ga);
    }
    if (b.requires_grad()) {
      std::vector<float> gb(n * k, 0.0f);
      gemm_tn(n, m, k, g.data(), a.data().data(), gb.data());
      accumulate_grad(b, gb);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i * n + j);
  return Tape::record({n, m}, std::move(out), {&a}, [a, m, n](std::span<const float> g) {
    if (!a.requires_grad()) return;
    std::vector<float> ga(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[j * m + i];
    accumulate_grad(a, ga);
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding) {
  require(input.rank() == 3 || input.rank() == 4, "conv2d: input must be [c×h×w] or [N×c×h×w], got " +
                                                      shape_str(input.shape()));
  require_rank(kernels, 4, "conv2d");
  require(stride >= 1, "conv2d: stride must be positive");
  const bool batched = input.rank() == 4;
  ConvGeometry geo{};
  geo.batch = batched ? input.dim(0) : 1;
  geo.c_in = input.dim(input.rank() - 3);
  geo.h = input.dim(input.rank() - 2);
  geo.w = input.dim(input.rank() - 1);
  geo.c_out = kernels.dim(0);
  geo.kh = kernels.dim(2);
  geo.kw = kernels.dim(3);
  geo.stride = stride;
  geo.pad = padding;
  require(kernels.dim(1) == geo.c_in, "conv2d: kernel expects " + std::to_string(kernels.dim(1)) +
                                          " input channels, input has " + std::to_string(geo.c_in));
  require(geo.h + 2 * padding >= geo.kh && geo.w + 2 * padding >= geo.kw,
          "conv2d: kernel " + shape_str(kernels.shape()) + " larger than padded input " + shape_str(input.shape()));
  geo.oh = (geo.h + 2 * padding - geo.kh) / stride + 1;
  geo.ow = (geo.w + 2 * padding - geo.kw) / stride + 1;

  const std::size_t in_size = geo.c_in * geo.h * geo.w;
  const std::size_t out_size = geo.c_out * geo.out_hw();
  std::vector<float> out(geo.batch * out_size, 0.0f);
  std::vector<float> col(geo.patch() * geo.out_hw());
  for (std::size_t n = 0; n < geo.batch; ++n) {
    im2col(geo, input.data().data() + n * in_size, col.data());
    gemm_nn(geo.c_out, geo.patch(), geo.out_hw(), kernels.data().data(), col.data(), out.data() + n * out_size);
  }
  Shape shape = batched ? Shape{geo.batch, geo.c_out, geo.oh, geo.ow} : Shape{geo.c_out, geo.oh, geo.ow};
  return Tape::record(std::move(shape), std::move(out), {&input, &kernels},
                      [input, kernels, geo, in_size, out_size](std::span<const float> g) {
                        std::vector<float> col(geo.patch() * geo.out_hw());
                        std::vector<float> gk;
                        std::vector<float> gin;
                        if (kernels.requires_grad()) gk.assign(kernels.numel(), 0.0f);
                        if (input.requires_grad()) gin.assign(input.numel(), 0.0f);
                        for (std::size_t n = 0; n < geo.batch; ++n) {
                          const float* gout = g.data() + n * out_size;
                          if (!gk.empty()) {
                            im2col(geo, input.data().data() + n * in_size, col.data());
                            gemm_nt(geo.c_out, geo.out_hw(), geo.patch(), gout, col.data(), gk.data());
                          }
                          if (!gin.empty()) {
                            std::fill(col.begin(), col.end(), 0.0f);
                            gemm_tn(geo.patch(), geo.c_out, geo.out_hw(), kernels.data().data(), gout, col.data());
                            col2im(geo, col.data(), gin.data() + n * in_size);
                          }
                        }
                        if (!gk.empty()) accumulate_grad(kernels, gk);
                        if (!gin.empty()) accumulate_grad(input, gin);
                      });
}

Tensor mean_pool_global(const Tensor& input) {
  require(input.rank() == 3 || input.rank() == 4, "mean_pool_global: expected [c×h×w] or [N×c×h×w]");
  const bool batched = input.rank() == 4;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t c = input.dim(input.rank() - 3);
  const std::size_t hw = input.dim(input.rank() - 2) * input.dim(input.rank() - 1);
  std::vector<float> out(batch * c);
  for (std::size_t i = 0; i < batch * c; ++i) {
    // Accumulate in double so constant inputs pool back to exactly themselves.
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) acc += input.at(i * hw + p);
    out[i] = static_cast<float>(acc / static_cast<double>(hw));
  }
  Shape shape = batched ? Shape{batch, c} : Shape{c};
  return Tape::record(std::move(shape), std::move(out), {&input}, [input, batch, c, hw](std::span<const float> g) {
    if (!input.requires_grad()) return;
    std::vector<float> gin(input.numel());
    const float inv = 1.0f / static_cast<float>(hw);
    for (std::size_t i = 0; i < batch * c; ++i)
      for (std::size_t p = 0; p < hw; ++p) gin[i * hw + p] = g[i] * inv;
    accumulate_grad(input, gin);
  });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = logits.data().data() + i * n;
    const float mx = *std::max_element(row, row + n);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      denom += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<float>(out[i * n + j] / denom);
  }
  std::vector<float> saved = out;
  return Tape::record({m, n}, std::move(out), {&logits},
                      [logits, y = std::move(saved), m, n](std::span<const float> g) {
                        if (!logits.requires_grad()) return;
                        std::vector<float> gin(m * n);
                        for (std::size_t i = 0; i < m; ++i) {
                          float dot = 0.0f;
                          for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                          for (std::size_t j = 0; j < n; ++j) gin[i * n + j] = y[i * n + j] * (g[i * n + j] - dot);
                        }
                        accumulate_grad(logits, gin);
                      });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax");
  return reshape(softmax_rows(reshape(logits, {1, logits.dim(0)})), {logits.dim(0)});
}

Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values) {
  require_rank(queries, 2, "attention");
  require_rank(keys, 2, "attention");
  require_rank(values, 2, "attention");
  const std::size_t d = queries.dim(1);
  require(keys.dim(1) == d, "attention: key width " + std::to_string(keys.dim(1)) + " != query width " +
                                std::to_string(d));
  require(values.dim(0) == keys.dim(0), "attention: key and value counts differ");
  const Tensor scores = scale(matmul_nt(queries, keys), 1.0f / std::sqrt(static_cast<float>(d)));
  return matmul(softmax_rows(scores), values);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(gamma.numel() == n && beta.numel() == n, "layer_norm: affine width mismatch");
  std::vector<float> out(m * n), xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = x.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = static_cast<float>(1.0 / std::sqrt(var + eps));
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = static_cast<float>(row[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gamma.at(j) + beta.at(j);
    }
  }
  return Tape::record({m, n}, std::move(out), {&x, &gamma, &beta},
                      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
                       n](std::span<const float> g) {
                        if (gamma.requires_grad() || beta.requires_grad()) {
                          std::vector<float> gg(n, 0.0f), gb(n, 0.0f);
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) {
                              gg[j] += g[i * n + j] * xhat[i * n + j];
                              gb[j] += g[i * n + j];
                            }
                          grad_into(gamma, gg);
                          grad_into(beta, gb);
                        }
                        if (!x.requires_grad()) return;
                        std::vector<float> gx(m * n);
                        for (std::size_t i = 0; i < m; ++i) {
                          float mean_d = 0.0f, mean_dx = 0.0f;
                          for (std::size_t j = 0; j < n; ++j) {
                            const float dxh = g[i * n + j] * gamma.at(j);
                            mean_d += dxh;
                            mean_dx += dxh * xhat[i * n + j];
                          }
                          mean_d /= static_cast<float>(n);
                          mean_dx /= static_cast<float>(n);
                          for (std::size_t j = 0; j < n; ++j) {
                            const float dxh = g[i * n + j] * gamma.at(j);
                            gx[i * n + j] = inv_std[i] * (dxh - mean_d - xhat[i * n + j] * mean_dx);
                          }
                        }
                        accumulate_grad(x, gx);
                      });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_rank(x, 2, "gather_rows");
  require(!indices.empty(), "gather_rows: empty index list");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<float> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < rows, "gather_rows: index " + std::to_string(idx[r]) + " out of range " + std::to_string(rows));
    std::copy_n(x.data().data() + idx[r] * d, d, out.data() + r * d);
  }
  const std::size_t n = idx.size();
  return Tape::record({n, d}, std::move(out), {&x}, [x, idx = std::move(idx), d](std::span<const float> g) {
    if (!x.requires_grad()) return;
    std::vector<float> gx(x.numel(), 0.0f);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gx[idx[r] * d + j] += g[r * d + j];
    accumulate_grad(x, gx);
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> indices) { return gather_rows(table, indices); }

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  const std::size_t d = parts.front().dim(1);
  std::size_t rows = 0;
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    require(p.dim(1) == d, "concat_rows: column count mismatch");
    rows += p.dim(0);
    inputs.push_back(&p);
  }
  std::vector<float> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tape::record({rows, d}, std::move(out), inputs, [parts](std::span<const float> g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      grad_into(p, g.subspan(offset, p.numel()));
      offset += p.numel();
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().dim(0);
  std::size_t cols = 0;
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    require(p.dim(0) == m, "concat_cols: row count mismatch");
    cols += p.dim(1);
    inputs.push_back(&p);
  }
  std::vector<float> out(m * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.data().data() + i * w, w, out.data() + i * cols + offset);
    offset += w;
  }
  return Tape::record({m, cols}, std::move(out), inputs, [parts, m, cols](std::span<const float> g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.dim(1);
      if (p.requires_grad()) {
        std::vector<float> gp(m * w);
        for (std::size_t i = 0; i < m; ++i) std::copy_n(g.data() + i * cols + offset, w, gp.data() + i * w);
        accumulate_grad(p, gp);
      }
      offset += w;
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(count > 0 && start + count <= n, "slice_cols: range out of bounds");
  std::vector<float> out(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(x.data().data() + i * n + start, count, out.data() + i * count);
  return Tape::record({m, count}, std::move(out), {&x}, [x, m, n, start, count](std::span<const float> g) {
    if (!x.requires_grad()) return;
    std::vector<float> gx(m * n, 0.0f);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(g.data() + i * count, count, gx.data() + i * n + start);
    accumulate_grad(x, gx);
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<float> out(x.data().begin(), x.data().end());
  return Tape::record(std::move(shape), std::move(out), {&x}, [x](std::span<const float> g) { grad_into(x, g); });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return Tape::record({1}, {static_cast<float>(acc)}, {&x}, [x](std::span<const float> g) {
    if (!x.requires_grad()) return;
    std::vector<float> gx(x.numel(), g[0]);
    accumulate_grad(x, gx);
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0f / static_cast<float>(x.numel())); }

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "row_dot");
  require(a.shape() == b.shape(), "row_dot: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<float> out(m, 0.0f);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.at(i * n + j) * b.at(i * n + j);
  return Tape::record({m}, std::move(out), {&a, &b}, [a, b, m, n](std::span<const float> g) {
    if (a.requires_grad()) {
      std::vector<float> ga(m * n);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[i] * b.at(i * n + j);
      accumulate_grad(a, ga);
    }
    if (b.requires_grad()) {
      std::vector<float> gb(m * n);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[i * n + j] = g[i] * a.at(i * n + j);
      accumulate_grad(b, gb);
    }
  });
}

Tensor l2_normalize_rows(const Tensor& x, float eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<float> out(m * n, 0.0f), norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += static_cast<double>(x.at(i * n + j)) * x.at(i * n + j);
    norms[i] = static_cast<float>(std::sqrt(sq));
    if (norms[i] <= eps) continue;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) / norms[i];
  }
  std::vector<float> y = out;
  return Tape::record({m, n}, std::move(out), {&x},
                      [x, y = std::move(y), norms = std::move(norms), m, n, eps](std::span<const float> g) {
                        if (!x.requires_grad()) return;
                        std::vector<float> gx(m * n, 0.0f);
                        for (std::size_t i = 0; i < m; ++i) {
                          if (norms[i] <= eps) continue;
                          float dot = 0.0f;
                          for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * g[i * n + j];
                          for (std::size_t j = 0; j < n; ++j)
                            gx[i * n + j] = (g[i * n + j] - y[i * n + j] * dot) / norms[i];
                        }
                        accumulate_grad(x, gx);
                      });
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets) {
  require_rank(logits, 2, "cross_entropy_rows");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  require(targets.size() == m, "cross_entropy_rows: one target per row required");
  std::vector<float> probs(m * n);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    require(tgt[i] < n, "cross_entropy_rows: target index out of range");
    const float* row = logits.data().data() + i * n;
    const float mx = *std::max_element(row, row + n);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    const double lse = mx + std::log(denom);
    total += lse - row[tgt[i]];
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = static_cast<float>(std::exp(row[j] - lse));
  }
  return Tape::record({1}, {static_cast<float>(total)}, {&logits},
                      [logits, probs = std::move(probs), tgt = std::move(tgt), m, n](std::span<const float> g) {
                        if (!logits.requires_grad()) return;
                        std::vector<float> gl(m * n);
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < n; ++j)
                            gl[i * n + j] = g[0] * (probs[i * n + j] - (j == tgt[i] ? 1.0f : 0.0f));
                        accumulate_grad(logits, gl);
                      });
}

}  // namespace scpc::ops
