#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scpc/tensor.hpp"

// Differentiable tensor operations. Each records a backward rule on the active
// tape when any input is tracked.
namespace scpc::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor relu(const Tensor& a);

// a[m×n] + bias[n] broadcast over rows.
Tensor add_row_bias(const Tensor& a, const Tensor& bias);
// x[c×h×w] or x[N×c×h×w] + bias[c].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// a[m×k] · b[k×n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m×k] · b[n×k]ᵀ.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Cross-correlation. input is [c_in×h×w] or batched [N×c_in×h×w];
// kernels are [c_out×c_in×kh×kw].
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding);

// [c×h×w] -> [c], or [N×c×h×w] -> [N×c].
Tensor mean_pool_global(const Tensor& input);

// Max-shifted softmax of a vector [n].
Tensor softmax(const Tensor& logits);
// Row-wise softmax of [m×n].
Tensor softmax_rows(const Tensor& logits);

// Scaled dot-product attention softmax(Q·Kᵀ/√d)·V.
Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values);

// Row-wise layer normalization of [m×n] with affine gamma[n], beta[n].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// Rows of table[V×d] selected by indices -> [len×d].
Tensor embedding(const Tensor& table, std::span<const std::size_t> indices);
// Same as embedding, named for gathering rows of an activation matrix.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Row-wise inner products of a[m×n], b[m×n] -> [m].
Tensor row_dot(const Tensor& a, const Tensor& b);

// Row-wise L2 normalization. A zero row maps to a zero row with zero gradient.
Tensor l2_normalize_rows(const Tensor& x, float eps = 1e-12f);

// Σ_r −log softmax(logits_r)[target_r] over rows of logits[m×n].
Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets);

}  // namespace scpc::ops
