#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xel/rng.hpp"
#include "xel/tensor.hpp"

// Differentiable primitives. Every op records itself on the tape when the
// tape is recording and at least one operand requires a gradient.
//
// Broadcasting is limited to add_bias (a d-vector over the token axis).
// Any other shape mismatch raises DimensionError.

namespace xel {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);

/// x (d x t) plus bias (d or d x 1) added to every column.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);

/// Elementwise max(0, x); subgradient at 0 is 0.
Tensor relu(Tape& tape, const Tensor& x);

/// Softmax along `axis` (0: within each column, 1: within each row).
/// Rank-1 input only accepts axis 0.
Tensor softmax(Tape& tape, const Tensor& x, int axis);

/// Stacks parts along the embedding (row) axis, in argument order.
Tensor concat_embed(Tape& tape, std::span<const Tensor> parts);

/// Stacks parts along the token (column) axis, in argument order.
Tensor concat_columns(Tape& tape, std::span<const Tensor> parts);

/// Gathers columns by index; repeated indices accumulate in the gradient.
Tensor select_columns(Tape& tape, const Tensor& x, std::span<const std::size_t> columns);

Tensor sum(Tape& tape, const Tensor& x);

/// Mean over all coordinates of (pred - target)^2. Target is a constant.
Tensor mean_squared_error(Tape& tape, const Tensor& pred, const Tensor& target);

/// logits: k x N, one column per prediction. Mean over columns of
/// -log softmax(logits)[target].
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> targets);

/// Per-column normalization over the embedding axis with learned gain/bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Inverted dropout. Identity when p == 0.
Tensor dropout(Tape& tape, const Tensor& x, double p, Rng& rng);

/// Batched multi-head dot-product attention.
///
/// q: (h*e) x (B*q_len), k and v: (h*e) x (B*k_len); columns are grouped by
/// sample. Head i owns rows [i*e, (i+1)*e). For each sample and head the
/// score matrix K^T Q (k_len x q_len) is softmax-normalized over the key
/// axis and the result is V * softmax(.). Output shape matches q.
Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t heads, std::size_t q_len, std::size_t k_len,
                 double score_scale = 1.0);

}  // namespace xel
