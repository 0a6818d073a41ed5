#pragma once

#include <vector>

#include "seqattn/tensor.h"

namespace seqattn {

enum class Act { LeakyRelu, Tanh, Sigmoid };

constexpr double kLeakyReluSlope = 0.01;

// y = x W^T + b. x is [In] or [S,In], W is [Out,In], b is [Out] or null.
TensorPtr affine(Tape& tape, const TensorPtr& x, const TensorPtr& W,
                 const TensorPtr& b = nullptr);

// y[s] = sum_m X[s,m] v[m].
TensorPtr matvec(Tape& tape, const TensorPtr& X, const TensorPtr& v);

// "Same" 1-D convolution: x is [S,Cin], filter is [Cin,width,Cout] with odd
// width, output is [S,Cout]. Zero padding outside [0,S).
TensorPtr conv1d_same(Tape& tape, const TensorPtr& x, const TensorPtr& filter);

// Elementwise nonlinearity. slope applies to LeakyRelu only.
TensorPtr activation(Tape& tape, const TensorPtr& x, Act kind,
                     double slope = kLeakyReluSlope);

// Softmax over the valid prefix of a score vector; masked tail is exactly 0.
TensorPtr softmax_masked(Tape& tape, const TensorPtr& scores, const Mask& mask);

// Softmax over a full vector.
TensorPtr softmax(Tape& tape, const TensorPtr& v);

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add_all(Tape& tape, const std::vector<TensorPtr>& items);

// X[s,:] + v for every row s.
TensorPtr add_rowvec(Tape& tape, const TensorPtr& X, const TensorPtr& v);

TensorPtr emul(Tape& tape, const TensorPtr& a, const TensorPtr& b);

// sum_i weights[i] * items[i]; every item has the same shape and weights is
// a vector of length items.size().
TensorPtr mix(Tape& tape, const std::vector<TensorPtr>& items, const TensorPtr& weights);

// Concatenate [S,d_k] blocks along the column axis.
TensorPtr concat_cols(Tape& tape, const std::vector<TensorPtr>& items);

TensorPtr concat_vec(Tape& tape, const TensorPtr& a, const TensorPtr& b);

// Row `index` of a matrix as a vector (also a differentiable embedding
// lookup when X is a parameter table).
TensorPtr row(Tape& tape, const TensorPtr& X, int index);

// Stack equal-length vectors into a matrix, one row each.
TensorPtr stack_rows(Tape& tape, const std::vector<TensorPtr>& rows);

// Contiguous slice [start, start+count) along axis 0.
TensorPtr narrow0(Tape& tape, const TensorPtr& x, int start, int count);

// Same data, new shape (copies; gradient passes through).
TensorPtr reshape(Tape& tape, const TensorPtr& x, std::vector<int> shape);

TensorPtr dot(Tape& tape, const TensorPtr& a, const TensorPtr& b);

// ctx[m] = sum_s align[s] * hE[s,m].
TensorPtr attend_context(Tape& tape, const TensorPtr& hE, const TensorPtr& align);

TensorPtr scale_const(Tape& tape, const TensorPtr& x, double c);

// Negative log-likelihood of `target` under softmax(logits); numerically
// stable log-sum-exp form. Returns a scalar.
TensorPtr nll_from_logits(Tape& tape, const TensorPtr& logits, int target);

// Sum of squared differences over the first `valid_rows` rows (-1 = all).
// `target` carries no gradient unless it requires one.
TensorPtr mse_sum(Tape& tape, const TensorPtr& pred, const TensorPtr& target,
                  int valid_rows = -1);

// Binary cross-entropy summed over the first `valid` entries (-1 = all).
// probs are probabilities in (0,1); values at the boundary are clamped to
// [eps, 1-eps] with eps = 1e-7 and a debug log.
TensorPtr bce_sum(Tape& tape, const TensorPtr& probs, const std::vector<double>& targets,
                  int valid = -1);

}  // namespace seqattn
