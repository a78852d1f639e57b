#pragma once

#include <vector>

#include "mimae/tensor.hpp"

namespace mimae {

enum class Act { gelu, relu, leaky_relu };

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor square(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor activation(const Tensor& a, Act kind);
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a);

// ---- broadcasting ----
// x: [..., D] + v: [D], broadcast over leading dims
Tensor add_rowvec(const Tensor& x, const Tensor& v);
// v: [D] -> [B, 1, D]
Tensor broadcast_to_batch(const Tensor& v, int batch);
// v: [D] -> [B, T, D]
Tensor broadcast_token(const Tensor& v, int batch, int tokens);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);             // [M,K]x[K,N]
Tensor bmm(const Tensor& a, const Tensor& b);                // [G,M,K]x[G,K,N]
Tensor transpose_last(const Tensor& a);                      // swap last two dims
Tensor reshape(const Tensor& a, Shape shape);

// ---- structure ----
Tensor concat_rows(const std::vector<Tensor>& parts);        // stack along dim 0
Tensor concat_tokens(const Tensor& a, const Tensor& b);      // [B,T1,D]+[B,T2,D]
Tensor slice_tokens(const Tensor& x, int start, int count);  // rows along dim 1
// x: [B,P,D], idx: per-sample ascending patch ids, shape B x V
Tensor gather_patches(const Tensor& x, const std::vector<std::vector<int>>& idx);
// inverse scatter to [B,P,D]; untouched rows are zero
Tensor scatter_patches(const Tensor& x, const std::vector<std::vector<int>>& idx, int num_patches);
// [B,T,D] -> [B*H, T, D/H] and back
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x, int heads);

// ---- normalization / reductions ----
Tensor softmax_last(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps);
Tensor normalize_rows(const Tensor& x);                      // [R,D] -> unit L2 rows
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor row_sum(const Tensor& x);                             // [R,C] -> [R]
Tensor logsumexp_rows(const Tensor& x);                      // [R,C] -> [R]

}  // namespace mimae
