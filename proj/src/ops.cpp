#include "mimae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mimae {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_finite(const std::vector<float>& v, const char* op) {
  for (float x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value produced");
}

Tensor make_op(const char* name, Shape shape, std::vector<float> values,
               std::initializer_list<Tensor> inputs, std::function<void(Node&)> back) {
  check_finite(values, name);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->val = std::move(values);
  bool rg = false;
  for (const Tensor& t : inputs) rg = rg || t.requires_grad();
  node->requires_grad = rg;
  if (rg) {
    for (const Tensor& t : inputs) node->parents.push_back(t.handle());
    node->backprop = std::move(back);
  }
  return Tensor::wrap(std::move(node));
}

// Returns grad buffer of p, or nullptr when p does not participate.
float* grad_of(const NodePtr& p) {
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

// c[M,N] += a[M,K] * b[K,N]
void mm_acc_nn(const float* a, const float* b, float* c, int M, int K, int N) {
  for (int m = 0; m < M; ++m) {
    const float* arow = a + int64_t(m) * K;
    float* crow = c + int64_t(m) * N;
    for (int k = 0; k < K; ++k) {
      const float av = arow[k];
      if (av == 0.0f) continue;
      const float* brow = b + int64_t(k) * N;
      for (int n = 0; n < N; ++n) crow[n] += av * brow[n];
    }
  }
}

// c[M,K] += a[M,N] * b[K,N]^T
void mm_acc_nt(const float* a, const float* b, float* c, int M, int N, int K) {
  for (int m = 0; m < M; ++m) {
    const float* arow = a + int64_t(m) * N;
    float* crow = c + int64_t(m) * K;
    for (int k = 0; k < K; ++k) {
      const float* brow = b + int64_t(k) * N;
      float s = 0.0f;
      for (int n = 0; n < N; ++n) s += arow[n] * brow[n];
      crow[k] += s;
    }
  }
}

// c[K,N] += a[M,K]^T * b[M,N]
void mm_acc_tn(const float* a, const float* b, float* c, int M, int K, int N) {
  for (int m = 0; m < M; ++m) {
    const float* arow = a + int64_t(m) * K;
    const float* brow = b + int64_t(m) * N;
    for (int k = 0; k < K; ++k) {
      const float av = arow[k];
      if (av == 0.0f) continue;
      float* crow = c + int64_t(k) * N;
      for (int n = 0; n < N; ++n) crow[n] += av * brow[n];
    }
  }
}

int last_dim(const Tensor& t) {
  if (t.ndim() == 0) throw DimensionError("op: rank-0 tensor has no last dimension");
  return t.shape().back();
}

int64_t row_count(const Tensor& t) { return t.size() / last_dim(t); }

}  // namespace

// ------------------------------------------------------------------
// elementwise
// ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  NodePtr an = a.handle(), bn = b.handle();
  return make_op("add", a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (float* g = grad_of(bn))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  NodePtr an = a.handle(), bn = b.handle();
  return make_op("sub", a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (float* g = grad_of(bn))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  NodePtr an = a.handle(), bn = b.handle();
  return make_op("mul", a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bn->val[i];
    if (float* g = grad_of(bn))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * an->val[i];
  });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "divide");
  std::vector<float> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  NodePtr an = a.handle(), bn = b.handle();
  return make_op("divide", a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / bn->val[i];
    if (float* g = grad_of(bn))
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const float bi = bn->val[i];
        g[i] -= self.grad[i] * an->val[i] / (bi * bi);
      }
  });
}

Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.values());
  for (float& x : out) x *= s;
  NodePtr an = a.handle();
  return make_op("scale", a.shape(), std::move(out), {a}, [an, s](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.values());
  for (float& x : out) x += s;
  NodePtr an = a.handle();
  return make_op("add_scalar", a.shape(), std::move(out), {a}, [an](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor square(const Tensor& a) {
  std::vector<float> out(a.values());
  for (float& x : out) x *= x;
  NodePtr an = a.handle();
  return make_op("square", a.shape(), std::move(out), {a}, [an](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += 2.0f * an->val[i] * self.grad[i];
  });
}

Tensor log_op(const Tensor& a) {
  std::vector<float> out(a.values());
  for (float& x : out) x = std::log(x);
  NodePtr an = a.handle();
  return make_op("log", a.shape(), std::move(out), {a}, [an](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / an->val[i];
  });
}

namespace {

constexpr float kGeluK = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluC = 0.044715f;
constexpr float kLeakySlope = 0.01f;

float gelu_fwd(float x) {
  const float u = kGeluK * (x + kGeluC * x * x * x);
  return 0.5f * x * (1.0f + std::tanh(u));
}

float gelu_bwd(float x) {
  const float u = kGeluK * (x + kGeluC * x * x * x);
  const float t = std::tanh(u);
  const float du = kGeluK * (1.0f + 3.0f * kGeluC * x * x);
  return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
}

}  // namespace

Tensor activation(const Tensor& a, Act kind) {
  std::vector<float> out(a.values());
  switch (kind) {
    case Act::gelu:
      for (float& x : out) x = gelu_fwd(x);
      break;
    case Act::relu:
      for (float& x : out) x = x > 0.0f ? x : 0.0f;
      break;
    case Act::leaky_relu:
      for (float& x : out) x = x > 0.0f ? x : kLeakySlope * x;
      break;
  }
  NodePtr an = a.handle();
  return make_op("activation", a.shape(), std::move(out), {a}, [an, kind](Node& self) {
    float* g = grad_of(an);
    if (!g) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const float x = an->val[i];
      float d = 0.0f;
      switch (kind) {
        case Act::gelu: d = gelu_bwd(x); break;
        case Act::relu: d = x > 0.0f ? 1.0f : 0.0f; break;
        case Act::leaky_relu: d = x > 0.0f ? 1.0f : kLeakySlope; break;
      }
      g[i] += self.grad[i] * d;
    }
  });
}

Tensor gelu(const Tensor& a) { return activation(a, Act::gelu); }
Tensor relu(const Tensor& a) { return activation(a, Act::relu); }
Tensor leaky_relu(const Tensor& a) { return activation(a, Act::leaky_relu); }

// ------------------------------------------------------------------
// broadcasting
// ------------------------------------------------------------------

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  const int D = last_dim(x);
  if (v.ndim() != 1 || v.dim(0) != D)
    throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) + " does not match last dim of " +
                         shape_str(x.shape()));
  const int64_t R = row_count(x);
  std::vector<float> out(x.values());
  const auto& vv = v.values();
  for (int64_t r = 0; r < R; ++r)
    for (int d = 0; d < D; ++d) out[size_t(r * D + d)] += vv[size_t(d)];
  NodePtr xn = x.handle(), vn = v.handle();
  return make_op("add_rowvec", x.shape(), std::move(out), {x, v}, [xn, vn, R, D](Node& self) {
    if (float* g = grad_of(xn))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (float* g = grad_of(vn))
      for (int64_t r = 0; r < R; ++r)
        for (int d = 0; d < D; ++d) g[d] += self.grad[size_t(r * D + d)];
  });
}

Tensor broadcast_token(const Tensor& v, int batch, int tokens) {
  if (v.ndim() != 1) throw DimensionError("broadcast_token: expected rank-1, got " + shape_str(v.shape()));
  const int D = v.dim(0);
  const int64_t rows = int64_t(batch) * tokens;
  std::vector<float> out(size_t(rows) * size_t(D));
  for (int64_t r = 0; r < rows; ++r)
    std::copy(v.values().begin(), v.values().end(), out.begin() + r * D);
  NodePtr vn = v.handle();
  return make_op("broadcast_token", {batch, tokens, D}, std::move(out), {v}, [vn, rows, D](Node& self) {
    float* g = grad_of(vn);
    if (!g) return;
    for (int64_t r = 0; r < rows; ++r)
      for (int d = 0; d < D; ++d) g[d] += self.grad[size_t(r * D + d)];
  });
}

Tensor broadcast_to_batch(const Tensor& v, int batch) { return broadcast_token(v, batch, 1); }

// ------------------------------------------------------------------
// linear algebra
// ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), K2 = b.dim(0), N = b.dim(1);
  if (K != K2)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<float> out(size_t(M) * size_t(N), 0.0f);
  mm_acc_nn(a.values().data(), b.values().data(), out.data(), M, K, N);
  NodePtr an = a.handle(), bn = b.handle();
  return make_op("matmul", {M, N}, std::move(out), {a, b}, [an, bn, M, K, N](Node& self) {
    if (float* g = grad_of(an)) mm_acc_nt(self.grad.data(), bn->val.data(), g, M, N, K);
    if (float* g = grad_of(bn)) mm_acc_tn(an->val.data(), self.grad.data(), g, M, K, N);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3)
    throw DimensionError("bmm: expected rank-3 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const int G = a.dim(0), M = a.dim(1), K = a.dim(2);
  if (b.dim(0) != G || b.dim(1) != K)
    throw DimensionError("bmm: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " are incompatible");
  const int N = b.dim(2);
  std::vector<float> out(size_t(G) * size_t(M) * size_t(N), 0.0f);
  for (int g = 0; g < G; ++g)
    mm_acc_nn(a.values().data() + int64_t(g) * M * K, b.values().data() + int64_t(g) * K * N,
              out.data() + int64_t(g) * M * N, M, K, N);
  NodePtr an = a.handle(), bn = b.handle();
  return make_op("bmm", {G, M, N}, std::move(out), {a, b}, [an, bn, G, M, K, N](Node& self) {
    float* ga = grad_of(an);
    float* gb = grad_of(bn);
    for (int g = 0; g < G; ++g) {
      const float* dg = self.grad.data() + int64_t(g) * M * N;
      if (ga) mm_acc_nt(dg, bn->val.data() + int64_t(g) * K * N, ga + int64_t(g) * M * K, M, N, K);
      if (gb) mm_acc_tn(an->val.data() + int64_t(g) * M * K, dg, gb + int64_t(g) * K * N, M, K, N);
    }
  });
}

Tensor transpose_last(const Tensor& a) {
  if (a.ndim() != 2 && a.ndim() != 3)
    throw DimensionError("transpose_last: expected rank 2 or 3, got " + shape_str(a.shape()));
  const int G = a.ndim() == 3 ? a.dim(0) : 1;
  const int M = a.dim(a.ndim() - 2), N = a.dim(a.ndim() - 1);
  std::vector<float> out(a.values().size());
  const auto& av = a.values();
  for (int g = 0; g < G; ++g) {
    const int64_t base = int64_t(g) * M * N;
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < N; ++n) out[size_t(base + int64_t(n) * M + m)] = av[size_t(base + int64_t(m) * N + n)];
  }
  Shape shp = a.shape();
  std::swap(shp[shp.size() - 2], shp[shp.size() - 1]);
  NodePtr an = a.handle();
  return make_op("transpose_last", std::move(shp), std::move(out), {a}, [an, G, M, N](Node& self) {
    float* g = grad_of(an);
    if (!g) return;
    for (int gi = 0; gi < G; ++gi) {
      const int64_t base = int64_t(gi) * M * N;
      for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n)
          g[size_t(base + int64_t(m) * N + n)] += self.grad[size_t(base + int64_t(n) * M + m)];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  NodePtr an = a.handle();
  return make_op("reshape", std::move(shape), a.values(), {a}, [an](Node& self) {
    if (float* g = grad_of(an))
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

// ------------------------------------------------------------------
// structure
// ------------------------------------------------------------------

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  Shape tail = parts[0].shape();
  if (tail.empty()) throw DimensionError("concat_rows: rank-0 part");
  int total = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != tail.size() || !std::equal(s.begin() + 1, s.end(), tail.begin() + 1))
      throw DimensionError("concat_rows: part shapes disagree");
    total += s[0];
  }
  Shape out_shape = tail;
  out_shape[0] = total;
  std::vector<float> out;
  out.reserve(size_t(numel(out_shape)));
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());

  std::vector<NodePtr> handles;
  for (const Tensor& p : parts) handles.push_back(p.handle());
  auto node = std::make_shared<Node>();
  node->shape = out_shape;
  node->val = std::move(out);
  check_finite(node->val, "concat_rows");
  bool rg = false;
  for (const Tensor& p : parts) rg = rg || p.requires_grad();
  node->requires_grad = rg;
  if (rg) {
    node->parents.assign(handles.begin(), handles.end());
    node->backprop = [handles](Node& self) {
      size_t off = 0;
      for (const NodePtr& h : handles) {
        const size_t n = h->val.size();
        if (float* g = grad_of(h))
          for (size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
        off += n;
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor concat_tokens(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw DimensionError("concat_tokens: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " are incompatible");
  const int B = a.dim(0), T1 = a.dim(1), T2 = b.dim(1), D = a.dim(2);
  std::vector<float> out(size_t(B) * size_t(T1 + T2) * size_t(D));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < B; ++i) {
    std::copy(av.begin() + int64_t(i) * T1 * D, av.begin() + int64_t(i + 1) * T1 * D,
              out.begin() + int64_t(i) * (T1 + T2) * D);
    std::copy(bv.begin() + int64_t(i) * T2 * D, bv.begin() + int64_t(i + 1) * T2 * D,
              out.begin() + int64_t(i) * (T1 + T2) * D + int64_t(T1) * D);
  }
  NodePtr an = a.handle(), bn = b.handle();
  return make_op("concat_tokens", {B, T1 + T2, D}, std::move(out), {a, b}, [an, bn, B, T1, T2, D](Node& self) {
    float* ga = grad_of(an);
    float* gb = grad_of(bn);
    for (int i = 0; i < B; ++i) {
      const float* src = self.grad.data() + int64_t(i) * (T1 + T2) * D;
      if (ga)
        for (int64_t j = 0; j < int64_t(T1) * D; ++j) ga[int64_t(i) * T1 * D + j] += src[j];
      if (gb)
        for (int64_t j = 0; j < int64_t(T2) * D; ++j) gb[int64_t(i) * T2 * D + j] += src[int64_t(T1) * D + j];
    }
  });
}

Tensor slice_tokens(const Tensor& x, int start, int count) {
  if (x.ndim() != 3) throw DimensionError("slice_tokens: expected rank-3, got " + shape_str(x.shape()));
  const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
  if (start < 0 || count < 0 || start + count > T)
    throw ContractError("slice_tokens: range [" + std::to_string(start) + ", " +
                        std::to_string(start + count) + ") exceeds " + std::to_string(T) + " tokens");
  std::vector<float> out(size_t(B) * size_t(count) * size_t(D));
  const auto& xv = x.values();
  for (int b = 0; b < B; ++b)
    std::copy(xv.begin() + (int64_t(b) * T + start) * D, xv.begin() + (int64_t(b) * T + start + count) * D,
              out.begin() + int64_t(b) * count * D);
  NodePtr xn = x.handle();
  return make_op("slice_tokens", {B, count, D}, std::move(out), {x}, [xn, B, T, D, start, count](Node& self) {
    float* g = grad_of(xn);
    if (!g) return;
    for (int b = 0; b < B; ++b)
      for (int64_t j = 0; j < int64_t(count) * D; ++j)
        g[(int64_t(b) * T + start) * D + j] += self.grad[size_t(int64_t(b) * count * D + j)];
  });
}

namespace {

void validate_patch_indices(const std::vector<std::vector<int>>& idx, int B, int P, const char* op) {
  if (int(idx.size()) != B)
    throw DimensionError(std::string(op) + ": index rows " + std::to_string(idx.size()) +
                         " do not match batch " + std::to_string(B));
  const size_t V = idx.empty() ? 0 : idx[0].size();
  for (const auto& row : idx) {
    if (row.size() != V) throw DimensionError(std::string(op) + ": ragged index rows");
    int prev = -1;
    for (int p : row) {
      if (p < 0 || p >= P)
        throw ContractError(std::string(op) + ": patch index " + std::to_string(p) + " out of range");
      if (p <= prev) throw ContractError(std::string(op) + ": indices must be strictly ascending");
      prev = p;
    }
  }
}

}  // namespace

Tensor gather_patches(const Tensor& x, const std::vector<std::vector<int>>& idx) {
  if (x.ndim() != 3) throw DimensionError("gather_patches: expected rank-3, got " + shape_str(x.shape()));
  const int B = x.dim(0), P = x.dim(1), D = x.dim(2);
  validate_patch_indices(idx, B, P, "gather_patches");
  const int V = int(idx[0].size());
  std::vector<float> out(size_t(B) * size_t(V) * size_t(D));
  const auto& xv = x.values();
  for (int b = 0; b < B; ++b)
    for (int v = 0; v < V; ++v)
      std::copy(xv.begin() + (int64_t(b) * P + idx[size_t(b)][size_t(v)]) * D,
                xv.begin() + (int64_t(b) * P + idx[size_t(b)][size_t(v)] + 1) * D,
                out.begin() + (int64_t(b) * V + v) * D);
  NodePtr xn = x.handle();
  auto idx_copy = idx;
  return make_op("gather_patches", {B, V, D}, std::move(out), {x},
                 [xn, idx_copy, B, P, V, D](Node& self) {
                   float* g = grad_of(xn);
                   if (!g) return;
                   for (int b = 0; b < B; ++b)
                     for (int v = 0; v < V; ++v)
                       for (int d = 0; d < D; ++d)
                         g[(int64_t(b) * P + idx_copy[size_t(b)][size_t(v)]) * D + d] +=
                             self.grad[size_t((int64_t(b) * V + v) * D + d)];
                 });
}

Tensor scatter_patches(const Tensor& x, const std::vector<std::vector<int>>& idx, int num_patches) {
  if (x.ndim() != 3) throw DimensionError("scatter_patches: expected rank-3, got " + shape_str(x.shape()));
  const int B = x.dim(0), V = x.dim(1), D = x.dim(2);
  validate_patch_indices(idx, B, num_patches, "scatter_patches");
  if (int(idx[0].size()) != V)
    throw DimensionError("scatter_patches: index width does not match token count");
  std::vector<float> out(size_t(B) * size_t(num_patches) * size_t(D), 0.0f);
  const auto& xv = x.values();
  for (int b = 0; b < B; ++b)
    for (int v = 0; v < V; ++v)
      std::copy(xv.begin() + (int64_t(b) * V + v) * D, xv.begin() + (int64_t(b) * V + v + 1) * D,
                out.begin() + (int64_t(b) * num_patches + idx[size_t(b)][size_t(v)]) * D);
  NodePtr xn = x.handle();
  auto idx_copy = idx;
  const int P = num_patches;
  return make_op("scatter_patches", {B, P, D}, std::move(out), {x},
                 [xn, idx_copy, B, P, V, D](Node& self) {
                   float* g = grad_of(xn);
                   if (!g) return;
                   for (int b = 0; b < B; ++b)
                     for (int v = 0; v < V; ++v)
                       for (int d = 0; d < D; ++d)
                         g[(int64_t(b) * V + v) * D + d] +=
                             self.grad[size_t((int64_t(b) * P + idx_copy[size_t(b)][size_t(v)]) * D + d)];
                 });
}

Tensor split_heads(const Tensor& x, int heads) {
  if (x.ndim() != 3) throw DimensionError("split_heads: expected rank-3, got " + shape_str(x.shape()));
  const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
  if (D % heads != 0) throw DimensionError("split_heads: dim " + std::to_string(D) +
                                           " not divisible by " + std::to_string(heads) + " heads");
  const int dh = D / heads;
  std::vector<float> out(x.values().size());
  const auto& xv = x.values();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < heads; ++h)
        std::copy(xv.begin() + (int64_t(b) * T + t) * D + int64_t(h) * dh,
                  xv.begin() + (int64_t(b) * T + t) * D + int64_t(h + 1) * dh,
                  out.begin() + ((int64_t(b) * heads + h) * T + t) * dh);
  NodePtr xn = x.handle();
  return make_op("split_heads", {B * heads, T, dh}, std::move(out), {x}, [xn, B, T, heads, dh](Node& self) {
    float* g = grad_of(xn);
    if (!g) return;
    const int D = heads * dh;
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t)
        for (int h = 0; h < heads; ++h)
          for (int d = 0; d < dh; ++d)
            g[(int64_t(b) * T + t) * D + int64_t(h) * dh + d] +=
                self.grad[size_t(((int64_t(b) * heads + h) * T + t) * dh + d)];
  });
}

Tensor merge_heads(const Tensor& x, int heads) {
  if (x.ndim() != 3) throw DimensionError("merge_heads: expected rank-3, got " + shape_str(x.shape()));
  const int BH = x.dim(0), T = x.dim(1), dh = x.dim(2);
  if (BH % heads != 0) throw DimensionError("merge_heads: leading dim not divisible by head count");
  const int B = BH / heads, D = heads * dh;
  std::vector<float> out(x.values().size());
  const auto& xv = x.values();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < heads; ++h)
        std::copy(xv.begin() + ((int64_t(b) * heads + h) * T + t) * dh,
                  xv.begin() + ((int64_t(b) * heads + h) * T + t + 1) * dh,
                  out.begin() + (int64_t(b) * T + t) * D + int64_t(h) * dh);
  NodePtr xn = x.handle();
  return make_op("merge_heads", {B, T, D}, std::move(out), {x}, [xn, B, T, heads, dh](Node& self) {
    float* g = grad_of(xn);
    if (!g) return;
    const int D = heads * dh;
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t)
        for (int h = 0; h < heads; ++h)
          for (int d = 0; d < dh; ++d)
            g[((int64_t(b) * heads + h) * T + t) * dh + d] +=
                self.grad[size_t((int64_t(b) * T + t) * D + int64_t(h) * dh + d)];
  });
}

// ------------------------------------------------------------------
// normalization / reductions
// ------------------------------------------------------------------

Tensor softmax_last(const Tensor& x) {
  const int C = last_dim(x);
  const int64_t R = row_count(x);
  std::vector<float> out(x.values());
  for (int64_t r = 0; r < R; ++r) {
    float* row = out.data() + r * C;
    float mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    float sum = 0.0f;
    for (int c = 0; c < C; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (int c = 0; c < C; ++c) row[c] /= sum;
  }
  NodePtr xn = x.handle();
  Tensor result = make_op("softmax", x.shape(), std::move(out), {x}, [xn, R, C](Node& self) {
    float* g = grad_of(xn);
    if (!g) return;
    for (int64_t r = 0; r < R; ++r) {
      const float* y = self.val.data() + r * C;
      const float* dy = self.grad.data() + r * C;
      float dot = 0.0f;
      for (int c = 0; c < C; ++c) dot += y[c] * dy[c];
      for (int c = 0; c < C; ++c) g[r * C + c] += y[c] * (dy[c] - dot);
    }
  });
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  const int D = last_dim(x);
  if (gain.ndim() != 1 || gain.dim(0) != D || bias.ndim() != 1 || bias.dim(0) != D)
    throw DimensionError("layer_norm: gain/bias must be rank-1 of size " + std::to_string(D));
  const int64_t R = row_count(x);
  std::vector<float> out(x.values().size());
  std::vector<float> xhat(x.values().size());
  std::vector<float> inv_std(static_cast<size_t>(R));
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int64_t r = 0; r < R; ++r) {
    const float* row = xv.data() + r * D;
    float mean = 0.0f;
    for (int d = 0; d < D; ++d) mean += row[d];
    mean /= float(D);
    float var = 0.0f;
    for (int d = 0; d < D; ++d) {
      const float c = row[d] - mean;
      var += c * c;
    }
    var /= float(D);
    const float inv = 1.0f / std::sqrt(var + eps);
    inv_std[size_t(r)] = inv;
    for (int d = 0; d < D; ++d) {
      const float h = (row[d] - mean) * inv;
      xhat[size_t(r * D + d)] = h;
      out[size_t(r * D + d)] = gv[size_t(d)] * h + bv[size_t(d)];
    }
  }
  NodePtr xn = x.handle(), gn = gain.handle(), bn = bias.handle();
  auto xh = std::make_shared<std::vector<float>>(std::move(xhat));
  auto is = std::make_shared<std::vector<float>>(std::move(inv_std));
  return make_op("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                 [xn, gn, bn, xh, is, R, D](Node& self) {
                   float* gx = grad_of(xn);
                   float* gg = grad_of(gn);
                   float* gb = grad_of(bn);
                   for (int64_t r = 0; r < R; ++r) {
                     const float* h = xh->data() + r * D;
                     const float* dy = self.grad.data() + r * D;
                     if (gg || gb)
                       for (int d = 0; d < D; ++d) {
                         if (gg) gg[d] += dy[d] * h[d];
                         if (gb) gb[d] += dy[d];
                       }
                     if (gx) {
                       float mean_dh = 0.0f, mean_dhh = 0.0f;
                       for (int d = 0; d < D; ++d) {
                         const float dh = dy[d] * gn->val[size_t(d)];
                         mean_dh += dh;
                         mean_dhh += dh * h[d];
                       }
                       mean_dh /= float(D);
                       mean_dhh /= float(D);
                       const float inv = (*is)[size_t(r)];
                       for (int d = 0; d < D; ++d) {
                         const float dh = dy[d] * gn->val[size_t(d)];
                         gx[r * D + d] += inv * (dh - mean_dh - h[d] * mean_dhh);
                       }
                     }
                   }
                 });
}

Tensor normalize_rows(const Tensor& x) {
  if (x.ndim() != 2) throw DimensionError("normalize_rows: expected rank-2, got " + shape_str(x.shape()));
  const int R = x.dim(0), D = x.dim(1);
  std::vector<float> out(x.values());
  std::vector<float> norms(static_cast<size_t>(R));
  for (int r = 0; r < R; ++r) {
    float* row = out.data() + int64_t(r) * D;
    double s = 0.0;
    for (int d = 0; d < D; ++d) s += double(row[d]) * double(row[d]);
    const float norm = float(std::sqrt(s));
    if (norm < 1e-12f) throw ContractError("normalize_rows: zero-norm row " + std::to_string(r));
    norms[size_t(r)] = norm;
    for (int d = 0; d < D; ++d) row[d] /= norm;
  }
  NodePtr xn = x.handle();
  auto nm = std::make_shared<std::vector<float>>(std::move(norms));
  return make_op("normalize_rows", x.shape(), std::move(out), {x}, [xn, nm, R, D](Node& self) {
    float* g = grad_of(xn);
    if (!g) return;
    for (int r = 0; r < R; ++r) {
      const float* y = self.val.data() + int64_t(r) * D;
      const float* dy = self.grad.data() + int64_t(r) * D;
      float dot = 0.0f;
      for (int d = 0; d < D; ++d) dot += y[d] * dy[d];
      const float inv = 1.0f / (*nm)[size_t(r)];
      for (int d = 0; d < D; ++d) g[int64_t(r) * D + d] += (dy[d] - y[d] * dot) * inv;
    }
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (float v : x.values()) s += v;
  NodePtr xn = x.handle();
  return make_op("sum_all", {}, {float(s)}, {x}, [xn](Node& self) {
    if (float* g = grad_of(xn)) {
      const float gs = self.grad[0];
      for (size_t i = 0; i < xn->val.size(); ++i) g[i] += gs;
    }
  });
}

Tensor mean_all(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean_all: empty tensor");
  double s = 0.0;
  for (float v : x.values()) s += v;
  const float inv = 1.0f / float(x.size());
  NodePtr xn = x.handle();
  return make_op("mean_all", {}, {float(s / double(x.size()))}, {x}, [xn, inv](Node& self) {
    if (float* g = grad_of(xn)) {
      const float gs = self.grad[0] * inv;
      for (size_t i = 0; i < xn->val.size(); ++i) g[i] += gs;
    }
  });
}

Tensor row_sum(const Tensor& x) {
  if (x.ndim() != 2) throw DimensionError("row_sum: expected rank-2, got " + shape_str(x.shape()));
  const int R = x.dim(0), C = x.dim(1);
  std::vector<float> out(static_cast<size_t>(R));
  const auto& xv = x.values();
  for (int r = 0; r < R; ++r) {
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += xv[size_t(int64_t(r) * C + c)];
    out[size_t(r)] = float(s);
  }
  NodePtr xn = x.handle();
  return make_op("row_sum", {R}, std::move(out), {x}, [xn, R, C](Node& self) {
    float* g = grad_of(xn);
    if (!g) return;
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) g[int64_t(r) * C + c] += self.grad[size_t(r)];
  });
}

Tensor logsumexp_rows(const Tensor& x) {
  if (x.ndim() != 2) throw DimensionError("logsumexp_rows: expected rank-2, got " + shape_str(x.shape()));
  const int R = x.dim(0), C = x.dim(1);
  std::vector<float> out(static_cast<size_t>(R));
  const auto& xv = x.values();
  for (int r = 0; r < R; ++r) {
    const float* row = xv.data() + int64_t(r) * C;
    float mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += std::exp(double(row[c]) - double(mx));
    out[size_t(r)] = mx + float(std::log(s));
  }
  NodePtr xn = x.handle();
  return make_op("logsumexp_rows", {R}, std::move(out), {x}, [xn, R, C](Node& self) {
    float* g = grad_of(xn);
    if (!g) return;
    for (int r = 0; r < R; ++r) {
      const float lse = self.val[size_t(r)];
      const float gr = self.grad[size_t(r)];
      for (int c = 0; c < C; ++c)
        g[int64_t(r) * C + c] += gr * std::exp(xn->val[size_t(int64_t(r) * C + c)] - lse);
    }
  });
}

}  // namespace mimae
