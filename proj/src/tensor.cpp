#include "xinet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "xinet/errors.hpp"

namespace xinet::ad {

namespace {

std::atomic<uint64_t> g_next_id{1};

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
};

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  if (n <= 0) throw UsageError("tensor: extents must be positive, got " + shape_str(shape));
  if (static_cast<int64_t>(data.size()) != n)
    throw UsageError(strformat("tensor: %zu values do not fill shape %s", data.size(),
                               shape_str(shape).c_str()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

// Result node; records parents and a backward rule only when grad flows.
// Non-finite values are allowed through so callers can detect divergence.
Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> backward_fn) {
  auto node = make_leaf(std::move(shape), std::move(value), false);
  node->op = op;
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs_grad = needs_grad || p->requires_grad;
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void ensure_grad(Node& node) {
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
}

// True when `small` equals the trailing extents of `big`.
bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw UsageError(strformat("axis %d out of range for rank %d", axis, rank));
  return a;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int64_t Tensor::dim(int axis) const { return node_->shape[normalize_axis(axis, rank())]; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }
uint64_t Tensor::id() const { return node_->id; }
bool Tensor::requires_grad() const { return node_->requires_grad; }

const std::vector<double>& Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() { return node_->value; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw UsageError("tensor: gradient not populated");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

double Tensor::at(std::initializer_list<int64_t> index) const {
  const Shape& s = node_->shape;
  if (index.size() != s.size()) throw UsageError("tensor: index rank mismatch");
  int64_t flat = 0;
  int axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= s[axis]) throw UsageError("tensor: index out of bounds");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

enum class Binary { Add, Sub, Mul };

Tensor binary_op(const Tensor& ta, const Tensor& tb, Binary kind, const char* name) {
  auto a = ta.node();
  auto b = tb.node();
  if (!is_suffix(b->shape, a->shape))
    throw UsageError(strformat("%s: shape %s is not broadcastable onto %s", name,
                               shape_str(b->shape).c_str(), shape_str(a->shape).c_str()));
  const int64_t n = static_cast<int64_t>(a->value.size());
  const int64_t nb = static_cast<int64_t>(b->value.size());
  std::vector<double> out(n);
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  switch (kind) {
    case Binary::Add:
      for (int64_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i % nb];
      break;
    case Binary::Sub:
      for (int64_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i % nb];
      break;
    case Binary::Mul:
      for (int64_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i % nb];
      break;
  }
  return make_op(name, a->shape, std::move(out), {a, b}, [a, b, kind, n, nb](Node& self) {
    const double* g = self.grad.data();
    if (a->requires_grad) {
      ensure_grad(*a);
      double* da = a->grad.data();
      if (kind == Binary::Mul) {
        const double* pb = b->value.data();
        for (int64_t i = 0; i < n; ++i) da[i] += g[i] * pb[i % nb];
      } else {
        for (int64_t i = 0; i < n; ++i) da[i] += g[i];
      }
    }
    if (b->requires_grad) {
      ensure_grad(*b);
      double* db = b->grad.data();
      const double sign = kind == Binary::Sub ? -1.0 : 1.0;
      if (kind == Binary::Mul) {
        const double* pa = a->value.data();
        for (int64_t i = 0; i < n; ++i) db[i % nb] += g[i] * pa[i];
      } else {
        for (int64_t i = 0; i < n; ++i) db[i % nb] += sign * g[i];
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, Binary::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, Binary::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, Binary::Mul, "mul"); }

Tensor mul_scalar(const Tensor& ta, double c) {
  auto a = ta.node();
  const int64_t n = static_cast<int64_t>(a->value.size());
  std::vector<double> out(n);
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * c;
  return make_op("mul_scalar", a->shape, std::move(out), {a}, [a, c, n](Node& self) {
    if (!a->requires_grad) return;
    ensure_grad(*a);
    for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * c;
  });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace {

void mm_accum(const double* a, const double* b, double* c, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* arow = a + i * K;
    double* crow = c + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const double av = arow[k];
      const double* brow = b + k * N;
      for (int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA += dC * B^T
void mm_grad_a(const double* dc, const double* b, double* da, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* dcrow = dc + i * N;
    double* darow = da + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const double* brow = b + k * N;
      double s = 0.0;
      for (int64_t j = 0; j < N; ++j) s += dcrow[j] * brow[j];
      darow[k] += s;
    }
  }
}

// dB += A^T * dC
void mm_grad_b(const double* a, const double* dc, double* db, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* arow = a + i * K;
    const double* dcrow = dc + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const double av = arow[k];
      double* dbrow = db + k * N;
      for (int64_t j = 0; j < N; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  auto a = ta.node();
  auto b = tb.node();
  if (a->shape.size() < 2 || b->shape.size() < 2)
    throw UsageError(strformat("matmul: operands must have rank >= 2, got %s x %s",
                               shape_str(a->shape).c_str(), shape_str(b->shape).c_str()));
  const int64_t M = a->shape[a->shape.size() - 2];
  const int64_t K = a->shape[a->shape.size() - 1];
  const int64_t Kb = b->shape[b->shape.size() - 2];
  const int64_t N = b->shape[b->shape.size() - 1];
  if (K != Kb)
    throw UsageError(strformat("matmul: inner extents differ: %s x %s",
                               shape_str(a->shape).c_str(), shape_str(b->shape).c_str()));
  const Shape batch_a(a->shape.begin(), a->shape.end() - 2);
  const Shape batch_b(b->shape.begin(), b->shape.end() - 2);
  const bool b_broadcast = is_suffix(batch_b, batch_a);
  if (!b_broadcast && !is_suffix(batch_a, batch_b))
    throw UsageError(strformat("matmul: batch extents not broadcastable: %s x %s",
                               shape_str(a->shape).c_str(), shape_str(b->shape).c_str()));
  const Shape& batch_out = b_broadcast ? batch_a : batch_b;
  const int64_t BA = shape_numel(batch_a);
  const int64_t BB = shape_numel(batch_b);
  const int64_t BO = std::max(BA, BB);

  Shape out_shape = batch_out;
  out_shape.push_back(M);
  out_shape.push_back(N);
  std::vector<double> out(BO * M * N, 0.0);
  for (int64_t i = 0; i < BO; ++i) {
    mm_accum(a->value.data() + (i % BA) * M * K, b->value.data() + (i % BB) * K * N,
             out.data() + i * M * N, M, K, N);
  }

  return make_op("matmul", std::move(out_shape), std::move(out), {a, b},
                 [a, b, M, K, N, BA, BB, BO](Node& self) {
                   const double* dc = self.grad.data();
                   if (a->requires_grad) {
                     ensure_grad(*a);
                     for (int64_t i = 0; i < BO; ++i)
                       mm_grad_a(dc + i * M * N, b->value.data() + (i % BB) * K * N,
                                 a->grad.data() + (i % BA) * M * K, M, K, N);
                   }
                   if (b->requires_grad) {
                     ensure_grad(*b);
                     for (int64_t i = 0; i < BO; ++i)
                       mm_grad_b(a->value.data() + (i % BA) * M * K, dc + i * M * N,
                                 b->grad.data() + (i % BB) * K * N, M, K, N);
                   }
                 });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& tx, Shape shape) {
  auto x = tx.node();
  if (shape_numel(shape) != static_cast<int64_t>(x->value.size()))
    throw UsageError(strformat("reshape: cannot view %s as %s", shape_str(x->shape).c_str(),
                               shape_str(shape).c_str()));
  std::vector<double> out = x->value;
  return make_op("reshape", std::move(shape), std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    ensure_grad(*x);
    for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
  });
}

namespace {

// Swaps two axes via an index walk; dst must be distinct from src.
void transpose_copy(const double* src, double* dst, const Shape& in_shape, int ax0, int ax1,
                    bool accumulate) {
  const int rank = static_cast<int>(in_shape.size());
  Shape out_shape = in_shape;
  std::swap(out_shape[ax0], out_shape[ax1]);
  std::vector<int64_t> in_strides(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  // Stride of each output axis, expressed in the input layout.
  std::vector<int64_t> walk = in_strides;
  std::swap(walk[ax0], walk[ax1]);

  const int64_t n = shape_numel(in_shape);
  std::vector<int64_t> idx(rank, 0);
  int64_t src_off = 0;
  for (int64_t o = 0; o < n; ++o) {
    if (accumulate)
      dst[src_off] += src[o];
    else
      dst[o] = src[src_off];
    for (int axis = rank - 1; axis >= 0; --axis) {
      src_off += walk[axis];
      if (++idx[axis] < out_shape[axis]) break;
      src_off -= walk[axis] * out_shape[axis];
      idx[axis] = 0;
    }
  }
}

}  // namespace

Tensor transpose(const Tensor& tx, int axis0, int axis1) {
  auto x = tx.node();
  const int rank = static_cast<int>(x->shape.size());
  const int a0 = normalize_axis(axis0, rank);
  const int a1 = normalize_axis(axis1, rank);
  Shape out_shape = x->shape;
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<double> out(x->value.size());
  transpose_copy(x->value.data(), out.data(), x->shape, a0, a1, false);
  return make_op("transpose", std::move(out_shape), std::move(out), {x}, [x, a0, a1](Node& self) {
    if (!x->requires_grad) return;
    ensure_grad(*x);
    // The same walk scatters output-ordered gradients back into x's layout.
    transpose_copy(self.grad.data(), x->grad.data(), x->shape, a0, a1, true);
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const int rank = parts[0].rank();
  const int ax = normalize_axis(axis, rank);
  Shape out_shape = parts[0].shape();
  int64_t total_axis = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank)
      throw UsageError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != ax && p.shape()[i] != out_shape[i])
        throw UsageError(strformat("concat: shape %s incompatible with %s along axis %d",
                                   shape_str(p.shape()).c_str(), shape_str(out_shape).c_str(),
                                   ax));
    }
    total_axis += p.shape()[ax];
  }
  out_shape[ax] = total_axis;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= out_shape[i];
  for (int i = ax + 1; i < rank; ++i) inner *= out_shape[i];

  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<int64_t> axis_sizes;
  nodes.reserve(parts.size());
  for (const Tensor& p : parts) {
    nodes.push_back(p.node());
    axis_sizes.push_back(p.shape()[ax]);
  }
  int64_t offset = 0;
  for (size_t pi = 0; pi < nodes.size(); ++pi) {
    const int64_t block = axis_sizes[pi] * inner;
    const double* src = nodes[pi]->value.data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * total_axis * inner + offset * inner, src + o * block,
                  block * sizeof(double));
    offset += axis_sizes[pi];
  }

  return make_op("concat", std::move(out_shape), std::move(out), nodes,
                 [nodes, axis_sizes, outer, inner, total_axis](Node& self) {
                   int64_t offset = 0;
                   for (size_t pi = 0; pi < nodes.size(); ++pi) {
                     const int64_t block = axis_sizes[pi] * inner;
                     Node& p = *nodes[pi];
                     if (p.requires_grad) {
                       ensure_grad(p);
                       for (int64_t o = 0; o < outer; ++o) {
                         const double* g =
                             self.grad.data() + o * total_axis * inner + offset * inner;
                         double* dst = p.grad.data() + o * block;
                         for (int64_t i = 0; i < block; ++i) dst[i] += g[i];
                       }
                     }
                     offset += axis_sizes[pi];
                   }
                 });
}

Tensor slice(const Tensor& tx, int axis, int64_t start, int64_t stop) {
  auto x = tx.node();
  const int rank = static_cast<int>(x->shape.size());
  const int ax = normalize_axis(axis, rank);
  const int64_t extent = x->shape[ax];
  if (start < 0 || stop > extent || start >= stop)
    throw UsageError(strformat("slice: range [%lld,%lld) invalid for extent %lld",
                               static_cast<long long>(start), static_cast<long long>(stop),
                               static_cast<long long>(extent)));
  Shape out_shape = x->shape;
  out_shape[ax] = stop - start;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x->shape[i];
  for (int i = ax + 1; i < rank; ++i) inner *= x->shape[i];
  const int64_t span = (stop - start) * inner;

  std::vector<double> out(shape_numel(out_shape));
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * span, x->value.data() + (o * extent + start) * inner,
                span * sizeof(double));

  return make_op("slice", std::move(out_shape), std::move(out), {x},
                 [x, outer, inner, extent, start, span](Node& self) {
                   if (!x->requires_grad) return;
                   ensure_grad(*x);
                   for (int64_t o = 0; o < outer; ++o) {
                     const double* g = self.grad.data() + o * span;
                     double* dst = x->grad.data() + (o * extent + start) * inner;
                     for (int64_t i = 0; i < span; ++i) dst[i] += g[i];
                   }
                 });
}

namespace {

void roll_copy(const double* src, double* dst, int64_t outer, int64_t extent, int64_t inner,
               int64_t shift, bool accumulate) {
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < extent; ++i) {
      const int64_t j = ((i + shift) % extent + extent) % extent;
      const double* s = src + (o * extent + i) * inner;
      double* d = dst + (o * extent + j) * inner;
      if (accumulate)
        for (int64_t k = 0; k < inner; ++k) d[k] += s[k];
      else
        std::memcpy(d, s, inner * sizeof(double));
    }
  }
}

}  // namespace

Tensor roll(const Tensor& tx, int64_t shift, int axis) {
  auto x = tx.node();
  const int rank = static_cast<int>(x->shape.size());
  const int ax = normalize_axis(axis, rank);
  const int64_t extent = x->shape[ax];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x->shape[i];
  for (int i = ax + 1; i < rank; ++i) inner *= x->shape[i];

  std::vector<double> out(x->value.size());
  roll_copy(x->value.data(), out.data(), outer, extent, inner, shift, false);
  return make_op("roll", x->shape, std::move(out), {x},
                 [x, outer, extent, inner, shift](Node& self) {
                   if (!x->requires_grad) return;
                   ensure_grad(*x);
                   roll_copy(self.grad.data(), x->grad.data(), outer, extent, inner, -shift, true);
                 });
}

// ---------------------------------------------------------------------------
// nonlinearities and normalization
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& tx, int axis) {
  auto x = tx.node();
  const int rank = static_cast<int>(x->shape.size());
  const int ax = normalize_axis(axis, rank);
  const int64_t extent = x->shape[ax];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x->shape[i];
  for (int i = ax + 1; i < rank; ++i) inner *= x->shape[i];

  std::vector<double> out(x->value.size());
  const double* px = x->value.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * extent * inner + in;
      double mx = px[base];
      for (int64_t i = 1; i < extent; ++i) mx = std::max(mx, px[base + i * inner]);
      double total = 0.0;
      for (int64_t i = 0; i < extent; ++i) {
        const double e = std::exp(px[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (int64_t i = 0; i < extent; ++i) out[base + i * inner] *= inv;
    }
  }

  return make_op("softmax", x->shape, std::move(out), {x},
                 [x, outer, extent, inner](Node& self) {
                   if (!x->requires_grad) return;
                   ensure_grad(*x);
                   const double* y = self.value.data();
                   const double* g = self.grad.data();
                   double* dx = x->grad.data();
                   for (int64_t o = 0; o < outer; ++o) {
                     for (int64_t in = 0; in < inner; ++in) {
                       const int64_t base = o * extent * inner + in;
                       double dot = 0.0;
                       for (int64_t i = 0; i < extent; ++i)
                         dot += g[base + i * inner] * y[base + i * inner];
                       for (int64_t i = 0; i < extent; ++i) {
                         const int64_t p = base + i * inner;
                         dx[p] += y[p] * (g[p] - dot);
                       }
                     }
                   }
                 });
}

Tensor layer_norm(const Tensor& tx, const Tensor& tgamma, const Tensor& tbeta, double eps) {
  auto x = tx.node();
  auto gamma = tgamma.node();
  auto beta = tbeta.node();
  if (x->shape.empty()) throw UsageError("layer_norm: input must have rank >= 1");
  const int64_t D = x->shape.back();
  if (gamma->shape != Shape{D} || beta->shape != Shape{D})
    throw UsageError(strformat("layer_norm: gamma/beta must be [%lld], got %s and %s",
                               static_cast<long long>(D), shape_str(gamma->shape).c_str(),
                               shape_str(beta->shape).c_str()));
  if (eps < 0.0) throw UsageError("layer_norm: eps must be non-negative");
  const int64_t rows = static_cast<int64_t>(x->value.size()) / D;

  std::vector<double> out(x->value.size());
  // Stash mean and 1/sigma per row for the backward pass.
  auto stats = std::make_shared<std::vector<double>>(2 * rows);
  const double* px = x->value.data();
  const double* pg = gamma->value.data();
  const double* pb = beta->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = px + r * D;
    double mean = 0.0;
    for (int64_t d = 0; d < D; ++d) mean += row[d];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t d = 0; d < D; ++d) {
      const double c = row[d] - mean;
      var += c * c;
    }
    var /= static_cast<double>(D);
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * r] = mean;
    (*stats)[2 * r + 1] = inv_sigma;
    double* orow = out.data() + r * D;
    for (int64_t d = 0; d < D; ++d) orow[d] = (row[d] - mean) * inv_sigma * pg[d] + pb[d];
  }

  return make_op("layer_norm", x->shape, std::move(out), {x, gamma, beta},
                 [x, gamma, beta, stats, rows, D](Node& self) {
                   const double* g = self.grad.data();
                   const double* px = x->value.data();
                   const double* pgam = gamma->value.data();
                   for (int64_t r = 0; r < rows; ++r) {
                     const double mean = (*stats)[2 * r];
                     const double inv_sigma = (*stats)[2 * r + 1];
                     const double* grow = g + r * D;
                     const double* xrow = px + r * D;
                     if (gamma->requires_grad) {
                       ensure_grad(*gamma);
                       for (int64_t d = 0; d < D; ++d)
                         gamma->grad[d] += grow[d] * (xrow[d] - mean) * inv_sigma;
                     }
                     if (beta->requires_grad) {
                       ensure_grad(*beta);
                       for (int64_t d = 0; d < D; ++d) beta->grad[d] += grow[d];
                     }
                     if (x->requires_grad) {
                       ensure_grad(*x);
                       double* dx = x->grad.data() + r * D;
                       double mean_h = 0.0, mean_hx = 0.0;
                       for (int64_t d = 0; d < D; ++d) {
                         const double h = grow[d] * pgam[d];
                         const double xhat = (xrow[d] - mean) * inv_sigma;
                         mean_h += h;
                         mean_hx += h * xhat;
                       }
                       mean_h /= static_cast<double>(D);
                       mean_hx /= static_cast<double>(D);
                       for (int64_t d = 0; d < D; ++d) {
                         const double h = grow[d] * pgam[d];
                         const double xhat = (xrow[d] - mean) * inv_sigma;
                         dx[d] += inv_sigma * (h - mean_h - xhat * mean_hx);
                       }
                     }
                   }
                 });
}

Tensor gelu(const Tensor& tx) {
  auto x = tx.node();
  const int64_t n = static_cast<int64_t>(x->value.size());
  std::vector<double> out(n);
  for (int64_t i = 0; i < n; ++i) {
    const double v = x->value[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return make_op("gelu", x->shape, std::move(out), {x}, [x, n](Node& self) {
    if (!x->requires_grad) return;
    ensure_grad(*x);
    for (int64_t i = 0; i < n; ++i) {
      const double v = x->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      x->grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace {

Tensor reduce_op(const Tensor& tx, bool average, const char* name) {
  auto x = tx.node();
  const int64_t n = static_cast<int64_t>(x->value.size());
  double total = 0.0;
  for (double v : x->value) total += v;
  const double scale = average ? 1.0 / static_cast<double>(n) : 1.0;
  return make_op(name, {1}, {total * scale}, {x}, [x, n, scale](Node& self) {
    if (!x->requires_grad) return;
    ensure_grad(*x);
    const double g = self.grad[0] * scale;
    for (int64_t i = 0; i < n; ++i) x->grad[i] += g;
  });
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_op(x, false, "sum"); }
Tensor mean(const Tensor& x) { return reduce_op(x, true, "mean"); }

Tensor mse_loss(const Tensor& tpred, const Tensor& ttarget) {
  auto p = tpred.node();
  auto t = ttarget.node();
  if (p->shape != t->shape)
    throw UsageError(strformat("mse_loss: shapes differ: %s vs %s",
                               shape_str(p->shape).c_str(), shape_str(t->shape).c_str()));
  const int64_t n = static_cast<int64_t>(p->value.size());
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = p->value[i] - t->value[i];
    total += d * d;
  }
  return make_op("mse_loss", {1}, {total / static_cast<double>(n)}, {p, t},
                 [p, t, n](Node& self) {
                   const double g = self.grad[0] * 2.0 / static_cast<double>(n);
                   if (p->requires_grad) {
                     ensure_grad(*p);
                     for (int64_t i = 0; i < n; ++i)
                       p->grad[i] += g * (p->value[i] - t->value[i]);
                   }
                   if (t->requires_grad) {
                     ensure_grad(*t);
                     for (int64_t i = 0; i < n; ++i)
                       t->grad[i] -= g * (p->value[i] - t->value[i]);
                   }
                 });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace {

std::vector<Node*> reachable_in_creation_order(Node* root) {
  std::vector<Node*> stack{root};
  std::unordered_set<Node*> seen{root};
  std::vector<Node*> nodes;
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->id < b->id; });
  return nodes;
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined()) throw UsageError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw UsageError(strformat("backward: loss must be scalar, got shape %s",
                               shape_str(loss.shape()).c_str()));
  Node* root = loss.node().get();
  auto nodes = reachable_in_creation_order(root);
  // Intermediate grads are scratch for this sweep; leaf grads accumulate.
  for (Node* n : nodes) {
    if (!n->is_leaf())
      n->grad.assign(n->value.size(), 0.0);
    else if (n->requires_grad)
      ensure_grad(*n);
  }
  ensure_grad(*root);
  root->grad[0] = root->is_leaf() ? root->grad[0] + 1.0 : 1.0;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
  }
}

Tape Tape::trace(const Tensor& root) {
  if (!root.defined()) throw UsageError("tape: undefined tensor");
  Tape tape;
  for (Node* n : reachable_in_creation_order(root.node().get())) {
    if (n->is_leaf()) continue;
    TapeRecord rec;
    rec.output_id = n->id;
    rec.op = n->op;
    for (const auto& p : n->parents) rec.input_ids.push_back(p->id);
    tape.records_.push_back(std::move(rec));
  }
  return tape;
}

}  // namespace xinet::ad
