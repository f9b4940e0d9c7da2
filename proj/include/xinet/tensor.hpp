#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace xinet::ad {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node;

// Dense row-major tensor participating in reverse-mode differentiation.
// Tensors are cheap handles onto a shared node; ops build a graph whose
// creation order doubles as the tape's topological order.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int64_t dim(int axis) const;
  int64_t numel() const;
  uint64_t id() const;
  bool requires_grad() const;

  const std::vector<double>& values() const;
  // Direct write access to a leaf's storage (parameter updates, tests).
  std::vector<double>& mutable_values();

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  double at(std::initializer_list<int64_t> index) const;

  std::shared_ptr<Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording for the current thread while alive (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise ops accept identical shapes, or a right-hand side whose shape
// is a trailing suffix of the left (broadcast across leading batch axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double c);

// Batched matrix product; trailing two axes multiply, leading axes of b must
// form a suffix of the leading axes of a (or vice versa).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t stop);
Tensor roll(const Tensor& x, int64_t shift, int axis);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }

// Propagates d(loss)/d(leaf) into every requires-grad leaf reachable from
// the scalar loss. Leaf gradients accumulate across calls.
void backward(const Tensor& loss);

struct TapeRecord {
  uint64_t output_id;
  std::vector<uint64_t> input_ids;
  std::string op;
};

// Read-only view of the executed operations reachable from a root, in
// execution (= topological) order. Used by backward() and inspectable in
// tests.
class Tape {
 public:
  static Tape trace(const Tensor& root);
  const std::vector<TapeRecord>& records() const { return records_; }

 private:
  std::vector<TapeRecord> records_;
};

}  // namespace xinet::ad
