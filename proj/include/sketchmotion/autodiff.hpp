#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace sketchmotion::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

/// What a backward closure sees: the upstream gradient, the forward values,
/// and gradient buffers for inputs that require them (empty spans otherwise).
struct GradContext {
  std::span<const double> out_grad;
  std::span<const double> out_value;
  std::vector<std::span<const double>> in_values;
  std::vector<std::span<double>> in_grads;

  bool needs(std::size_t input) const { return !in_grads[input].empty(); }
};

using BackwardFn = std::function<void(const GradContext&)>;

namespace detail {
struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};
}  // namespace detail

/// Dense row-major double tensor. Copies share the underlying node, so a
/// parameter can be held by a layer and by an optimizer at the same time.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Mutable storage; only leaves may be written.
  std::span<double> data();
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return !node_->backward; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;
  std::uint64_t id() const { return node_->id; }

  /// Fused-operation hook: the result records `backward` unless no input
  /// requires a gradient.
  friend Tensor custom_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                          BackwardFn backward);
  friend class Tape;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

Tensor custom_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                 BackwardFn backward);

/// Nodes reachable from a root through gradient-carrying edges, ordered so
/// that every node precedes its inputs (reverse creation order).
class Tape {
 public:
  static Tape record(const Tensor& root);
  std::size_t size() const { return nodes_.size(); }
  const std::vector<detail::Node*>& nodes() const { return nodes_; }

 private:
  std::vector<detail::Node*> nodes_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
/// Throws ShapeError unless loss is a scalar.
void backward(const Tensor& loss);
/// Same, with an explicit upstream gradient for a non-scalar root.
void backward(const Tensor& root, std::span<const double> seed);

// --- elementwise with broadcasting (equal rank, size-1 axes, or scalars) ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add(neg(a), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return mul(a, 1.0 / s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);   // throws on negative input
Tensor sqrt(const Tensor& a);  // throws on negative input
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor square(const Tensor& a);

// --- linear algebra and layout ---
/// (m,k)x(k,n) or batched (b,m,k)x(b,k,n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices);

// --- reductions (axis variants keep the reduced axis with extent 1) ---
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor max(const Tensor& a, std::size_t axis);
Tensor softmax(const Tensor& a, std::size_t axis);
/// Zero mean, unit variance over the last axis (no affine terms).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

/// Central-difference gradient check of a scalar function. Returns
/// max |g_ad - g_fd| / max(1, |g_fd|) over all coordinates.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps);

/// Multi-parameter variant: perturbs the leaves in place (restoring them).
/// `include(p, i)` may exclude coordinate i of parameter p.
double finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double eps,
                         const std::function<bool(std::size_t, std::size_t)>& include = {});

}  // namespace sketchmotion::ad
