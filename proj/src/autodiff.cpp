#include "sketchmotion/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "sketchmotion/error.hpp"

namespace sketchmotion::ad {
namespace {

std::atomic<std::uint64_t> next_id{1};

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<detail::Node>();
  n->id = next_id.fetch_add(1, std::memory_order_relaxed);
  n->shape = std::move(shape);
  n->value = std::move(values);
  return n;
}

/// (outer, extent, inner) split around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Broadcast plan: out shape plus per-operand strides in the output index space.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
  bool same = false;
  bool scalar_a = false, scalar_b = false;
};

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  if (numel(b) == 1 && numel(a) >= 1) {
    p.out = a;
    p.scalar_b = true;
    return p;
  }
  if (numel(a) == 1) {
    p.out = b;
    p.scalar_a = true;
    return p;
  }
  if (a.size() != b.size())
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  p.out.resize(a.size());
  const auto sa = strides_of(a), sb = strides_of(b);
  p.stride_a.resize(a.size());
  p.stride_b.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    p.out[i] = std::max(a[i], b[i]);
    p.stride_a[i] = a[i] == 1 ? 0 : sa[i];
    p.stride_b[i] = b[i] == 1 ? 0 : sb[i];
  }
  return p;
}

/// Calls fn(out_index, a_index, b_index) in row-major output order.
template <class Fn>
void for_each_broadcast(const Broadcast& p, Fn&& fn) {
  const std::size_t total = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  if (p.scalar_b) {
    for (std::size_t i = 0; i < total; ++i) fn(i, i, std::size_t{0});
    return;
  }
  if (p.scalar_a) {
    for (std::size_t i = 0; i < total; ++i) fn(i, std::size_t{0}, i);
    return;
  }
  const std::size_t r = p.out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    fn(o, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * idx[d];
      ib -= p.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class Bwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  const auto plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<double> out(numel(plan.out));
  const auto av = a.values(), bv = b.values();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = fwd(av[ia], bv[ib]);
  });
  return custom_op(plan.out, std::move(out), {a, b}, [plan, bwd](const GradContext& c) {
    const auto av = c.in_values[0], bv = c.in_values[1];
    const bool need_a = c.needs(0), need_b = c.needs(1);
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      double da = 0.0, db = 0.0;
      bwd(av[ia], bv[ib], c.out_value[o], c.out_grad[o], da, db);
      if (need_a) c.in_grads[0][ia] += da;
      if (need_b) c.in_grads[1][ib] += db;
    });
  });
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return custom_op(a.shape(), std::move(out), {a}, [deriv](const GradContext& c) {
    auto g = c.in_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += c.out_grad[i] * deriv(c.in_values[0][i], c.out_value[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ad::numel(shape) != values.size())
    throw ShapeError("tensor of shape " + shape_str(shape) + " cannot hold " +
                     std::to_string(values.size()) + " values");
  auto n = make_node(std::move(shape), std::move(values));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::span<double> Tensor::data() {
  if (!is_leaf()) throw Error(ErrorCode::validation, "only leaf tensors are writable");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw Error(ErrorCode::validation, "requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor custom_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                 BackwardFn backward) {
  if (numel(shape) != values.size())
    throw ShapeError("op output shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  auto n = make_node(std::move(shape), std::move(values));
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(std::move(t.node_));
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// Tape / backward
// ---------------------------------------------------------------------------

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node_.get()};
  seen.insert(root.node_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    tape.nodes_.push_back(n);
    for (const auto& in : n->inputs)
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
  }
  // Creation ids are monotone, so descending id is a valid reverse topological order.
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });
  return tape;
}

void backward(const Tensor& root, std::span<const double> seed) {
  if (seed.size() != root.numel())
    throw ShapeError("backward seed has " + std::to_string(seed.size()) + " values for a root of " +
                     std::to_string(root.numel()));
  const Tape tape = Tape::record(root);
  if (tape.size() == 0) return;
  for (auto* n : tape.nodes()) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);  // intermediates start fresh
    else if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
  }
  auto* r = tape.nodes().front();
  for (std::size_t i = 0; i < seed.size(); ++i) r->grad[i] += seed[i];

  for (auto* n : tape.nodes()) {
    if (!n->backward) continue;
    GradContext ctx;
    ctx.out_grad = n->grad;
    ctx.out_value = n->value;
    ctx.in_values.reserve(n->inputs.size());
    ctx.in_grads.reserve(n->inputs.size());
    for (const auto& in : n->inputs) {
      ctx.in_values.emplace_back(in->value);
      ctx.in_grads.push_back(in->requires_grad ? std::span<double>(in->grad) : std::span<double>());
    }
    n->backward(ctx);
  }
  // Intermediate buffers are only needed during the sweep.
  for (auto* n : tape.nodes())
    if (n->backward) std::vector<double>().swap(n->grad);
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  const double one = 1.0;
  backward(loss, std::span<const double>(&one, 1));
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor add(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor sin(const Tensor& a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values())
    if (v < 0.0) throw Error(ErrorCode::domain, "log of a negative value");
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.values())
    if (v < 0.0) throw Error(ErrorCode::domain, "sqrt of a negative value");
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Linear algebra / layout
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    out_shape = {m, n};
  } else if (a.rank() == 3 && b.rank() == 3) {
    batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k)
      throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    out_shape = {batch, m, n};
  } else {
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* A = av + bi * m * k;
    const double* B = bv + bi * k * n;
    double* C = out.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* brow = B + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  return custom_op(std::move(out_shape), std::move(out), {a, b},
                   [batch, m, k, n](const GradContext& c) {
                     const double* av = c.in_values[0].data();
                     const double* bv = c.in_values[1].data();
                     const double* gv = c.out_grad.data();
                     for (std::size_t bi = 0; bi < batch; ++bi) {
                       const double* A = av + bi * m * k;
                       const double* B = bv + bi * k * n;
                       const double* G = gv + bi * m * n;
                       if (c.needs(0)) {
                         double* dA = c.in_grads[0].data() + bi * m * k;
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double* g = G + i * n;
                             const double* brow = B + p * n;
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
                             dA[i * k + p] += acc;
                           }
                       }
                       if (c.needs(1)) {
                         double* dB = c.in_grads[1].data() + bi * k * n;
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = A[i * k + p];
                             const double* g = G + i * n;
                             double* drow = dB + p * n;
                             for (std::size_t j = 0; j < n; ++j) drow[j] += aip * g[j];
                           }
                       }
                     }
                   });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const auto& s = a.shape();
  if (axes.size() != s.size()) throw ShapeError("permute: axis count mismatch");
  std::vector<bool> used(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || used[axes[i]]) throw ShapeError("permute: invalid axes");
    used[axes[i]] = true;
    out_shape[i] = s[axes[i]];
  }
  // map[o] = source flat index of output flat index o
  const auto src_strides = strides_of(s);
  const std::size_t total = a.numel();
  std::vector<std::size_t> map(total);
  {
    std::vector<std::size_t> idx(s.size(), 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < total; ++o) {
      map[o] = src;
      for (std::size_t d = s.size(); d-- > 0;) {
        ++idx[d];
        src += src_strides[axes[d]];
        if (idx[d] < out_shape[d]) break;
        src -= src_strides[axes[d]] * idx[d];
        idx[d] = 0;
      }
    }
  }
  std::vector<double> out(total);
  const auto av = a.values();
  for (std::size_t o = 0; o < total; ++o) out[o] = av[map[o]];
  auto shared = std::make_shared<std::vector<std::size_t>>(std::move(map));
  return custom_op(std::move(out_shape), std::move(out), {a}, [shared](const GradContext& c) {
    const auto& m = *shared;
    auto g = c.in_grads[0];
    for (std::size_t o = 0; o < m.size(); ++o) g[m[o]] += c.out_grad[o];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return custom_op(std::move(shape), std::move(out), {a}, [](const GradContext& c) {
    auto g = c.in_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.out_grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range");
  std::size_t total_extent = 0;
  for (const auto& p : parts) {
    if (p.rank() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < out_shape.size(); ++d)
      if (d != axis && p.dim(d) != out_shape[d])
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(out_shape));
    total_extent += p.dim(axis);
  }
  out_shape[axis] = total_extent;
  const auto split = split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.dim(axis);
    const auto pv = p.values();
    for (std::size_t o = 0; o < split.outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * e * split.inner), e * split.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total_extent + offset) * split.inner));
    extents.push_back(e);
    offset += e;
  }
  return custom_op(std::move(out_shape), std::move(out), parts,
                   [split, extents, total_extent](const GradContext& c) {
                     std::size_t offset = 0;
                     for (std::size_t pi = 0; pi < extents.size(); ++pi) {
                       const std::size_t e = extents[pi];
                       if (c.needs(pi)) {
                         auto g = c.in_grads[pi];
                         for (std::size_t o = 0; o < split.outer; ++o)
                           for (std::size_t i = 0; i < e * split.inner; ++i)
                             g[o * e * split.inner + i] +=
                                 c.out_grad[(o * total_extent + offset) * split.inner + i];
                       }
                       offset += e;
                     }
                   });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto split = split_at(a.shape(), axis);
  if (begin > end || end > split.extent)
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                     shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t e = end - begin;
  std::vector<double> out(split.outer * e * split.inner);
  const auto av = a.values();
  for (std::size_t o = 0; o < split.outer; ++o)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * split.extent + begin) * split.inner),
                e * split.inner, out.begin() + static_cast<std::ptrdiff_t>(o * e * split.inner));
  return custom_op(std::move(out_shape), std::move(out), {a}, [split, begin, e](const GradContext& c) {
    auto g = c.in_grads[0];
    for (std::size_t o = 0; o < split.outer; ++o)
      for (std::size_t i = 0; i < e * split.inner; ++i)
        g[(o * split.extent + begin) * split.inner + i] += c.out_grad[o * e * split.inner + i];
  });
}

Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices) {
  const auto split = split_at(a.shape(), axis);
  for (auto i : indices)
    if (i >= split.extent) throw ShapeError("index_select: index " + std::to_string(i) + " out of range");
  Shape out_shape = a.shape();
  out_shape[axis] = indices.size();
  const std::size_t e = indices.size();
  std::vector<double> out(split.outer * e * split.inner);
  const auto av = a.values();
  for (std::size_t o = 0; o < split.outer; ++o)
    for (std::size_t j = 0; j < e; ++j)
      std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * split.extent + indices[j]) * split.inner),
                  split.inner, out.begin() + static_cast<std::ptrdiff_t>((o * e + j) * split.inner));
  return custom_op(std::move(out_shape), std::move(out), {a}, [split, indices](const GradContext& c) {
    auto g = c.in_grads[0];
    const std::size_t e = indices.size();
    for (std::size_t o = 0; o < split.outer; ++o)
      for (std::size_t j = 0; j < e; ++j)
        for (std::size_t i = 0; i < split.inner; ++i)
          g[(o * split.extent + indices[j]) * split.inner + i] += c.out_grad[(o * e + j) * split.inner + i];
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return custom_op({}, {acc}, {a}, [](const GradContext& c) {
    const double g = c.out_grad[0];
    for (auto& x : c.in_grads[0]) x += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return mul(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const auto split = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = 1;
  std::vector<double> out(split.outer * split.inner, 0.0);
  const auto av = a.values();
  for (std::size_t o = 0; o < split.outer; ++o)
    for (std::size_t e = 0; e < split.extent; ++e)
      for (std::size_t i = 0; i < split.inner; ++i)
        out[o * split.inner + i] += av[(o * split.extent + e) * split.inner + i];
  return custom_op(std::move(out_shape), std::move(out), {a}, [split](const GradContext& c) {
    auto g = c.in_grads[0];
    for (std::size_t o = 0; o < split.outer; ++o)
      for (std::size_t e = 0; e < split.extent; ++e)
        for (std::size_t i = 0; i < split.inner; ++i)
          g[(o * split.extent + e) * split.inner + i] += c.out_grad[o * split.inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const auto extent = split_at(a.shape(), axis).extent;
  if (extent == 0) throw ShapeError("mean over an empty axis");
  return mul(sum(a, axis), 1.0 / static_cast<double>(extent));
}

Tensor max(const Tensor& a, std::size_t axis) {
  const auto split = split_at(a.shape(), axis);
  if (split.extent == 0) throw ShapeError("max over an empty axis");
  Shape out_shape = a.shape();
  out_shape[axis] = 1;
  std::vector<double> out(split.outer * split.inner);
  std::vector<std::size_t> arg(out.size(), 0);
  const auto av = a.values();
  for (std::size_t o = 0; o < split.outer; ++o)
    for (std::size_t i = 0; i < split.inner; ++i) {
      std::size_t best = 0;
      double bv = av[(o * split.extent) * split.inner + i];
      for (std::size_t e = 1; e < split.extent; ++e) {
        const double v = av[(o * split.extent + e) * split.inner + i];
        if (v > bv) {
          bv = v;
          best = e;
        }
      }
      out[o * split.inner + i] = bv;
      arg[o * split.inner + i] = (o * split.extent + best) * split.inner + i;
    }
  return custom_op(std::move(out_shape), std::move(out), {a}, [arg](const GradContext& c) {
    auto g = c.in_grads[0];
    for (std::size_t j = 0; j < arg.size(); ++j) g[arg[j]] += c.out_grad[j];
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto split = split_at(a.shape(), axis);
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t o = 0; o < split.outer; ++o)
    for (std::size_t i = 0; i < split.inner; ++i) {
      auto at = [&](std::size_t e) { return (o * split.extent + e) * split.inner + i; };
      double m = -INFINITY;
      for (std::size_t e = 0; e < split.extent; ++e) m = std::max(m, av[at(e)]);
      double z = 0.0;
      for (std::size_t e = 0; e < split.extent; ++e) {
        out[at(e)] = std::exp(av[at(e)] - m);
        z += out[at(e)];
      }
      for (std::size_t e = 0; e < split.extent; ++e) out[at(e)] /= z;
    }
  return custom_op(a.shape(), std::move(out), {a}, [split](const GradContext& c) {
    auto g = c.in_grads[0];
    const auto y = c.out_value;
    const auto dy = c.out_grad;
    for (std::size_t o = 0; o < split.outer; ++o)
      for (std::size_t i = 0; i < split.inner; ++i) {
        auto at = [&](std::size_t e) { return (o * split.extent + e) * split.inner + i; };
        double dot = 0.0;
        for (std::size_t e = 0; e < split.extent; ++e) dot += dy[at(e)] * y[at(e)];
        for (std::size_t e = 0; e < split.extent; ++e) g[at(e)] += y[at(e)] * (dy[at(e)] - dot);
      }
  });
}

Tensor layer_norm(const Tensor& a, double eps) {
  if (a.rank() == 0) throw ShapeError("layer_norm needs at least one axis");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  const auto av = a.values();
  std::vector<double> out(a.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += x[i];
    m /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - m) * (x[i] - m);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = (x[i] - m) * is;
  }
  return custom_op(a.shape(), std::move(out), {a}, [n, rows, inv_std](const GradContext& c) {
    const auto y = c.out_value;
    const auto dy = c.out_grad;
    auto g = c.in_grads[0];
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      double mean_dy = 0.0, mean_dy_y = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mean_dy += dy[r * n + i];
        mean_dy_y += dy[r * n + i] * y[r * n + i];
      }
      mean_dy *= inv_n;
      mean_dy_y *= inv_n;
      const double is = (*inv_std)[r];
      for (std::size_t i = 0; i < n; ++i)
        g[r * n + i] += is * (dy[r * n + i] - mean_dy - y[r * n + i] * mean_dy_y);
    }
  });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps) {
  Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
                             true);
  return finite_diff_check([&] { return f(leaf); }, {leaf}, eps);
}

double finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double eps, const std::function<bool(std::size_t, std::size_t)>& include) {
  std::vector<Tensor> leaves = params;
  for (auto& p : leaves) {
    if (!p.is_leaf()) throw Error(ErrorCode::validation, "gradient check parameters must be leaves");
    p.zero_grad();
  }
  Tensor loss = f();
  backward(loss);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < leaves.size(); ++pi) {
    auto& p = leaves[pi];
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    if (analytic.empty()) analytic.assign(p.numel(), 0.0);
    auto data = p.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (include && !include(pi, i)) continue;
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = f().item();
      data[i] = saved - eps;
      const double down = f().item();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace sketchmotion::ad
