#pragma once

// Shape-checked numeric arrays with reverse-mode differentiation.
// Values are double precision; a Graph records one forward pass
// (define-by-run) and replays it backwards exactly once.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shmd/errors.hpp"

namespace shmd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed; empty means all-zero
  bool requires_grad = false;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel_of(shape) != data.size())
      throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::size_t n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }

  double item() const {
    if (numel() != 1)
      throw ShapeError("item: tensor with shape " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    return *this;
  }

  // Gradient as accumulated by the last backward pass (zeros if untouched).
  std::vector<double> grad() const {
    if (node_->grad.size() == node_->value.size()) return node_->grad;
    return std::vector<double>(node_->value.size(), 0.0);
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Value copy that does not participate in differentiation.
  Tensor detach() const { return from(node_->shape, node_->value, false); }

  detail::NodePtr handle() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
  detail::NodePtr node_;
};

// One recorded forward pass. Constructing a Graph makes it the current
// recording target for the calling thread; ops record backward rules onto
// it while any of their inputs require grad. A graph can be replayed
// backwards once.
class Graph {
 public:
  Graph() : prev_(tls_current()) { tls_current() = this; }
  ~Graph() { tls_current() = prev_; }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* current() { return tls_current(); }

  bool recording() const { return !consumed_; }

  void record(std::function<void()> backward_fn) {
    tape_.push_back(std::move(backward_fn));
  }

  void backward(const Tensor& loss) {
    if (consumed_) throw GraphError("backward: this recording was already consumed");
    if (tape_.empty()) throw GraphError("backward: nothing was recorded on this graph");
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    consumed_ = true;
    auto n = loss.handle();
    n->ensure_grad();
    n->grad[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  }

 private:
  static Graph*& tls_current() {
    thread_local Graph* g = nullptr;
    return g;
  }

  std::vector<std::function<void()>> tape_;
  bool consumed_ = false;
  Graph* prev_ = nullptr;
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": produced non-finite values");
}

inline Graph* recorder(std::initializer_list<const Tensor*> inputs) {
  Graph* g = Graph::current();
  if (!g || !g->recording()) return nullptr;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return g;
  return nullptr;
}

// Trailing-dimension broadcast: shapes are right-aligned, each dim must
// match or be 1. Strides of broadcast dims are zeroed so the odometer
// walk revisits the same input element.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
  bool same_shape = false;
};

inline BroadcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  if (a == b) {
    BroadcastPlan p;
    p.out = a;
    p.same_shape = true;
    return p;
  }
  std::size_t rank = std::max(a.size(), b.size());
  BroadcastPlan p;
  p.out.resize(rank);
  std::vector<std::size_t> da(rank, 1), db(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    if (i < a.size()) da[rank - 1 - i] = a[a.size() - 1 - i];
    if (i < b.size()) db[rank - 1 - i] = b[b.size() - 1 - i];
  }
  for (std::size_t d = 0; d < rank; ++d) {
    if (da[d] == db[d]) p.out[d] = da[d];
    else if (da[d] == 1) p.out[d] = db[d];
    else if (db[d] == 1) p.out[d] = da[d];
    else
      throw ShapeError(std::string(op) + ": cannot broadcast shapes " + shape_str(a) +
                       " and " + shape_str(b));
  }
  auto strides_for = [&](const std::vector<std::size_t>& dims) {
    std::vector<std::size_t> st(rank, 0);
    std::size_t s = 1;
    for (std::size_t d = rank; d-- > 0;) {
      st[d] = (dims[d] == 1) ? 0 : s;
      s *= dims[d];
    }
    return st;
  };
  p.stride_a = strides_for(da);
  p.stride_b = strides_for(db);
  return p;
}

// Visits every output element with the flat offsets of both inputs.
template <class F>
inline void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  std::size_t n = numel_of(p.out);
  if (p.same_shape) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  std::size_t rank = p.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ai = 0, bi = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ai, bi);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ai += p.stride_a[d];
      bi += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ai -= p.stride_a[d] * p.out[d];
      bi -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class Bwd>
inline Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Bwd bwd) {
  BroadcastPlan plan = broadcast_plan(a.shape(), b.shape(), op);
  std::vector<double> out(numel_of(plan.out));
  const auto& va = a.value();
  const auto& vb = b.value();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
    out[o] = fwd(va[ai], vb[bi]);
  });
  check_finite(out, op);
  Tensor result = Tensor::from(plan.out, std::move(out));
  if (Graph* g = recorder({&a, &b})) {
    result.set_requires_grad(true);
    auto an = a.handle(), bn = b.handle(), on = result.handle();
    g->record([an, bn, on, plan = std::move(plan), bwd] {
      const bool need_a = an->requires_grad, need_b = bn->requires_grad;
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      for_each_broadcast(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
        double go = on->grad[o];
        auto [da, db] = bwd(an->value[ai], bn->value[bi], go);
        if (need_a) an->grad[ai] += da;
        if (need_b) bn->grad[bi] += db;
      });
    });
  }
  return result;
}

template <class Fwd, class Bwd>
inline Tensor unary_op(const Tensor& a, const char* op, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.numel());
  const auto& va = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(va[i]);
  check_finite(out, op);
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (Graph* g = recorder({&a})) {
    result.set_requires_grad(true);
    auto an = a.handle(), on = result.handle();
    g->record([an, on, bwd] {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i)
        an->grad[i] += bwd(an->value[i], on->value[i], on->grad[i]);
    });
  }
  return result;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double go) { return std::pair<double, double>(go, go); });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double go) { return std::pair<double, double>(go, -go); });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double go) { return std::pair<double, double>(go * y, go * x); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y, double go) { return go * (1.0 - y * y); });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y, double go) { return go * y * (1.0 - y); });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double, double go) { return x > 0.0 ? go : 0.0; });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto& va = a.value();
  const auto& vb = b.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = va[i * k + p];
      const double* brow = &vb[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  detail::check_finite(out, "matmul");
  Tensor result = Tensor::from({m, n}, std::move(out));
  if (Graph* g = detail::recorder({&a, &b})) {
    result.set_requires_grad(true);
    auto an = a.handle(), bn = b.handle(), on = result.handle();
    g->record([an, bn, on, m, k, n] {
      if (an->requires_grad) {
        an->ensure_grad();  // dA += dC * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = on->grad[i * n + j];
            for (std::size_t p = 0; p < k; ++p)
              an->grad[i * k + p] += gij * bn->value[p * n + j];
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();  // dB += A^T * dC
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = an->value[i * k + p];
            for (std::size_t j = 0; j < n; ++j)
              bn->grad[p * n + j] += aip * on->grad[i * n + j];
          }
      }
    });
  }
  return result;
}

// Softmax along `axis`, computed with max-subtraction so large scores
// (magnitude 1e3 and beyond) do not overflow.
inline Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(a.shape()));
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1, n = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  std::vector<double> out(a.numel());
  const auto& v = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = v[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, v[base + j * inner]);
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double e = std::exp(v[base + j * inner] - mx);
        out[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= denom;
    }
  detail::check_finite(out, "softmax");
  Tensor result = Tensor::from(s, std::move(out));
  if (Graph* g = detail::recorder({&a})) {
    result.set_requires_grad(true);
    auto an = a.handle(), on = result.handle();
    g->record([an, on, outer, inner, n] {
      an->ensure_grad();
      // dx = y * (dy - sum_axis(dy * y))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            dot += on->grad[base + j * inner] * on->value[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = base + j * inner;
            an->grad[k] += on->value[k] * (on->grad[k] - dot);
          }
        }
    });
  }
  return result;
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  if (!std::isfinite(s)) throw NumericError("sum: produced non-finite values");
  Tensor result = Tensor::from({1}, {s});
  if (Graph* g = detail::recorder({&a})) {
    result.set_requires_grad(true);
    auto an = a.handle(), on = result.handle();
    g->record([an, on] {
      an->ensure_grad();
      for (double& gi : an->grad) gi += on->grad[0];
    });
  }
  return result;
}

inline Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double x : a.value()) s += x;
  s /= static_cast<double>(a.numel());
  if (!std::isfinite(s)) throw NumericError("mean: produced non-finite values");
  Tensor result = Tensor::from({1}, {s});
  if (Graph* g = detail::recorder({&a})) {
    result.set_requires_grad(true);
    auto an = a.handle(), on = result.handle();
    const double inv = 1.0 / static_cast<double>(a.numel());
    g->record([an, on, inv] {
      an->ensure_grad();
      for (double& gi : an->grad) gi += on->grad[0] * inv;
    });
  }
  return result;
}

// Contiguous slice [start, start+len) along `axis`.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank())
    throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(a.shape()));
  const Shape& s = a.shape();
  if (len == 0 || start + len > s[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for shape " + shape_str(s));
  std::size_t outer = 1, inner = 1, n = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  const auto& v = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(&v[(o * n + start) * inner], len * inner, &out[o * len * inner]);
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  if (Graph* g = detail::recorder({&a})) {
    result.set_requires_grad(true);
    auto an = a.handle(), on = result.handle();
    g->record([an, on, outer, inner, n, start, len] {
      an->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = &on->grad[o * len * inner];
        double* dst = &an->grad[(o * n + start) * inner];
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return result;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no tensors given");
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(s0));
  std::size_t total_axis = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != s0.size())
      throw ShapeError("concat: rank mismatch between " + shape_str(s0) + " and " +
                       shape_str(t.shape()));
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (d != axis && t.shape()[d] != s0[d])
        throw ShapeError("concat: shapes " + shape_str(s0) + " and " + shape_str(t.shape()) +
                         " differ outside axis " + std::to_string(axis));
    total_axis += t.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  Shape out_shape = s0;
  out_shape[axis] = total_axis;
  std::vector<double> out(outer * total_axis * inner);
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t n = t.shape()[axis];
    const auto& v = t.value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(&v[o * n * inner], n * inner, &out[(o * total_axis + offset) * inner]);
    offset += n;
  }
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  bool any_grad = false;
  for (const Tensor& t : parts) any_grad = any_grad || t.requires_grad();
  Graph* g = Graph::current();
  if (g && g->recording() && any_grad) {
    result.set_requires_grad(true);
    std::vector<detail::NodePtr> nodes;
    std::vector<std::size_t> ns;
    for (const Tensor& t : parts) {
      nodes.push_back(t.handle());
      ns.push_back(t.shape()[axis]);
    }
    auto on = result.handle();
    g->record([nodes, ns, on, outer, inner, total_axis] {
      std::size_t off = 0;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        const std::size_t n = ns[p];
        if (nodes[p]->requires_grad) {
          nodes[p]->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = &on->grad[(o * total_axis + off) * inner];
            double* dst = &nodes[p]->grad[o * n * inner];
            for (std::size_t i = 0; i < n * inner; ++i) dst[i] += src[i];
          }
        }
        off += n;
      }
    });
  }
  return result;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Tensor result = Tensor::from(std::move(shape), a.value());
  if (Graph* g = detail::recorder({&a})) {
    result.set_requires_grad(true);
    auto an = a.handle(), on = result.handle();
    g->record([an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return result;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
};

// Central finite differences against the recorded gradient. `f` must be
// scalar-valued; relative error is |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
inline GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                                  double step = 1e-5, double tolerance = 1e-4) {
  if (step <= 0.0) throw ConfigError("grad_check: step must be positive");
  Tensor x = Tensor::from(x0.shape(), x0.value(), true);
  std::vector<double> g_ad;
  {
    Graph g;
    Tensor loss = f(x);
    if (loss.numel() != 1)
      throw ShapeError("grad_check: f must be scalar-valued, got shape " +
                       shape_str(loss.shape()));
    g.backward(loss);
    g_ad = x.grad();
  }
  const std::vector<double> base = x0.value();
  GradCheckReport report;
  for (std::size_t i = 0; i < base.size(); ++i) {
    x.value()[i] = base[i] + step;
    const double fp = f(x).item();
    x.value()[i] = base[i] - step;
    const double fm = f(x).item();
    x.value()[i] = base[i];
    const double g_fd = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::fabs(g_ad[i]), std::fabs(g_fd), 1e-8});
    report.max_rel_error = std::max(report.max_rel_error, std::fabs(g_ad[i] - g_fd) / denom);
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace shmd
