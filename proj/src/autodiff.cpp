#include "sdre/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "sdre/kernels.hpp"

namespace sdre::ad {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Multiply: return "multiply";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::B2Bsqrt: return "b2bsqrt";
    case OpKind::Relu: return "relu";
    case OpKind::SoftmaxLast: return "softmax-last-axis";
    case OpKind::Log: return "log";
    case OpKind::SumAxis: return "sum-axis";
    case OpKind::Scale: return "scale";
    case OpKind::Concat: return "concat";
    case OpKind::LayerNormLast: return "layernorm-last-axis";
    case OpKind::LogSumExpLast: return "logsumexp-last-axis";
    case OpKind::Reshape: return "reshape";
    case OpKind::Slice: return "slice";
    case OpKind::GatherRows: return "gather-rows";
  }
  return "unknown";
}

const Array& Var::value() const {
  if (!tape_) throw std::logic_error("Var: use of an unbound variable");
  return tape_->value(id_);
}

const Array& GradientMap::at(const Parameter& p) const {
  auto it = grads_.find(&p);
  if (it == grads_.end()) {
    throw std::out_of_range("GradientMap: parameter '" + p.name + "' was not bound to the tape");
  }
  return it->second;
}

Var Tape::constant(Array value) {
  nodes_.push_back(Node{OpKind::Constant, std::move(value), Array(), false, false, {}, nullptr,
                        nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  nodes_.push_back(Node{OpKind::Leaf, p.value, Array(), false, true, {}, nullptr, &p});
  bound_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Array value, std::vector<std::size_t> inputs, BackwardFn backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](std::size_t i) { return nodes_.at(i).needs_grad; });
  nodes_.push_back(Node{kind, std::move(value), Array(), false, needs, std::move(inputs),
                        needs ? std::move(backward) : BackwardFn{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Array& Tape::grad(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.has_grad) {
    n.grad = Array(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

GradientMap Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Array();
  }
  trace_.clear();
  grad(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    trace_.push_back(i);
    if (n.backward) n.backward(*this, n.grad);
  }
  GradientMap out;
  for (const auto& [param, id] : bound_) {
    Node& n = nodes_[id];
    out.grads_.emplace(param, n.has_grad ? n.grad : Array(n.value.shape(), 0.0));
  }
  return out;
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound variable");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || !a.valid()) {
    throw std::logic_error("operation mixes variables from different tapes");
  }
  return *a.tape();
}

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(to_string(kind)) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const std::string& why) {
  throw std::invalid_argument(std::string(to_string(kind)) + ": " + why + " (shape " +
                              shape_str(a) + ")");
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

// Splits a shape around one axis into (outer, axis, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

template <typename Fwd, typename Deriv>
Var unary(const Var& x, OpKind kind, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(x);
  const Array& xv = x.value();
  Array out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t xi = x.id();
  const std::size_t self = t.size();
  return t.record(kind, std::move(out), {xi}, [xi, self, deriv](Tape& tp, const Array& g) {
    const Array& xv = tp.value(xi);
    const Array& yv = tp.value(self);
    Array& dx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b, bool transpose_b) {
  Tape& t = tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t ai = a.id(), bi = b.id();

  if (as.size() == 3 && bs.size() == 3) {
    const std::size_t batch = as[0], m = as[1], k = as[2];
    if (bs[0] != batch || (transpose_b ? bs[2] : bs[1]) != k) shape_error(OpKind::Matmul, as, bs);
    const std::size_t n = transpose_b ? bs[1] : bs[2];
    Array out(Shape{batch, m, n});
    kernels::gemm_batched({m, n, k, false, transpose_b}, batch, a.value().data(),
                          b.value().data(), out.data(), false);
    return t.record(OpKind::Matmul, std::move(out), {ai, bi}, [=](Tape& tp, const Array& g) {
      if (tp.needs_grad(ai)) {
        kernels::gemm_batched({m, k, n, false, !transpose_b}, batch, g.data(),
                              tp.value(bi).data(), tp.grad(ai).data(), true);
      }
      if (tp.needs_grad(bi)) {
        if (transpose_b) {
          kernels::gemm_batched({n, k, m, true, false}, batch, g.data(), tp.value(ai).data(),
                                tp.grad(bi).data(), true);
        } else {
          kernels::gemm_batched({k, n, m, true, false}, batch, tp.value(ai).data(), g.data(),
                                tp.grad(bi).data(), true);
        }
      }
    });
  }

  if (as.size() < 2 || bs.size() != 2) shape_error(OpKind::Matmul, as, bs);
  const std::size_t k = as.back();
  if ((transpose_b ? bs[1] : bs[0]) != k) shape_error(OpKind::Matmul, as, bs);
  const std::size_t n = transpose_b ? bs[0] : bs[1];
  const std::size_t m = a.value().size() / k;
  Shape os(as.begin(), as.end() - 1);
  os.push_back(n);
  Array out(os);
  kernels::gemm({m, n, k, false, transpose_b}, a.value().data(), b.value().data(), out.data(),
                false);
  return t.record(OpKind::Matmul, std::move(out), {ai, bi}, [=](Tape& tp, const Array& g) {
    if (tp.needs_grad(ai)) {
      kernels::gemm({m, k, n, false, !transpose_b}, g.data(), tp.value(bi).data(),
                    tp.grad(ai).data(), true);
    }
    if (tp.needs_grad(bi)) {
      if (transpose_b) {
        kernels::gemm({n, k, m, true, false}, g.data(), tp.value(ai).data(), tp.grad(bi).data(),
                      true);
      } else {
        kernels::gemm({k, n, m, true, false}, tp.value(ai).data(), g.data(), tp.grad(bi).data(),
                      true);
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (!is_suffix(a.shape(), b.shape())) shape_error(OpKind::Add, a.shape(), b.shape());
  Array out = a.value();
  const Array& bv = b.value();
  const std::size_t block = bv.size();
  const std::size_t reps = out.size() / block;
  for (std::size_t r = 0; r < reps; ++r) {
    double* o = out.data() + r * block;
    for (std::size_t i = 0; i < block; ++i) o[i] += bv[i];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(OpKind::Add, std::move(out), {ai, bi}, [=](Tape& tp, const Array& g) {
    if (tp.needs_grad(ai)) {
      Array& da = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      double* db = tp.grad(bi).data();
      for (std::size_t r = 0; r < reps; ++r) {
        const double* gr = g.data() + r * block;
        for (std::size_t i = 0; i < block; ++i) db[i] += gr[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var multiply(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (!is_suffix(a.shape(), b.shape())) shape_error(OpKind::Multiply, a.shape(), b.shape());
  Array out = a.value();
  const Array& bv = b.value();
  const std::size_t block = bv.size();
  const std::size_t reps = out.size() / block;
  for (std::size_t r = 0; r < reps; ++r) {
    double* o = out.data() + r * block;
    for (std::size_t i = 0; i < block; ++i) o[i] *= bv[i];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(OpKind::Multiply, std::move(out), {ai, bi}, [=](Tape& tp, const Array& g) {
    const double* av = tp.value(ai).data();
    const double* bv = tp.value(bi).data();
    if (tp.needs_grad(ai)) {
      double* da = tp.grad(ai).data();
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < block; ++i) da[r * block + i] += g[r * block + i] * bv[i];
      }
    }
    if (tp.needs_grad(bi)) {
      double* db = tp.grad(bi).data();
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < block; ++i) db[i] += g[r * block + i] * av[r * block + i];
      }
    }
  });
}

Var sigmoid(const Var& x) {
  return unary(
      x, OpKind::Sigmoid, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(
      x, OpKind::Tanh, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var b2bsqrt(const Var& x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("b2bsqrt: alpha must be positive");
  const double sa = std::sqrt(alpha);
  return unary(
      x, OpKind::B2Bsqrt,
      [alpha, sa](double v) {
        const double mag = std::sqrt(alpha + std::abs(v)) - sa;
        return v < 0.0 ? -mag : mag;
      },
      // Continuous at the origin, where it equals 1 / (2 sqrt(alpha)).
      [alpha](double v, double) { return 0.5 / std::sqrt(alpha + std::abs(v)); });
}

Var relu(const Var& x) {
  return unary(
      x, OpKind::Relu, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var log(const Var& x) {
  for (double v : x.value().values()) {
    if (!(v > 0.0)) {
      throw std::domain_error("log: nonpositive input " + std::to_string(v) + " in shape " +
                              shape_str(x.shape()));
    }
  }
  return unary(
      x, OpKind::Log, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Var scale(const Var& x, double c) {
  return unary(
      x, OpKind::Scale, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var softmax_last(const Var& x) {
  Tape& t = tape_of(x);
  const std::size_t cols = last_dim(x.shape());
  const std::size_t rows = x.value().size() / cols;
  Array out(x.shape());
  kernels::softmax_rows(x.value().data(), out.data(), rows, cols);
  const std::size_t xi = x.id(), self = t.size();
  return t.record(OpKind::SoftmaxLast, std::move(out), {xi}, [=](Tape& tp, const Array& g) {
    const Array& y = tp.value(self);
    Array& dx = tp.grad(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[o + j] * y[o + j];
      for (std::size_t j = 0; j < cols; ++j) dx[o + j] += y[o + j] * (g[o + j] - dot);
    }
  });
}

Var logsumexp_last(const Var& x) {
  Tape& t = tape_of(x);
  if (x.shape().empty()) shape_error(OpKind::LogSumExpLast, x.shape(), "needs rank >= 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.value().size() / cols;
  Array out(Shape(x.shape().begin(), x.shape().end() - 1));
  kernels::logsumexp_rows(x.value().data(), out.data(), rows, cols);
  const std::size_t xi = x.id();
  return t.record(OpKind::LogSumExpLast, std::move(out), {xi}, [=](Tape& tp, const Array& g) {
    const Array& xv = tp.value(xi);
    Array p(xv.shape());
    kernels::softmax_rows(xv.data(), p.data(), rows, cols);
    Array& dx = tp.grad(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) dx[r * cols + j] += g[r] * p[r * cols + j];
    }
  });
}

Var layernorm_last(const Var& x, double eps) {
  Tape& t = tape_of(x);
  if (x.shape().empty()) shape_error(OpKind::LayerNormLast, x.shape(), "needs rank >= 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.value().size() / cols;
  Array out(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  kernels::layernorm_rows(x.value().data(), out.data(), inv_std->data(), rows, cols, eps);
  const std::size_t xi = x.id(), self = t.size();
  return t.record(OpKind::LayerNormLast, std::move(out), {xi}, [=](Tape& tp, const Array& g) {
    kernels::layernorm_rows_backward(tp.value(self).data(), inv_std->data(), g.data(),
                                     tp.grad(xi).data(), rows, cols);
  });
}

Var sum_axis(const Var& x, std::size_t axis) {
  Tape& t = tape_of(x);
  const Shape& s = x.shape();
  if (axis >= s.size()) shape_error(OpKind::SumAxis, s, "axis " + std::to_string(axis) + " out of range");
  const AxisSplit sp = split_at(s, axis);
  Shape os = s;
  os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  Array out(os, 0.0);
  const Array& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.n; ++i) {
      const double* src = xv.data() + (o * sp.n + i) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
    }
  }
  const std::size_t xi = x.id();
  return t.record(OpKind::SumAxis, std::move(out), {xi}, [=](Tape& tp, const Array& g) {
    Array& dx = tp.grad(xi);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.n; ++i) {
        double* dst = dx.data() + (o * sp.n + i) * sp.inner;
        const double* src = g.data() + o * sp.inner;
        for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
      }
    }
  });
}

Var sum_all(const Var& x) {
  return sum_axis(reshape(x, Shape{x.value().size()}), 0);
}

Var mean_all(const Var& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input list");
  Tape& t = tape_of(xs.front());
  const Shape& s0 = xs.front().shape();
  if (axis >= s0.size()) shape_error(OpKind::Concat, s0, "axis " + std::to_string(axis) + " out of range");
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& x : xs) {
    tape_of(xs.front(), x);
    const Shape& s = x.shape();
    if (s.size() != s0.size()) shape_error(OpKind::Concat, s0, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) shape_error(OpKind::Concat, s0, s);
    }
    ids.push_back(x.id());
    widths.push_back(s[axis]);
    total += s[axis];
  }
  Shape os = s0;
  os[axis] = total;
  const AxisSplit sp = split_at(os, axis);
  Array out(os);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    const Array& xv = xs[q].value();
    const std::size_t w = widths[q] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(xv.data() + o * w, w, out.data() + (o * sp.n) * sp.inner + offset);
    }
    offset += w;
  }
  return t.record(OpKind::Concat, std::move(out), ids, [=](Tape& tp, const Array& g) {
    std::size_t off = 0;
    for (std::size_t q = 0; q < ids.size(); ++q) {
      const std::size_t w = widths[q] * sp.inner;
      if (tp.needs_grad(ids[q])) {
        Array& dx = tp.grad(ids[q]);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* src = g.data() + (o * sp.n) * sp.inner + off;
          double* dst = dx.data() + o * w;
          for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
        }
      }
      off += w;
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tape& t = tape_of(x);
  if (numel(shape) != x.value().size()) shape_error(OpKind::Reshape, x.shape(), shape);
  const std::size_t xi = x.id();
  return t.record(OpKind::Reshape, x.value().reshaped(std::move(shape)), {xi},
                  [xi](Tape& tp, const Array& g) {
                    Array& dx = tp.grad(xi);
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                  });
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
  Tape& t = tape_of(x);
  const Shape& s = x.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    shape_error(OpKind::Slice, s,
                "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                    ") on axis " + std::to_string(axis));
  }
  const AxisSplit sp = split_at(s, axis);
  Shape os = s;
  os[axis] = length;
  Array out(os);
  const std::size_t w = length * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(x.value().data() + (o * sp.n + start) * sp.inner, w, out.data() + o * w);
  }
  const std::size_t xi = x.id();
  return t.record(OpKind::Slice, std::move(out), {xi}, [=](Tape& tp, const Array& g) {
    Array& dx = tp.grad(xi);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = dx.data() + (o * sp.n + start) * sp.inner;
      const double* src = g.data() + o * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

Var gather_rows(const Var& x, const std::vector<std::size_t>& rows) {
  Tape& t = tape_of(x);
  const Shape& s = x.shape();
  if (s.empty()) shape_error(OpKind::GatherRows, s, "needs rank >= 1");
  const std::size_t width = x.value().size() / s[0];
  Shape os = s;
  os[0] = rows.size();
  Array out(os);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= s[0]) shape_error(OpKind::GatherRows, s, "row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(x.value().data() + rows[r] * width, width, out.data() + r * width);
  }
  const std::size_t xi = x.id();
  return t.record(OpKind::GatherRows, std::move(out), {xi}, [=](Tape& tp, const Array& g) {
    Array& dx = tp.grad(xi);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double* dst = dx.data() + rows[r] * width;
      const double* src = g.data() + r * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

double finite_diff_check(const ScalarGraph& f, std::vector<Parameter>& params, double eps) {
  std::vector<Parameter*> ptrs;
  for (Parameter& p : params) ptrs.push_back(&p);
  return finite_diff_check(f, ptrs, eps);
}

double finite_diff_check(const ScalarGraph& f, const std::vector<Parameter*>& params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw std::invalid_argument("finite_diff_check: eps must lie in (0, 1e-2]");
  }
  auto evaluate = [&](bool with_backward, GradientMap* grads) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (Parameter* p : params) vars.push_back(tape.parameter(*p));
    Var loss = f(tape, vars);
    const double v = loss.value().item();
    if (with_backward) *grads = tape.backward(loss);
    return v;
  };

  GradientMap analytic;
  evaluate(true, &analytic);
  double worst = 0.0;
  for (Parameter* p : params) {
    const Array g = analytic.at(*p);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate(false, nullptr);
      p->value[i] = saved - eps;
      const double down = evaluate(false, nullptr);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(g[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace sdre::ad
