#include "sage/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "sage/special.hpp"

namespace sage {

using detail::TensorImpl;

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("shape " + shape_str(shape) + " does not match value count " +
                         std::to_string(values.size()));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    return impl;
}

void check_finite(const TensorImpl& t, const char* op) {
    for (double v : t.values) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string("non-finite value produced by op '") + op + "'");
        }
    }
}

void ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
}

// Builds the output node; wires the graph only when recording is on and at
// least one parent is tracked.
Tensor make_node(Shape shape, std::vector<double> values, const char* op,
                 std::vector<std::shared_ptr<TensorImpl>> parents,
                 std::function<void(TensorImpl&)> backward_fn) {
    auto impl = make_impl(std::move(shape), std::move(values));
    check_finite(*impl, op);
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                track = true;
                break;
            }
        }
    }
    if (track) {
        impl->requires_grad = true;
        impl->is_leaf = false;
        impl->parents = std::move(parents);
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(impl));
}

const std::shared_ptr<TensorImpl>& impl_of(const Tensor& t) {
    if (!t.defined()) throw ShapeError("operation on an undefined tensor");
    return t.impl();
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(const Shape& shape) {
    return Tensor(make_impl(shape, std::vector<double>(shape_numel(shape), 0.0)));
}

Tensor Tensor::full(const Shape& shape, double value) {
    return Tensor(make_impl(shape, std::vector<double>(shape_numel(shape), value)));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
    auto impl = make_impl(shape, std::move(values));
    check_finite(*impl, "from");
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from(Shape{}, {value}); }

const Shape& Tensor::shape() const { return impl_of(*this)->shape; }
std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl_of(*this)->values.size()); }
const std::vector<double>& Tensor::values() const { return impl_of(*this)->values; }
std::vector<double>& Tensor::values_mut() const { return impl_of(*this)->values; }

double Tensor::item() const {
    const auto& v = values();
    if (v.size() != 1) throw ShapeError("item() on tensor with numel " + std::to_string(v.size()));
    return v[0];
}

double Tensor::at(std::int64_t i) const { return values().at(static_cast<std::size_t>(i)); }

Tensor Tensor::clone() const {
    return Tensor::from(shape(), values());
}

void Tensor::set_requires_grad(bool on) {
    auto& impl = *impl_of(*this);
    if (!impl.is_leaf) throw std::logic_error("set_requires_grad on a non-leaf tensor");
    impl.requires_grad = on;
}

bool Tensor::requires_grad() const { return impl_of(*this)->requires_grad; }
bool Tensor::has_grad() const { return !impl_of(*this)->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    auto& impl = *impl_of(*this);
    if (impl.grad.empty()) {
        throw std::logic_error("grad() requested but no gradient has been accumulated");
    }
    return impl.grad;
}

void Tensor::zero_grad() { impl_of(*this)->grad.clear(); }

void Tensor::backward() {
    auto root = impl_of(*this);
    if (root->values.size() != 1) {
        throw ShapeError("backward() requires a scalar, got shape " + shape_str(root->shape));
    }
    if (root->graph_consumed) {
        throw std::logic_error("backward() on a graph that was already freed");
    }

    // Iterative three-colour DFS: postorder list + cycle detection.
    enum class Mark : unsigned char { InProgress, Done };
    std::unordered_map<TensorImpl*, Mark> mark;
    std::vector<TensorImpl*> order;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    mark[root.get()] = Mark::InProgress;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* parent = node->parents[next].get();
            ++next;
            auto it = mark.find(parent);
            if (it == mark.end()) {
                mark[parent] = Mark::InProgress;
                stack.emplace_back(parent, 0);
            } else if (it->second == Mark::InProgress) {
                throw NumericalError("cycle detected in computation graph");
            }
        } else {
            mark[node] = Mark::Done;
            order.push_back(node);
            stack.pop_back();
        }
    }

    ensure_grad(*root);
    root->grad[0] += 1.0;

    // Postorder lists parents before children, so walk it backwards:
    // every node's consumers run before the node itself.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            node->backward_fn(*node);
        }
    }

    // Per-loss graphs: free edges and interior grads, keep leaf grads.
    for (TensorImpl* node : order) {
        if (!node->is_leaf) {
            node->parents.clear();
            node->backward_fn = nullptr;
            node->grad.clear();
            node->graph_consumed = true;
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise binary
// ---------------------------------------------------------------------------

namespace {

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary(const Tensor& ta, const Tensor& tb, BinOp op, const char* name) {
    auto a = impl_of(ta);
    auto b = impl_of(tb);
    const std::size_t na = a->values.size();
    const std::size_t nb = b->values.size();
    const bool a_scalar = (na == 1);
    const bool b_scalar = (nb == 1);
    if (!a_scalar && !b_scalar && a->shape != b->shape) {
        throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    // both-scalar case keeps the higher-rank shape so [1]-vectors survive
    const Shape& out_shape = !a_scalar ? a->shape
                             : !b_scalar
                                 ? b->shape
                                 : (a->shape.size() >= b->shape.size() ? a->shape : b->shape);
    const std::size_t n = std::max(na, nb);
    std::vector<double> out(n);
    const auto& av = a->values;
    const auto& bv = b->values;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[a_scalar ? 0 : i];
        const double y = bv[b_scalar ? 0 : i];
        switch (op) {
            case BinOp::Add: out[i] = x + y; break;
            case BinOp::Sub: out[i] = x - y; break;
            case BinOp::Mul: out[i] = x * y; break;
            case BinOp::Div: out[i] = x / y; break;
        }
    }
    return make_node(out_shape, std::move(out), name, {a, b}, [a, b, op, a_scalar, b_scalar, n](TensorImpl& self) {
        const auto& g = self.grad;
        if (a->requires_grad) {
            ensure_grad(*a);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t ia = a_scalar ? 0 : i;
                const double y = b->values[b_scalar ? 0 : i];
                switch (op) {
                    case BinOp::Add: a->grad[ia] += g[i]; break;
                    case BinOp::Sub: a->grad[ia] += g[i]; break;
                    case BinOp::Mul: a->grad[ia] += g[i] * y; break;
                    case BinOp::Div: a->grad[ia] += g[i] / y; break;
                }
            }
        }
        if (b->requires_grad) {
            ensure_grad(*b);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t ib = b_scalar ? 0 : i;
                const double x = a->values[a_scalar ? 0 : i];
                const double y = b->values[ib];
                switch (op) {
                    case BinOp::Add: b->grad[ib] += g[i]; break;
                    case BinOp::Sub: b->grad[ib] -= g[i]; break;
                    case BinOp::Mul: b->grad[ib] += g[i] * x; break;
                    case BinOp::Div: b->grad[ib] -= g[i] * x / (y * y); break;
                }
            }
        }
    });
}

// unary elementwise: f(value), df(value, out_value)
Tensor unary(const Tensor& ta, const char* name, double (*f)(double),
             double (*df)(double, double)) {
    auto a = impl_of(ta);
    const std::size_t n = a->values.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a->values[i]);
    return make_node(a->shape, std::move(out), name, {a}, [a, df](TensorImpl& self) {
        if (!a->requires_grad) return;
        ensure_grad(*a);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            a->grad[i] += self.grad[i] * df(a->values[i], self.values[i]);
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Div, "div"); }

Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor sub(const Tensor& a, double c) { return sub(a, Tensor::scalar(c)); }
Tensor sub(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
Tensor mul(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
Tensor div(const Tensor& a, double c) { return div(a, Tensor::scalar(c)); }
Tensor div(double c, const Tensor& a) { return div(Tensor::scalar(c), a); }

Tensor neg(const Tensor& a) {
    return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, "log", [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
    return unary(a, "abs", [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor lgamma(const Tensor& a) {
    return unary(a, "lgamma", [](double x) { return log_gamma(x); },
                 [](double x, double) { return sage::digamma(x); });
}

Tensor digamma(const Tensor& a) {
    return unary(a, "digamma", [](double x) { return sage::digamma(x); },
                 [](double x, double) { return trigamma(x); });
}

Tensor clamp(const Tensor& ta, double lo, double hi) {
    auto a = impl_of(ta);
    const std::size_t n = a->values.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(hi, std::max(lo, a->values[i]));
    return make_node(a->shape, std::move(out), "clamp", {a}, [a, lo, hi](TensorImpl& self) {
        if (!a->requires_grad) return;
        ensure_grad(*a);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double x = a->values[i];
            if (x > lo && x < hi) a->grad[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// reductions / broadcasts
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& ta) {
    auto a = impl_of(ta);
    double s = 0.0;
    for (double v : a->values) s += v;
    return make_node(Shape{}, {s}, "sum", {a}, [a](TensorImpl& self) {
        if (!a->requires_grad) return;
        ensure_grad(*a);
        const double g = self.grad[0];
        for (double& gi : a->grad) gi += g;
    });
}

Tensor mean(const Tensor& ta) {
    auto a = impl_of(ta);
    const double n = static_cast<double>(a->values.size());
    if (n == 0) throw ShapeError("mean of an empty tensor");
    return mul(sum(ta), 1.0 / n);
}

Tensor rowsum(const Tensor& tm) {
    auto m = impl_of(tm);
    if (m->shape.size() != 2) throw ShapeError("rowsum expects a 2-D tensor, got " + shape_str(m->shape));
    const int rows = m->shape[0], cols = m->shape[1];
    std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[i] += m->values[static_cast<std::size_t>(i) * cols + j];
    return make_node(Shape{rows}, std::move(out), "rowsum", {m}, [m, rows, cols](TensorImpl& self) {
        if (!m->requires_grad) return;
        ensure_grad(*m);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                m->grad[static_cast<std::size_t>(i) * cols + j] += self.grad[i];
    });
}

Tensor spatial_mean(const Tensor& tz) {
    auto z = impl_of(tz);
    if (z->shape.size() != 3) throw ShapeError("spatial_mean expects [K,H,W], got " + shape_str(z->shape));
    const int k = z->shape[0], h = z->shape[1], w = z->shape[2];
    const int hw = h * w;
    if (hw == 0) throw ShapeError("spatial_mean: empty spatial extent");
    std::vector<double> out(static_cast<std::size_t>(k), 0.0);
    for (int c = 0; c < k; ++c) {
        double s = 0.0;
        for (int i = 0; i < hw; ++i) s += z->values[static_cast<std::size_t>(c) * hw + i];
        out[c] = s / hw;
    }
    return make_node(Shape{k}, std::move(out), "spatial_mean", {z}, [z, k, hw](TensorImpl& self) {
        if (!z->requires_grad) return;
        ensure_grad(*z);
        for (int c = 0; c < k; ++c) {
            const double g = self.grad[c] / hw;
            for (int i = 0; i < hw; ++i) z->grad[static_cast<std::size_t>(c) * hw + i] += g;
        }
    });
}

Tensor bc_row(const Tensor& tv, int rows) {
    auto v = impl_of(tv);
    if (v->shape.size() != 1) throw ShapeError("bc_row expects a 1-D tensor");
    const int cols = v->shape[0];
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
        std::copy(v->values.begin(), v->values.end(), out.begin() + static_cast<std::size_t>(i) * cols);
    return make_node(Shape{rows, cols}, std::move(out), "bc_row", {v}, [v, rows, cols](TensorImpl& self) {
        if (!v->requires_grad) return;
        ensure_grad(*v);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                v->grad[j] += self.grad[static_cast<std::size_t>(i) * cols + j];
    });
}

Tensor bc_col(const Tensor& tv, int cols) {
    auto v = impl_of(tv);
    if (v->shape.size() != 1) throw ShapeError("bc_col expects a 1-D tensor");
    const int rows = v->shape[0];
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i) * cols + j] = v->values[i];
    return make_node(Shape{rows, cols}, std::move(out), "bc_col", {v}, [v, rows, cols](TensorImpl& self) {
        if (!v->requires_grad) return;
        ensure_grad(*v);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                v->grad[i] += self.grad[static_cast<std::size_t>(i) * cols + j];
    });
}

Tensor bc_channels(const Tensor& tv, int h, int w) {
    auto v = impl_of(tv);
    if (v->shape.size() != 1) throw ShapeError("bc_channels expects a 1-D tensor");
    const int k = v->shape[0];
    const int hw = h * w;
    std::vector<double> out(static_cast<std::size_t>(k) * hw);
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < hw; ++i) out[static_cast<std::size_t>(c) * hw + i] = v->values[c];
    return make_node(Shape{k, h, w}, std::move(out), "bc_channels", {v}, [v, k, hw](TensorImpl& self) {
        if (!v->requires_grad) return;
        ensure_grad(*v);
        for (int c = 0; c < k; ++c)
            for (int i = 0; i < hw; ++i) v->grad[c] += self.grad[static_cast<std::size_t>(c) * hw + i];
    });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& ta, const Shape& shape) {
    auto a = impl_of(ta);
    if (shape_numel(shape) != static_cast<std::int64_t>(a->values.size())) {
        throw ShapeError("reshape to " + shape_str(shape) + " from " + shape_str(a->shape));
    }
    return make_node(shape, a->values, "reshape", {a}, [a](TensorImpl& self) {
        if (!a->requires_grad) return;
        ensure_grad(*a);
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    });
}

Tensor transpose(const Tensor& tm) {
    auto m = impl_of(tm);
    if (m->shape.size() != 2) throw ShapeError("transpose expects a 2-D tensor");
    const int rows = m->shape[0], cols = m->shape[1];
    std::vector<double> out(m->values.size());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<std::size_t>(j) * rows + i] = m->values[static_cast<std::size_t>(i) * cols + j];
    return make_node(Shape{cols, rows}, std::move(out), "transpose", {m}, [m, rows, cols](TensorImpl& self) {
        if (!m->requires_grad) return;
        ensure_grad(*m);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                m->grad[static_cast<std::size_t>(i) * cols + j] +=
                    self.grad[static_cast<std::size_t>(j) * rows + i];
    });
}

Tensor slice0(const Tensor& ta, int start, int count) {
    auto a = impl_of(ta);
    if (a->shape.empty()) throw ShapeError("slice0 on a scalar");
    const int n0 = a->shape[0];
    if (start < 0 || count < 0 || start + count > n0) {
        throw ShapeError("slice0 range [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of bounds for axis size " +
                         std::to_string(n0));
    }
    const std::size_t inner = n0 ? a->values.size() / n0 : 0;
    Shape out_shape = a->shape;
    out_shape[0] = count;
    std::vector<double> out(a->values.begin() + start * inner,
                            a->values.begin() + (start + count) * inner);
    return make_node(out_shape, std::move(out), "slice0", {a}, [a, start, inner](TensorImpl& self) {
        if (!a->requires_grad) return;
        ensure_grad(*a);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[start * inner + i] += self.grad[i];
    });
}

Tensor index0(const Tensor& ta, int i) {
    auto a = impl_of(ta);
    Tensor s = slice0(ta, i, 1);
    Shape dropped(a->shape.begin() + 1, a->shape.end());
    return reshape(s, dropped);
}

Tensor stack0(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("stack0 of zero tensors");
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(parts.size());
    const Shape& base = impl_of(parts[0])->shape;
    std::size_t inner = impl_of(parts[0])->values.size();
    std::vector<double> out;
    out.reserve(inner * parts.size());
    for (const Tensor& t : parts) {
        auto p = impl_of(t);
        if (p->shape != base) {
            throw ShapeError("stack0: element shape " + shape_str(p->shape) + " differs from " +
                             shape_str(base));
        }
        impls.push_back(p);
        out.insert(out.end(), p->values.begin(), p->values.end());
    }
    Shape out_shape;
    out_shape.push_back(static_cast<int>(parts.size()));
    out_shape.insert(out_shape.end(), base.begin(), base.end());
    return make_node(out_shape, std::move(out), "stack0", impls, [impls, inner](TensorImpl& self) {
        for (std::size_t p = 0; p < impls.size(); ++p) {
            auto& t = *impls[p];
            if (!t.requires_grad) continue;
            ensure_grad(t);
            for (std::size_t i = 0; i < inner; ++i) t.grad[i] += self.grad[p * inner + i];
        }
    });
}

// ---------------------------------------------------------------------------
// linear maps
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    auto a = impl_of(ta);
    auto b = impl_of(tb);
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " x " +
                         shape_str(b->shape));
    }
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a->values[static_cast<std::size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = &b->values[static_cast<std::size_t>(p) * n];
            double* orow = &out[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return make_node(Shape{m, n}, std::move(out), "matmul", {a, b}, [a, b, m, k, n](TensorImpl& self) {
        const auto& g = self.grad;
        if (a->requires_grad) {
            ensure_grad(*a);
            // dA = g . B^T
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j)
                        s += g[static_cast<std::size_t>(i) * n + j] *
                             b->values[static_cast<std::size_t>(p) * n + j];
                    a->grad[static_cast<std::size_t>(i) * k + p] += s;
                }
        }
        if (b->requires_grad) {
            ensure_grad(*b);
            // dB = A^T . g
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i)
                        s += a->values[static_cast<std::size_t>(i) * k + p] *
                             g[static_cast<std::size_t>(i) * n + j];
                    b->grad[static_cast<std::size_t>(p) * n + j] += s;
                }
        }
    });
}

Tensor conv2d(const Tensor& tx, const Tensor& tw, const Tensor& tbias, int stride, int pad) {
    auto x = impl_of(tx);
    auto w = impl_of(tw);
    auto bias = impl_of(tbias);
    if (x->shape.size() != 4 || w->shape.size() != 4) {
        throw ShapeError("conv2d expects x [B,C,H,W] and w [Co,Ci,k,k]");
    }
    const int batch = x->shape[0], cin = x->shape[1], h = x->shape[2], wd = x->shape[3];
    const int cout = w->shape[0], kcin = w->shape[1], kh = w->shape[2], kw = w->shape[3];
    if (kcin != cin) throw ShapeError("conv2d: channel mismatch");
    if (kh != kw) throw ShapeError("conv2d: kernel must be square");
    if (bias->shape != Shape{cout}) throw ShapeError("conv2d: bias shape mismatch");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: output would be empty");

    auto xi = [cin, h, wd](int b, int c, int i, int j) {
        return ((static_cast<std::size_t>(b) * cin + c) * h + i) * wd + j;
    };
    auto wi = [cin, kh, kw](int co, int ci, int i, int j) {
        return ((static_cast<std::size_t>(co) * cin + ci) * kh + i) * kw + j;
    };
    auto oi = [cout, ho, wo](int b, int co, int i, int j) {
        return ((static_cast<std::size_t>(b) * cout + co) * ho + i) * wo + j;
    };

    std::vector<double> out(static_cast<std::size_t>(batch) * cout * ho * wo, 0.0);
    for (int b = 0; b < batch; ++b)
        for (int co = 0; co < cout; ++co)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double s = bias->values[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int ii = i * stride - pad + ki;
                                const int jj = j * stride - pad + kj;
                                if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
                                s += x->values[xi(b, ci, ii, jj)] * w->values[wi(co, ci, ki, kj)];
                            }
                    out[oi(b, co, i, j)] = s;
                }

    return make_node(Shape{batch, cout, ho, wo}, std::move(out), "conv2d", {x, w, bias},
                     [=](TensorImpl& self) {
                         const auto& g = self.grad;
                         if (x->requires_grad) ensure_grad(*x);
                         if (w->requires_grad) ensure_grad(*w);
                         if (bias->requires_grad) ensure_grad(*bias);
                         for (int b = 0; b < batch; ++b)
                             for (int co = 0; co < cout; ++co)
                                 for (int i = 0; i < ho; ++i)
                                     for (int j = 0; j < wo; ++j) {
                                         const double go = g[oi(b, co, i, j)];
                                         if (go == 0.0) continue;
                                         if (bias->requires_grad) bias->grad[co] += go;
                                         for (int ci = 0; ci < cin; ++ci)
                                             for (int ki = 0; ki < kh; ++ki)
                                                 for (int kj = 0; kj < kw; ++kj) {
                                                     const int ii = i * stride - pad + ki;
                                                     const int jj = j * stride - pad + kj;
                                                     if (ii < 0 || ii >= h || jj < 0 || jj >= wd)
                                                         continue;
                                                     if (x->requires_grad)
                                                         x->grad[xi(b, ci, ii, jj)] +=
                                                             go * w->values[wi(co, ci, ki, kj)];
                                                     if (w->requires_grad)
                                                         w->grad[wi(co, ci, ki, kj)] +=
                                                             go * x->values[xi(b, ci, ii, jj)];
                                                 }
                                     }
                     });
}

Tensor rowmax_detached(const Tensor& tm) {
    auto m = impl_of(tm);
    if (m->shape.size() != 2) throw ShapeError("rowmax_detached expects a 2-D tensor");
    const int rows = m->shape[0], cols = m->shape[1];
    if (cols == 0) throw ShapeError("rowmax_detached: empty rows");
    std::vector<double> out(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        double best = m->values[static_cast<std::size_t>(i) * cols];
        for (int j = 1; j < cols; ++j)
            best = std::max(best, m->values[static_cast<std::size_t>(i) * cols + j]);
        out[i] = best;
    }
    return Tensor::from(Shape{rows}, std::move(out));
}

Tensor detach(const Tensor& a) { return Tensor::from(a.shape(), a.values()); }

}  // namespace sage
