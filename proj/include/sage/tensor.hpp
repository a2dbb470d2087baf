#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sage/errors.hpp"

namespace sage {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;  // leaf flag or derived from parents
    bool is_leaf = true;
    bool graph_consumed = false;
    std::vector<double> grad;  // allocated lazily, same length as values
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;  // reads own grad, accumulates into parents
};

}  // namespace detail

// Dense double-precision array with reverse-mode differentiation. Copies
// share the underlying storage (handle semantics); deep copies go through
// clone(). A computation graph is built only while grads are enabled and at
// least one input requires grad; backward() consumes and frees the graph.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double value);
    static Tensor from(const Shape& shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t numel() const;
    const std::vector<double>& values() const;
    // Handle semantics (const Tensor still aliases mutable storage); callers
    // must only mutate leaves / untracked tensors.
    std::vector<double>& values_mut() const;
    double item() const;                // numel()==1
    double at(std::int64_t flat_index) const;

    Tensor clone() const;  // deep copy of values, untracked leaf

    void set_requires_grad(bool on);
    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    // Reverse-mode sweep from a scalar. Accumulates into every
    // requires_grad leaf reachable from this tensor, then frees the graph.
    void backward();

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// RAII guard that disables graph construction (evaluation paths).
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

// ---- elementwise; operands must agree in shape, or either side may be a
// ---- one-element tensor which broadcasts against the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double c);
Tensor sub(const Tensor& a, double c);
Tensor sub(double c, const Tensor& a);
Tensor mul(const Tensor& a, double c);
Tensor div(const Tensor& a, double c);
Tensor div(double c, const Tensor& a);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return sub(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return mul(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return div(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add(a, c); }
inline Tensor operator-(double c, const Tensor& a) { return sub(c, a); }
inline Tensor operator*(double c, const Tensor& a) { return mul(a, c); }
inline Tensor operator/(double c, const Tensor& a) { return div(c, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor lgamma(const Tensor& a);   // grad: digamma
Tensor digamma(const Tensor& a);  // grad: trigamma

// ---- reductions
Tensor sum(const Tensor& a);   // -> scalar (shape {})
Tensor mean(const Tensor& a);  // -> scalar
Tensor rowsum(const Tensor& m);        // [r,c] -> [r]
Tensor spatial_mean(const Tensor& z);  // [K,H,W] -> [K]

// ---- broadcasts (gradient sums over the replicated axes)
Tensor bc_row(const Tensor& v, int rows);            // [c] -> [rows,c], rows identical
Tensor bc_col(const Tensor& v, int cols);            // [r] -> [r,cols], columns identical
Tensor bc_channels(const Tensor& v, int h, int w);   // [K] -> [K,h,w]

// ---- shape ops
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor transpose(const Tensor& m);                       // 2-D
Tensor slice0(const Tensor& a, int start, int count);    // keeps axis 0
Tensor index0(const Tensor& a, int i);                   // drops axis 0
Tensor stack0(std::span<const Tensor> parts);            // new axis 0

// ---- linear maps
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
// x [B,Cin,H,W], w [Cout,Cin,k,k], bias [Cout]; zero padding `pad`, square kernel.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

// Row-wise max as an untracked constant [r]; shift for stable log-sum-exp.
Tensor rowmax_detached(const Tensor& m);

// Detached copy of any tensor (constant leaf sharing no graph).
Tensor detach(const Tensor& a);

}  // namespace sage
