// SPDX-License-Identifier: Apache-2.0
//
// Minimal define-by-run reverse-mode automatic differentiation over dense
// row-major 2-D arrays of doubles. A Tape is rebuilt for every forward pass;
// backward() may be called several times on the same tape with different
// scalar roots, each call producing an independent gradient map.
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mmreg {

inline constexpr double kEpsNum = 1e-8;

struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor column(std::vector<double> values);
    static Tensor row(std::vector<double> values);

    std::array<std::size_t, 2> shape() const { return {rows, cols}; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double item() const;

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool operator==(const Tensor& o) const = default;
};

std::string shape_str(const Tensor& t);

enum class OpKind {
    Leaf,
    Param,
    MatMul,
    Add,      // same shape, row-broadcast (1 x n) or scalar rhs
    Sub,      // same shape
    Mul,      // same shape or scalar rhs
    Div,      // same shape, column-broadcast (m x 1) or scalar rhs
    Scale,    // multiply by constant
    AddConst, // add constant
    Relu,
    Sigmoid,
    Exp,
    Log,
    Abs,
    Sum,      // -> 1 x 1
    Mean,     // -> 1 x 1
    RowSum,   // m x n -> m x 1
    L2Norm,   // Frobenius norm -> 1 x 1, guarded by kEpsNum
    RowL2Norm,// m x n -> m x 1, sqrt(sum x^2 + eps^2)
    Dot,      // same shape -> 1 x 1
    Transpose,
    ConcatCols,
};

const char* op_name(OpKind kind);

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    double item() const { return value().item(); }
};

class Tape {
  public:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::size_t a = 0;
        std::size_t b = 0;
        int arity = 0;
        double c = 0.0;
        std::ptrdiff_t param_index = -1;
        Tensor value;
    };

    Var constant(Tensor value);
    Var constant(double v) { return constant(Tensor::scalar(v)); }
    // Leaf that stands for trainable parameter number `param_index` of some parameter list.
    Var param(const Tensor& value, std::size_t param_index);

    Var unary(OpKind kind, Var a, double c = 0.0);
    Var binary(OpKind kind, Var a, Var b);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a 1 x 1 root. Entry i holds d(root)/d(node i); nodes the
    // root does not depend on get an all-zero tensor of their own shape.
    std::vector<Tensor> backward(Var root) const;

    // Gradients restricted to parameter leaves, indexed by param_index.
    std::vector<Tensor> param_grads(Var root, std::size_t n_params) const;

  private:
    Var push(Node n);
    std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_const(Var a, double c);
Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var l2_norm(Var a);
Var row_l2_norm(Var a);
Var dot(Var a, Var b);
Var transpose(Var a);
Var concat_cols(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// <a, b> / (|a||b| + eps); 0 when either norm is below eps.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double l2(std::span<const double> a);
double inner(std::span<const double> a, std::span<const double> b);

struct GradReport {
    double max_abs_err = 0.0;
    // Taken over entries whose gradient magnitude exceeds near_zero.
    double max_rel_err = 0.0;
    std::size_t entries = 0;
    std::size_t failures = 0;
    // Entries whose first comparison failed and that were re-checked with h / 100
    // (a ReLU or |x| kink inside the stencil).
    std::size_t refined = 0;
    std::map<std::string, std::vector<std::pair<double, double>>> per_parameter;

    bool passed() const { return failures == 0; }
};

struct GradCheckOptions {
    double h = 1e-5;
    double rel_tol = 1e-5;
    double abs_tol = 1e-7;
    double near_zero = 1e-7;
};

// Builds the scalar being checked on the supplied tape. `params[i]` must be
// registered with tape.param(params[i], i).
using ScalarFn = std::function<Var(Tape&, const std::vector<Tensor>&)>;

GradReport grad_check(const ScalarFn& f, const std::vector<Tensor>& point,
                      const std::vector<std::string>& names = {}, const GradCheckOptions& opt = {});

} // namespace mmreg
