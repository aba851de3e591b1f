// SPDX-License-Identifier: Apache-2.0
#include "mmreg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mmreg/error.hpp"

namespace mmreg {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    require(data.size() == r * c, "tensor data length " + std::to_string(data.size()) + " does not match shape [" +
                                      std::to_string(r) + ", " + std::to_string(c) + "]");
}

Tensor Tensor::column(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(n, 1, std::move(values));
}

Tensor Tensor::row(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(1, n, std::move(values));
}

double Tensor::item() const {
    require(rows == 1 && cols == 1, "item() needs a 1x1 tensor, got " + shape_str(*this));
    return data[0];
}

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << "[" << t.rows << ", " << t.cols << "]";
    return os.str();
}

const char* op_name(OpKind kind) {
    switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Param: return "param";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::AddConst: return "add_const";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Abs: return "abs";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::RowSum: return "row_sum";
    case OpKind::L2Norm: return "l2_norm";
    case OpKind::RowL2Norm: return "row_l2_norm";
    case OpKind::Dot: return "dot";
    case OpKind::Transpose: return "transpose";
    case OpKind::ConcatCols: return "concat_cols";
    }
    return "?";
}

const Tensor& Var::value() const { return tape->value(*this); }

namespace {

bool all_finite(const Tensor& t) {
    return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

[[noreturn]] void shape_error(OpKind k, const Tensor& a, const Tensor& b) {
    fail(std::string(op_name(k)) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

bool is_scalar(const Tensor& t) { return t.rows == 1 && t.cols == 1; }

enum class Bcast { Same, Row, Col, Scalar };

Bcast classify(OpKind k, const Tensor& a, const Tensor& b, bool allow_row, bool allow_col, bool allow_scalar) {
    if (a.same_shape(b)) return Bcast::Same;
    if (allow_scalar && is_scalar(b)) return Bcast::Scalar;
    if (allow_row && b.rows == 1 && b.cols == a.cols) return Bcast::Row;
    if (allow_col && b.cols == 1 && b.rows == a.rows) return Bcast::Col;
    shape_error(k, a, b);
}

// Index into b for element (i, j) of a under broadcasting mode m.
inline std::size_t bidx(Bcast m, std::size_t i, std::size_t j, std::size_t cols) {
    switch (m) {
    case Bcast::Same: return i * cols + j;
    case Bcast::Row: return j;
    case Bcast::Col: return i;
    case Bcast::Scalar: return 0;
    }
    return 0;
}

Bcast mode_for(OpKind k, const Tensor& a, const Tensor& b) {
    switch (k) {
    case OpKind::Add: return classify(k, a, b, true, false, true);
    case OpKind::Sub: return classify(k, a, b, false, false, true);
    case OpKind::Mul: return classify(k, a, b, false, false, true);
    case OpKind::Div: return classify(k, a, b, false, true, true);
    default: return Bcast::Same;
    }
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* orow = &out.data[i * out.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.data[i * a.cols + k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

} // namespace

Var Tape::push(Node n) {
    if (!all_finite(n.value)) fail_numeric(std::string(op_name(n.kind)) + ": non-finite value produced");
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(value);
    if (!all_finite(n.value)) fail_numeric("constant: non-finite input");
    return push(std::move(n));
}

Var Tape::param(const Tensor& value, std::size_t param_index) {
    Node n;
    n.kind = OpKind::Param;
    n.value = value;
    n.param_index = static_cast<std::ptrdiff_t>(param_index);
    if (!all_finite(n.value)) fail_numeric("param: non-finite input");
    return push(std::move(n));
}

Var Tape::unary(OpKind kind, Var av, double c) {
    require(av.tape == this, "unary op on a foreign tape");
    const Tensor& a = nodes_[av.id].value;
    Node n;
    n.kind = kind;
    n.a = av.id;
    n.arity = 1;
    n.c = c;
    switch (kind) {
    case OpKind::Scale:
        n.value = a;
        for (auto& v : n.value.data) v *= c;
        break;
    case OpKind::AddConst:
        n.value = a;
        for (auto& v : n.value.data) v += c;
        break;
    case OpKind::Relu:
        n.value = a;
        for (auto& v : n.value.data) v = v > 0.0 ? v : 0.0;
        break;
    case OpKind::Sigmoid:
        n.value = a;
        for (auto& v : n.value.data) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        break;
    case OpKind::Exp:
        n.value = a;
        for (auto& v : n.value.data) v = std::exp(v);
        break;
    case OpKind::Log:
        n.value = a;
        for (auto& v : n.value.data) v = std::log(std::max(v, kEpsNum));
        break;
    case OpKind::Abs:
        n.value = a;
        for (auto& v : n.value.data) v = std::fabs(v);
        break;
    case OpKind::Sum:
    case OpKind::Mean: {
        double s = 0.0;
        for (double v : a.data) s += v;
        if (kind == OpKind::Mean) {
            require(!a.empty(), "mean of an empty tensor");
            s /= static_cast<double>(a.size());
        }
        n.value = Tensor::scalar(s);
        break;
    }
    case OpKind::RowSum:
        n.value = Tensor(a.rows, 1);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) n.value.data[i] += a(i, j);
        break;
    case OpKind::L2Norm: {
        double s = kEpsNum * kEpsNum;
        for (double v : a.data) s += v * v;
        n.value = Tensor::scalar(std::sqrt(s));
        break;
    }
    case OpKind::RowL2Norm:
        n.value = Tensor(a.rows, 1);
        for (std::size_t i = 0; i < a.rows; ++i) {
            double s = kEpsNum * kEpsNum;
            for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * a(i, j);
            n.value.data[i] = std::sqrt(s);
        }
        break;
    case OpKind::Transpose:
        n.value = Tensor(a.cols, a.rows);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) n.value(j, i) = a(i, j);
        break;
    default:
        fail(std::string(op_name(kind)) + " is not a unary op");
    }
    if (!all_finite(a)) fail_numeric(std::string(op_name(kind)) + ": non-finite input");
    return push(std::move(n));
}

Var Tape::binary(OpKind kind, Var av, Var bv) {
    require(av.tape == this && bv.tape == this, "binary op on a foreign tape");
    const Tensor& a = nodes_[av.id].value;
    const Tensor& b = nodes_[bv.id].value;
    Node n;
    n.kind = kind;
    n.a = av.id;
    n.b = bv.id;
    n.arity = 2;
    switch (kind) {
    case OpKind::MatMul:
        if (a.cols != b.rows) shape_error(kind, a, b);
        n.value = Tensor(a.rows, b.cols);
        matmul_into(a, b, n.value);
        break;
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
        const Bcast m = mode_for(kind, a, b);
        n.value = Tensor(a.rows, a.cols);
        for (std::size_t i = 0; i < a.rows; ++i) {
            for (std::size_t j = 0; j < a.cols; ++j) {
                const double x = a(i, j);
                const double y = b.data[bidx(m, i, j, a.cols)];
                double r = 0.0;
                switch (kind) {
                case OpKind::Add: r = x + y; break;
                case OpKind::Sub: r = x - y; break;
                case OpKind::Mul: r = x * y; break;
                default: r = x / y; break;
                }
                n.value(i, j) = r;
            }
        }
        break;
    }
    case OpKind::Dot: {
        if (!a.same_shape(b)) shape_error(kind, a, b);
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
        n.value = Tensor::scalar(s);
        break;
    }
    case OpKind::ConcatCols:
        if (a.rows != b.rows) shape_error(kind, a, b);
        n.value = Tensor(a.rows, a.cols + b.cols);
        for (std::size_t i = 0; i < a.rows; ++i) {
            std::copy_n(&a.data[i * a.cols], a.cols, &n.value.data[i * n.value.cols]);
            std::copy_n(&b.data[i * b.cols], b.cols, &n.value.data[i * n.value.cols + a.cols]);
        }
        break;
    default:
        fail(std::string(op_name(kind)) + " is not a binary op");
    }
    return push(std::move(n));
}

std::vector<Tensor> Tape::backward(Var root) const {
    require(root.tape == this, "backward on a foreign tape");
    const Tensor& out = nodes_.at(root.id).value;
    require(is_scalar(out), "backward needs a scalar output, got " + shape_str(out));

    std::vector<Tensor> g(nodes_.size());
    g[root.id] = Tensor::scalar(1.0);

    auto acc = [&](std::size_t id) -> Tensor& {
        if (g[id].empty()) g[id] = Tensor(nodes_[id].value.rows, nodes_[id].value.cols);
        return g[id];
    };

    for (std::size_t idx = root.id + 1; idx-- > 0;) {
        if (g[idx].empty()) continue;
        const Node& n = nodes_[idx];
        if (n.arity == 0) continue;
        const Tensor& gy = g[idx];
        const Tensor& y = n.value;
        const Tensor& a = nodes_[n.a].value;

        switch (n.kind) {
        case OpKind::MatMul: {
            const Tensor& b = nodes_[n.b].value;
            Tensor& ga = acc(n.a);
            // ga += gy * b^T
            for (std::size_t i = 0; i < a.rows; ++i)
                for (std::size_t k = 0; k < a.cols; ++k) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < b.cols; ++j) s += gy(i, j) * b(k, j);
                    ga(i, k) += s;
                }
            Tensor& gb = acc(n.b);
            // gb += a^T * gy
            for (std::size_t i = 0; i < a.rows; ++i)
                for (std::size_t k = 0; k < a.cols; ++k) {
                    const double aik = a(i, k);
                    if (aik == 0.0) continue;
                    for (std::size_t j = 0; j < b.cols; ++j) gb(k, j) += aik * gy(i, j);
                }
            break;
        }
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul:
        case OpKind::Div: {
            const Tensor& b = nodes_[n.b].value;
            const Bcast m = mode_for(n.kind, a, b);
            Tensor& ga = acc(n.a);
            Tensor& gb = acc(n.b);
            for (std::size_t i = 0; i < a.rows; ++i) {
                for (std::size_t j = 0; j < a.cols; ++j) {
                    const double gv = gy(i, j);
                    const std::size_t bi = bidx(m, i, j, a.cols);
                    switch (n.kind) {
                    case OpKind::Add:
                        ga(i, j) += gv;
                        gb.data[bi] += gv;
                        break;
                    case OpKind::Sub:
                        ga(i, j) += gv;
                        gb.data[bi] -= gv;
                        break;
                    case OpKind::Mul:
                        ga(i, j) += gv * b.data[bi];
                        gb.data[bi] += gv * a(i, j);
                        break;
                    default: {
                        const double bv = b.data[bi];
                        ga(i, j) += gv / bv;
                        gb.data[bi] -= gv * a(i, j) / (bv * bv);
                        break;
                    }
                    }
                }
            }
            break;
        }
        case OpKind::Scale: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += n.c * gy.data[i];
            break;
        }
        case OpKind::AddConst: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += gy.data[i];
            break;
        }
        case OpKind::Relu: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i)
                if (a.data[i] > 0.0) ga.data[i] += gy.data[i];
            break;
        }
        case OpKind::Sigmoid: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
            break;
        }
        case OpKind::Exp: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += gy.data[i] * y.data[i];
            break;
        }
        case OpKind::Log: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i)
                if (a.data[i] > kEpsNum) ga.data[i] += gy.data[i] / a.data[i];
            break;
        }
        case OpKind::Abs: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < ga.size(); ++i) {
                const double x = a.data[i];
                ga.data[i] += x > 0.0 ? gy.data[i] : (x < 0.0 ? -gy.data[i] : 0.0);
            }
            break;
        }
        case OpKind::Sum:
        case OpKind::Mean: {
            Tensor& ga = acc(n.a);
            const double s = n.kind == OpKind::Mean ? gy.data[0] / static_cast<double>(a.size()) : gy.data[0];
            for (auto& v : ga.data) v += s;
            break;
        }
        case OpKind::RowSum: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < a.rows; ++i)
                for (std::size_t j = 0; j < a.cols; ++j) ga(i, j) += gy.data[i];
            break;
        }
        case OpKind::L2Norm: {
            Tensor& ga = acc(n.a);
            const double s = gy.data[0] / y.data[0];
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += s * a.data[i];
            break;
        }
        case OpKind::RowL2Norm: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < a.rows; ++i) {
                const double s = gy.data[i] / y.data[i];
                for (std::size_t j = 0; j < a.cols; ++j) ga(i, j) += s * a(i, j);
            }
            break;
        }
        case OpKind::Dot: {
            const Tensor& b = nodes_[n.b].value;
            const double s = gy.data[0];
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < a.size(); ++i) ga.data[i] += s * b.data[i];
            Tensor& gb = acc(n.b);
            for (std::size_t i = 0; i < a.size(); ++i) gb.data[i] += s * a.data[i];
            break;
        }
        case OpKind::Transpose: {
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < a.rows; ++i)
                for (std::size_t j = 0; j < a.cols; ++j) ga(i, j) += gy(j, i);
            break;
        }
        case OpKind::ConcatCols: {
            const Tensor& b = nodes_[n.b].value;
            Tensor& ga = acc(n.a);
            for (std::size_t i = 0; i < a.rows; ++i)
                for (std::size_t j = 0; j < a.cols; ++j) ga(i, j) += gy(i, j);
            Tensor& gb = acc(n.b);
            for (std::size_t i = 0; i < b.rows; ++i)
                for (std::size_t j = 0; j < b.cols; ++j) gb(i, j) += gy(i, a.cols + j);
            break;
        }
        default:
            break;
        }
    }

    for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i].empty() && !nodes_[i].value.empty()) g[i] = Tensor(nodes_[i].value.rows, nodes_[i].value.cols);
    return g;
}

std::vector<Tensor> Tape::param_grads(Var root, std::size_t n_params) const {
    auto all = backward(root);
    std::vector<Tensor> out(n_params);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.kind != OpKind::Param) continue;
        const auto p = static_cast<std::size_t>(n.param_index);
        require(p < n_params, "parameter index out of range");
        if (out[p].empty()) {
            out[p] = std::move(all[i]);
        } else {
            for (std::size_t k = 0; k < out[p].size(); ++k) out[p].data[k] += all[i].data[k];
        }
    }
    return out;
}

Var matmul(Var a, Var b) { return a.tape->binary(OpKind::MatMul, a, b); }
Var add(Var a, Var b) { return a.tape->binary(OpKind::Add, a, b); }
Var sub(Var a, Var b) { return a.tape->binary(OpKind::Sub, a, b); }
Var mul(Var a, Var b) { return a.tape->binary(OpKind::Mul, a, b); }
Var div(Var a, Var b) { return a.tape->binary(OpKind::Div, a, b); }
Var scale(Var a, double c) { return a.tape->unary(OpKind::Scale, a, c); }
Var add_const(Var a, double c) { return a.tape->unary(OpKind::AddConst, a, c); }
Var relu(Var a) { return a.tape->unary(OpKind::Relu, a); }
Var sigmoid(Var a) { return a.tape->unary(OpKind::Sigmoid, a); }
Var exp(Var a) { return a.tape->unary(OpKind::Exp, a); }
Var log(Var a) { return a.tape->unary(OpKind::Log, a); }
Var abs(Var a) { return a.tape->unary(OpKind::Abs, a); }
Var sum(Var a) { return a.tape->unary(OpKind::Sum, a); }
Var mean(Var a) { return a.tape->unary(OpKind::Mean, a); }
Var row_sum(Var a) { return a.tape->unary(OpKind::RowSum, a); }
Var l2_norm(Var a) { return a.tape->unary(OpKind::L2Norm, a); }
Var row_l2_norm(Var a) { return a.tape->unary(OpKind::RowL2Norm, a); }
Var dot(Var a, Var b) { return a.tape->binary(OpKind::Dot, a, b); }
Var transpose(Var a) { return a.tape->unary(OpKind::Transpose, a); }
Var concat_cols(Var a, Var b) { return a.tape->binary(OpKind::ConcatCols, a, b); }

double inner(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "inner: length mismatch " + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2(std::span<const double> a) { return std::sqrt(inner(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine_similarity: length mismatch " + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()));
    require(!a.empty(), "cosine_similarity: empty input");
    const double na = l2(a);
    const double nb = l2(b);
    if (na < kEpsNum || nb < kEpsNum) return 0.0;
    return std::clamp(inner(a, b) / (na * nb + kEpsNum), -1.0, 1.0);
}

namespace {

double eval_value(const ScalarFn& f, const std::vector<Tensor>& point) {
    Tape tape;
    const double v = f(tape, point).item();
    if (!std::isfinite(v)) fail_numeric("grad_check: non-finite function value");
    return v;
}

double central_diff(const ScalarFn& f, std::vector<Tensor>& point, std::size_t p, std::size_t k, double h) {
    const double x0 = point[p].data[k];
    point[p].data[k] = x0 + h;
    const double fp = eval_value(f, point);
    point[p].data[k] = x0 - h;
    const double fm = eval_value(f, point);
    point[p].data[k] = x0;
    return (fp - fm) / (2.0 * h);
}

} // namespace

GradReport grad_check(const ScalarFn& f, const std::vector<Tensor>& point, const std::vector<std::string>& names,
                      const GradCheckOptions& opt) {
    Tape tape;
    const Var out = f(tape, point);
    if (!std::isfinite(out.item())) fail_numeric("grad_check: non-finite function value");
    const auto analytic = tape.param_grads(out, point.size());

    GradReport rep;
    std::vector<Tensor> work = point;
    for (std::size_t p = 0; p < point.size(); ++p) {
        const std::string name = p < names.size() ? names[p] : "p" + std::to_string(p);
        auto& pairs = rep.per_parameter[name];
        for (std::size_t k = 0; k < point[p].size(); ++k) {
            const double a = analytic[p].empty() ? 0.0 : analytic[p].data[k];
            auto judge = [&](double num, double& abs_err, double& rel_err) {
                abs_err = std::fabs(a - num);
                const double mag = std::max(std::fabs(a), std::fabs(num));
                rel_err = mag > opt.near_zero ? abs_err / mag : 0.0;
                return rel_err < opt.rel_tol || abs_err < opt.abs_tol;
            };
            double num = central_diff(f, work, p, k, opt.h);
            double abs_err = 0.0, rel_err = 0.0;
            bool ok = judge(num, abs_err, rel_err);
            if (!ok) {
                ++rep.refined;
                num = central_diff(f, work, p, k, opt.h / 100.0);
                ok = judge(num, abs_err, rel_err);
            }
            if (!ok) ++rep.failures;
            ++rep.entries;
            rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
            rep.max_rel_err = std::max(rep.max_rel_err, rel_err);
            pairs.emplace_back(a, num);
        }
    }
    return rep;
}

} // namespace mmreg
