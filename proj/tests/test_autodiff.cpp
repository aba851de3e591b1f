// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "mmreg/error.hpp"
#include "mmreg/rng.hpp"
#include "mmreg/tensor.hpp"

using namespace mmreg;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Reduces any output to a scalar with a fixed random projection so that every
// output entry contributes a distinct weight to the gradient.
Var project(Tape& tape, Var y, std::uint64_t seed) {
    const Tensor& v = y.value();
    Rng rng(seed);
    return dot(y, tape.constant(random_tensor(rng, v.rows, v.cols)));
}

} // namespace

TEST(Autodiff, ForwardExamples) {
    Tape tape;
    const Var a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
    const Var b = tape.constant(Tensor(2, 1, {1, 1}));
    EXPECT_EQ(matmul(a, b).value(), Tensor(2, 1, {3, 7}));
    EXPECT_EQ(relu(tape.constant(Tensor::row({-1, 0, 2}))).value(), Tensor::row({0, 0, 2}));
    EXPECT_DOUBLE_EQ(sigmoid(tape.constant(0.0)).item(), 0.5);
}

TEST(Autodiff, BackwardExamples) {
    {
        Tape tape;
        const Var x = tape.param(Tensor::scalar(3), 0);
        const Var y = tape.param(Tensor::scalar(4), 1);
        const auto g = tape.param_grads(x * y, 2);
        EXPECT_DOUBLE_EQ(g[0].item(), 4.0);
        EXPECT_DOUBLE_EQ(g[1].item(), 3.0);
    }
    {
        Tape tape;
        const Var x = tape.param(Tensor::row({3, 4}), 0);
        const auto g = tape.param_grads(scale(dot(x, x), 0.5), 1);
        EXPECT_EQ(g[0], Tensor::row({3, 4}));
    }
    {
        Tape tape;
        const Var w = tape.param(Tensor::scalar(0), 0);
        const Var x = tape.constant(1.0);
        const auto g = tape.param_grads(sigmoid(w * x), 1);
        EXPECT_DOUBLE_EQ(g[0].item(), 0.25);
    }
}

TEST(Autodiff, CosineExamples) {
    EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
    EXPECT_NEAR(cosine_similarity(std::vector<double>{2, 0}, std::vector<double>{-3, 0}), -1.0, 1e-8);
    EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 1.0 / std::sqrt(2.0), 1e-8);
    EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.0);
}

TEST(Autodiff, GradCheckExamples) {
    const auto square = grad_check([](Tape& t, const std::vector<Tensor>& p) {
        const Var x = t.param(p[0], 0);
        return x * x;
    }, {Tensor::scalar(2.0)});
    EXPECT_LT(square.max_rel_err, 1e-8);
    EXPECT_TRUE(square.passed());

    const auto constant = grad_check([](Tape& t, const std::vector<Tensor>& p) {
        t.param(p[0], 0);
        return t.constant(7.0);
    }, {Tensor::row({1.0, -2.0})});
    EXPECT_EQ(constant.max_abs_err, 0.0);
    EXPECT_TRUE(constant.passed());
}

struct OpCase {
    const char* name;
    std::function<Var(Tape&, const std::vector<Var>&)> op;
    std::function<std::vector<Tensor>(Rng&)> inputs;
};

class EveryOp : public ::testing::TestWithParam<OpCase> {};

TEST_P(EveryOp, MatchesFiniteDifferencesOn100Seeds) {
    const OpCase& c = GetParam();
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(mix_seed(seed, 0xAD));
        const auto point = c.inputs(rng);
        const auto rep = grad_check(
            [&](Tape& t, const std::vector<Tensor>& p) {
                std::vector<Var> vars;
                for (std::size_t i = 0; i < p.size(); ++i) vars.push_back(t.param(p[i], i));
                return project(t, c.op(t, vars), seed);
            },
            point);
        ASSERT_TRUE(rep.passed()) << c.name << " seed " << seed << " max_rel " << rep.max_rel_err << " max_abs "
                                  << rep.max_abs_err;
    }
}

namespace {

auto pair_of(std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2, double lo = -1, double hi = 1) {
    return [=](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, r1, c1, lo, hi), random_tensor(rng, r2, c2, lo, hi)}; };
}
auto single(std::size_t r, std::size_t c, double lo = -1, double hi = 1) {
    return [=](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, r, c, lo, hi)}; };
}
auto numerator_denominator(std::size_t r2, std::size_t c2) {
    return [=](Rng& rng) {
        Tensor den = random_tensor(rng, r2, c2, 0.5, 2.0);
        for (auto& v : den.data)
            if (rng.uniform() < 0.5) v = -v;
        return std::vector<Tensor>{random_tensor(rng, 3, 2), den};
    };
}

} // namespace

INSTANTIATE_TEST_SUITE_P(
    Ops, EveryOp,
    ::testing::Values(
        OpCase{"matmul", [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }, pair_of(3, 4, 4, 2)},
        OpCase{"add", [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, pair_of(3, 2, 3, 2)},
        OpCase{"add_row", [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, pair_of(3, 2, 1, 2)},
        OpCase{"add_scalar", [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, pair_of(3, 2, 1, 1)},
        OpCase{"sub", [](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }, pair_of(3, 2, 3, 2)},
        OpCase{"sub_scalar", [](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }, pair_of(3, 2, 1, 1)},
        OpCase{"mul", [](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]); }, pair_of(3, 2, 3, 2)},
        OpCase{"mul_scalar", [](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]); }, pair_of(3, 2, 1, 1)},
        OpCase{"div", [](Tape&, const std::vector<Var>& v) { return div(v[0], v[1]); }, numerator_denominator(3, 2)},
        OpCase{"div_column", [](Tape&, const std::vector<Var>& v) { return div(v[0], v[1]); }, numerator_denominator(3, 1)},
        OpCase{"div_scalar", [](Tape&, const std::vector<Var>& v) { return div(v[0], v[1]); }, numerator_denominator(1, 1)},
        OpCase{"scale", [](Tape&, const std::vector<Var>& v) { return scale(v[0], -2.5); }, single(2, 3)},
        OpCase{"add_const", [](Tape&, const std::vector<Var>& v) { return add_const(v[0], 0.75); }, single(2, 3)},
        OpCase{"relu", [](Tape&, const std::vector<Var>& v) { return relu(v[0]); }, single(3, 3)},
        OpCase{"sigmoid", [](Tape&, const std::vector<Var>& v) { return sigmoid(v[0]); }, single(3, 3, -4, 4)},
        OpCase{"exp", [](Tape&, const std::vector<Var>& v) { return exp(v[0]); }, single(3, 3, -2, 2)},
        OpCase{"log", [](Tape&, const std::vector<Var>& v) { return log(v[0]); }, single(3, 3, 0.1, 3)},
        OpCase{"abs", [](Tape&, const std::vector<Var>& v) { return abs(v[0]); }, single(3, 3)},
        OpCase{"sum", [](Tape&, const std::vector<Var>& v) { return sum(v[0]); }, single(3, 4)},
        OpCase{"mean", [](Tape&, const std::vector<Var>& v) { return mean(v[0]); }, single(3, 4)},
        OpCase{"row_sum", [](Tape&, const std::vector<Var>& v) { return row_sum(v[0]); }, single(3, 4)},
        OpCase{"l2_norm", [](Tape&, const std::vector<Var>& v) { return l2_norm(v[0]); }, single(3, 4)},
        OpCase{"row_l2_norm", [](Tape&, const std::vector<Var>& v) { return row_l2_norm(v[0]); }, single(3, 4)},
        OpCase{"dot", [](Tape&, const std::vector<Var>& v) { return dot(v[0], v[1]); }, pair_of(3, 2, 3, 2)},
        OpCase{"transpose", [](Tape&, const std::vector<Var>& v) { return transpose(v[0]); }, single(2, 5)},
        OpCase{"concat_cols", [](Tape&, const std::vector<Var>& v) { return concat_cols(v[0], v[1]); },
               pair_of(3, 2, 3, 4)},
        OpCase{"composite", [](Tape&, const std::vector<Var>& v) {
                   return div(exp(matmul(v[0], transpose(v[0]))), row_sum(exp(matmul(v[0], transpose(v[0])))));
               },
               single(3, 2)}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(Autodiff, BackwardIsLinear) {
    Rng rng(11);
    Tape tape;
    const Var x = tape.param(random_tensor(rng, 4, 3), 0);
    const Var w = tape.param(random_tensor(rng, 3, 2), 1);
    const Var l1 = sum(sigmoid(matmul(x, w)));
    const Var l2v = mean(exp(scale(matmul(x, w), 0.3)));
    const auto g1 = tape.param_grads(l1, 2);
    const auto g2 = tape.param_grads(l2v, 2);
    const auto g12 = tape.param_grads(add(l1, l2v), 2);
    for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t i = 0; i < g12[p].size(); ++i)
            EXPECT_NEAR(g12[p].data[i], g1[p].data[i] + g2[p].data[i], 1e-12);
}

TEST(Autodiff, ForwardBackwardIsDeterministic) {
    auto run = [] {
        Rng rng(5);
        Tape tape;
        const Var x = tape.param(random_tensor(rng, 5, 4), 0);
        const Var z = div(x, row_l2_norm(x));
        const Var loss = log(sum(exp(matmul(z, transpose(z)))));
        return std::pair{loss.item(), tape.param_grads(loss, 1)};
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}

TEST(Autodiff, ShapeErrorsNameBothShapes) {
    Tape tape;
    const Var a = tape.constant(Tensor(2, 3));
    const Var b = tape.constant(Tensor(2, 3));
    try {
        matmul(a, b);
        FAIL() << "expected a shape error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
        EXPECT_NE(std::string(e.what()).find("[2, 3]"), std::string::npos) << e.what();
    }
}

TEST(Autodiff, NonFiniteOutputIsNumericError) {
    Tape tape;
    const Var a = tape.constant(1000.0);
    try {
        exp(a);
        FAIL() << "expected a numeric error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    }
}

TEST(Autodiff, UnreachedNodesGetZeroGradients) {
    Tape tape;
    const Var x = tape.param(Tensor::row({1, 2}), 0);
    const Var unused = tape.param(Tensor(2, 2, 1.0), 1);
    (void)unused;
    const auto g = tape.param_grads(sum(x), 2);
    EXPECT_EQ(g[1], Tensor(2, 2, 0.0));
}
