// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "mmreg/error.hpp"
#include "mmreg/minnorm.hpp"
#include "mmreg/rng.hpp"
#include "mmreg/tensor.hpp"

using namespace mmreg;

namespace {

std::vector<double> combine(double a, const std::vector<double>& g1, const std::vector<double>& g2) {
    std::vector<double> c(g1.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = a * g1[i] + (1.0 - a) * g2[i];
    return c;
}

} // namespace

TEST(MinNorm, Examples) {
    const std::vector<double> e1{1, 0}, e2{0, 1};
    const auto w = minnorm_two(e1, e2);
    EXPECT_DOUBLE_EQ(w.alpha_mm, 0.5);
    const auto c = combine(w.alpha_mm, e1, e2);
    EXPECT_DOUBLE_EQ(inner(c, c), 0.5);

    const std::vector<double> a{2, 0}, b{-1, 0};
    const auto w2 = minnorm_two(a, b);
    EXPECT_NEAR(w2.alpha_mm, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(l2(combine(w2.alpha_mm, a, b)), 0.0, 1e-15);

    const auto w3 = minnorm_two(a, a);
    EXPECT_EQ(w3.alpha_mm, 0.5);
    EXPECT_EQ(w3.alpha_uni, 0.5);
}

TEST(MinNorm, MismatchAndNonFinite) {
    EXPECT_THROW(minnorm_two(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
    EXPECT_THROW(minnorm_two(std::vector<double>{NAN}, std::vector<double>{1}), Error);
}

TEST(SelectWeights, Branches) {
    const auto orth = select_weights(std::vector<double>{1, 0}, std::vector<double>{0, 1});
    EXPECT_FALSE(orth.minnorm);
    EXPECT_EQ(orth.alpha_mm, 0.5);

    const std::vector<double> g{1.5, -2.0}, anti{-1.5, 2.0};
    const auto w = select_weights(g, anti);
    EXPECT_TRUE(w.minnorm);
    EXPECT_DOUBLE_EQ(w.alpha_mm, 0.5);
    EXPECT_NEAR(l2(combine(w.alpha_mm, g, anti)), 0.0, 1e-15);

    const auto aligned = select_weights(g, std::vector<double>{3.0, -4.0});
    EXPECT_FALSE(aligned.minnorm);
    EXPECT_EQ(aligned.alpha_uni, 0.5);
}

TEST(MinNorm, PropertiesOnRandomPairs) {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> g1(16), g2(16);
        for (auto& v : g1) v = rng.normal();
        for (auto& v : g2) v = rng.normal() * rng.uniform(0.1, 3.0);
        const auto w = minnorm_two(g1, g2);
        const auto c = combine(w.alpha_mm, g1, g2);
        EXPECT_LE(l2(c), std::min(l2(g1), l2(g2)) + 1e-9);
        EXPECT_GE(inner(c, g1), -1e-9);
        EXPECT_GE(inner(c, g2), -1e-9);
        for (int k = 0; k <= 100; ++k) EXPECT_LE(l2(c), l2(combine(k / 100.0, g1, g2)) + 1e-9);

        const double scale = rng.uniform(0.01, 100.0);
        std::vector<double> scaled = g1;
        for (auto& v : scaled) v *= scale;
        EXPECT_EQ(select_weights(g1, g2).minnorm, select_weights(scaled, g2).minnorm);
    }
}
