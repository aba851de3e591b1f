// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "mmreg/error.hpp"
#include "mmreg/metrics.hpp"
#include "mmreg/rng.hpp"

using namespace mmreg;

TEST(Metrics, PerfectPrediction) {
    const std::vector<double> y{1, 2, 3};
    const auto m = compute_metrics(y, y);
    EXPECT_EQ(m.r2, 1.0);
    EXPECT_EQ(m.mse, 0.0);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_NEAR(m.gm, 1e-6, 1e-18);
    EXPECT_EQ(m.smape, 0.0);
    EXPECT_EQ(m.n, 3u);
}

TEST(Metrics, HandComputed) {
    const auto m = compute_metrics(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4});
    EXPECT_NEAR(m.mse, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.mae, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.r2, 0.5, 1e-12);
    EXPECT_NEAR(compute_metrics(std::vector<double>{0}, std::vector<double>{2}).smape, 2.0, 1e-12);
}

TEST(Metrics, MeanPredictorHasZeroR2) {
    const std::vector<double> y{-3, 0.5, 1, 4, 2};
    const std::vector<double> mean(5, 0.9);
    EXPECT_NEAR(compute_metrics(y, mean).r2, 0.0, 1e-12);
}

TEST(Metrics, ConstantTargetsGiveNaNR2) {
    EXPECT_TRUE(std::isnan(compute_metrics(std::vector<double>{2, 2}, std::vector<double>{1, 3}).r2));
}

TEST(Metrics, Properties) {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 9;
        std::vector<double> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(-18, 1);
            p[i] = rng.uniform(-18, 1);
        }
        const auto m = compute_metrics(y, p);
        EXPECT_GE(m.mse, 0.0);
        EXPECT_LE(m.mae, std::sqrt(m.mse) + 1e-12);
        if (n == 1) EXPECT_NEAR(m.mse, m.mae * m.mae, 1e-12);
        EXPECT_EQ(m.smape, compute_metrics(p, y).smape);
        EXPECT_LE(m.smape, 2.0);

        const double c = rng.uniform(0.5, 3.0);
        std::vector<double> pc(n);
        for (std::size_t i = 0; i < n; ++i) pc[i] = y[i] + c * (p[i] - y[i]);
        EXPECT_NEAR(compute_metrics(y, pc, 0.0).gm, c * compute_metrics(y, p, 0.0).gm,
                    1e-6 * c * compute_metrics(y, p, 0.0).gm);

        std::vector<double> yr(y.rbegin(), y.rend()), pr(p.rbegin(), p.rend());
        EXPECT_NEAR(compute_metrics(yr, pr).gm, m.gm, 1e-12 * m.gm);
    }
}

TEST(Metrics, RejectsBadInput) {
    EXPECT_THROW(compute_metrics(std::vector<double>{}, std::vector<double>{}), Error);
    EXPECT_THROW(compute_metrics(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
    EXPECT_THROW(compute_metrics(std::vector<double>{1}, std::vector<double>{INFINITY}), Error);
}

TEST(GroupedEval, AllManyMatchesOverall) {
    const std::vector<double> y{1, 2, 3}, p{1.5, 2, 2};
    const std::vector<Group> g(3, Group::Many);
    const auto r = grouped_eval(y, p, g);
    ASSERT_EQ(r.per_group.size(), 1u);
    EXPECT_EQ(r.per_group.at(Group::Many).mse, r.overall.mse);
    EXPECT_EQ(r.per_group.at(Group::Many).mae, r.overall.mae);
}

TEST(GroupedEval, PerfectAndTailHarderForMeanPredictor) {
    const Dataset d = generate(LongTailSpec{}, GroupThresholds{});
    const auto y = d.targets();
    for (const auto& [g, m] : grouped_eval(d, y).per_group) EXPECT_EQ(m.mse, 0.0) << group_name(g);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    const auto r = grouped_eval(d, std::vector<double>(y.size(), mean));
    EXPECT_GT(r.per_group.at(Group::Few).mse, r.per_group.at(Group::Many).mse);
}

TEST(Metrics, JsonRendersNaNAsNull) {
    const auto j = to_json(compute_metrics(std::vector<double>{2, 2}, std::vector<double>{2, 2}));
    EXPECT_TRUE(j["r2"].is_null());
    EXPECT_EQ(j["mse"].get<double>(), 0.0);
    for (const char* k : {"r2", "mse", "mae", "gm", "smape", "n"}) EXPECT_TRUE(j.contains(k)) << k;
}
