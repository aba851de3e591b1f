// SPDX-License-Identifier: Apache-2.0
#include "mmreg/metrics.hpp"

#include <cmath>
#include <limits>

#include "mmreg/error.hpp"
#include "mmreg/tensor.hpp"

namespace mmreg {

MetricsReport compute_metrics(std::span<const double> y, std::span<const double> yhat, double gm_eps) {
    require(y.size() == yhat.size(), "compute_metrics: length mismatch " + std::to_string(y.size()) + " vs " +
                                         std::to_string(yhat.size()));
    require(!y.empty(), "compute_metrics: empty input");
    for (std::size_t i = 0; i < y.size(); ++i)
        require(std::isfinite(y[i]) && std::isfinite(yhat[i]), "compute_metrics: non-finite value at index " + std::to_string(i));
    const auto n = static_cast<double>(y.size());

    double mean_y = 0.0;
    for (double v : y) mean_y += v;
    mean_y /= n;

    double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0, log_sum = 0.0, smape_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - yhat[i];
        ss_res += e * e;
        ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
        abs_sum += std::fabs(e);
        log_sum += std::log(std::fabs(e) + gm_eps);
        const double den = std::fabs(y[i]) + std::fabs(yhat[i]);
        if (den >= kEpsNum) smape_sum += std::fabs(e) / (den / 2.0);
    }

    MetricsReport m;
    m.n = y.size();
    m.mse = ss_res / n;
    m.mae = abs_sum / n;
    m.gm = std::exp(log_sum / n);
    m.smape = smape_sum / n;
    m.r2 = ss_tot < kEpsNum ? std::numeric_limits<double>::quiet_NaN() : 1.0 - ss_res / ss_tot;
    return m;
}

GroupedReport grouped_eval(std::span<const double> y, std::span<const double> yhat, std::span<const Group> groups,
                           double gm_eps) {
    require(y.size() == yhat.size() && y.size() == groups.size(), "grouped_eval: predictions are not aligned");
    GroupedReport r;
    r.overall = compute_metrics(y, yhat, gm_eps);
    for (Group g : {Group::Many, Group::Middle, Group::Few}) {
        std::vector<double> gy, gp;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (groups[i] != g) continue;
            gy.push_back(y[i]);
            gp.push_back(yhat[i]);
        }
        if (!gy.empty()) r.per_group[g] = compute_metrics(gy, gp, gm_eps);
    }
    return r;
}

GroupedReport grouped_eval(const Dataset& data, std::span<const double> predictions, double gm_eps) {
    require(predictions.size() == data.size(), "grouped_eval: " + std::to_string(predictions.size()) +
                                                   " predictions for " + std::to_string(data.size()) + " samples");
    std::vector<double> y;
    std::vector<Group> g;
    for (const auto& s : data.samples) {
        y.push_back(s.target);
        g.push_back(s.group);
    }
    return grouped_eval(y, predictions, g, gm_eps);
}

namespace {
nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
} // namespace

nlohmann::json to_json(const MetricsReport& m) {
    return {{"r2", num(m.r2)}, {"mse", num(m.mse)}, {"mae", num(m.mae)},
            {"gm", num(m.gm)}, {"smape", num(m.smape)}, {"n", m.n}};
}

nlohmann::json to_json(const GroupedReport& g) {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [k, v] : g.per_group) groups[group_name(k)] = to_json(v);
    return {{"overall", to_json(g.overall)}, {"groups", groups}};
}

} // namespace mmreg
