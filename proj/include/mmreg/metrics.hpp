// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmreg/datagen.hpp"

namespace mmreg {

struct MetricsReport {
    double r2 = 0.0; // NaN when the targets have (near) zero variance
    double mse = 0.0;
    double mae = 0.0;
    double gm = 0.0;
    double smape = 0.0; // fraction, in [0, 2]
    std::size_t n = 0;
};

MetricsReport compute_metrics(std::span<const double> y, std::span<const double> yhat, double gm_eps = 1e-6);

struct GroupedReport {
    MetricsReport overall;
    std::map<Group, MetricsReport> per_group; // empty groups are absent
};

GroupedReport grouped_eval(const Dataset& data, std::span<const double> predictions, double gm_eps = 1e-6);
GroupedReport grouped_eval(std::span<const double> y, std::span<const double> yhat, std::span<const Group> groups,
                           double gm_eps = 1e-6);

// NaN renders as null.
nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const GroupedReport& g);

} // namespace mmreg
