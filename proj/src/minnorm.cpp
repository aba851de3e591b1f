// SPDX-License-Identifier: Apache-2.0
#include "mmreg/minnorm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmreg/error.hpp"
#include "mmreg/tensor.hpp"

namespace mmreg {

ParetoWeights minnorm_two(std::span<const double> g1, std::span<const double> g2) {
    require(g1.size() == g2.size(), "minnorm_two: length mismatch " + std::to_string(g1.size()) + " vs " +
                                        std::to_string(g2.size()));
    double num = 0.0; // <g2 - g1, g2>
    double den = 0.0; // |g1 - g2|^2
    for (std::size_t i = 0; i < g1.size(); ++i) {
        if (!std::isfinite(g1[i]) || !std::isfinite(g2[i])) fail_numeric("minnorm_two: non-finite gradient");
        const double d = g2[i] - g1[i];
        num += d * g2[i];
        den += d * d;
    }
    ParetoWeights w;
    w.minnorm = true;
    if (std::sqrt(den) < kEpsNum) return w;
    const double a = std::clamp(num / den, 0.0, 1.0);
    w.alpha_mm = a;
    w.alpha_uni = 1.0 - a;
    return w;
}

ParetoWeights select_weights(std::span<const double> g_mm, std::span<const double> g_uni) {
    if (cosine_similarity(g_mm, g_uni) < 0.0) return minnorm_two(g_mm, g_uni);
    return ParetoWeights{};
}

} // namespace mmreg
