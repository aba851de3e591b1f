// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

namespace mmreg {

struct ParetoWeights {
    double alpha_mm = 0.5;
    double alpha_uni = 0.5;
    bool minnorm = false; // true when the conflict branch produced the weights
};

// argmin over a in [0, 1] of |a g1 + (1 - a) g2|, in closed form.
// Returns (0.5, 0.5) when |g1 - g2| < kEpsNum.
ParetoWeights minnorm_two(std::span<const double> g1, std::span<const double> g2);

// MinNorm weights when cos(g_mm, g_uni) < 0, uniform weights otherwise.
ParetoWeights select_weights(std::span<const double> g_mm, std::span<const double> g_uni);

} // namespace mmreg
