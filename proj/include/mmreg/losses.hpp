// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmreg/model.hpp"
#include "mmreg/tensor.hpp"

namespace mmreg {

// m(t) = m0 for t < t_n, m0 * exp(-beta * (t - t_n)) afterwards.
struct MarginSchedule {
    double m0 = 0.4;
    double beta = 0.0005;
    std::size_t t_n = 100;

    void validate() const;
    bool operator==(const MarginSchedule&) const = default;
};

struct LossWeights {
    double lambda_supcon = 0.1;
    double w_smape = 1.0;
    double w_r2 = 1.0;
    double tau = 0.07;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

double margin_at(std::size_t t, const MarginSchedule& s);

struct BatchPartition {
    std::vector<std::vector<std::size_t>> positives;
    std::vector<std::vector<std::size_t>> negatives;

    bool empty() const { return positives.empty(); }
};

// Positives are |y_i - y_j| < m, negatives |y_i - y_j| >= m; the anchor itself is
// in neither. Batches smaller than two give an empty partition.
BatchPartition partition(std::span<const double> labels, double m);

// Supervised contrastive loss over rows of z with norm at most 1 (unit after normalization), averaged over anchors
// with at least one positive. Zero when no anchor has a positive.
Var supcon_loss(Var z, const BatchPartition& part, double tau);

// w_smape * SMAPE (fraction form) + w_r2 * (1 - R^2). The R^2 term is dropped
// when the batch target variance is below kEpsNum.
Var regression_loss(Var pred, std::span<const double> target, const LossWeights& w);

struct Stage1Terms {
    Var total;
    Var regression;
    Var supcon;
    double margin = 0.0;
};

Stage1Terms stage1_loss(const BranchOut& out, const Batch& batch, std::size_t t, const MarginSchedule& s,
                        const LossWeights& w);

} // namespace mmreg
