// SPDX-License-Identifier: Apache-2.0
#include "mmreg/losses.hpp"

#include <cmath>

#include "mmreg/error.hpp"

namespace mmreg {

void MarginSchedule::validate() const {
    require(m0 > 0.0 && std::isfinite(m0), "margin m0 must be > 0");
    require(beta > 0.0 && std::isfinite(beta), "margin decay beta must be > 0");
}

void LossWeights::validate() const {
    require(tau > 0.0, "temperature tau must be > 0");
    require(lambda_supcon >= 0.0, "lambda must be >= 0");
}

double margin_at(std::size_t t, const MarginSchedule& s) {
    s.validate();
    if (t < s.t_n) return s.m0;
    return s.m0 * std::exp(-s.beta * static_cast<double>(t - s.t_n));
}

BatchPartition partition(std::span<const double> labels, double m) {
    require(m > 0.0, "partition: margin must be > 0");
    BatchPartition part;
    const std::size_t n = labels.size();
    if (n < 2) return part;
    part.positives.resize(n);
    part.negatives.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (std::fabs(labels[i] - labels[j]) < m)
                part.positives[i].push_back(j);
            else
                part.negatives[i].push_back(j);
        }
    }
    return part;
}

Var supcon_loss(Var z, const BatchPartition& part, double tau) {
    require(tau > 0.0, "supcon: tau must be > 0");
    Tape& tape = *z.tape;
    const Tensor& zv = z.value();
    for (std::size_t i = 0; i < zv.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < zv.cols; ++j) s += zv(i, j) * zv(i, j);
        // eps-guarded normalization leaves near-zero rows below unit norm
        if (std::sqrt(s) > 1.0 + 1e-6) fail("supcon: embedding row " + std::to_string(i) + " exceeds unit norm");
    }
    if (part.empty()) return tape.constant(0.0);
    const std::size_t B = zv.rows;
    require(part.positives.size() == B, "supcon: partition size does not match batch");

    std::size_t anchors = 0;
    for (const auto& p : part.positives)
        if (!p.empty()) ++anchors;
    if (anchors == 0) return tape.constant(0.0);

    // weights[i][p] = 1 / (|P(i)| * anchors) on positives
    Tensor w(B, B);
    Tensor anchor_w(B, 1);
    Tensor off_diag(B, B, 1.0);
    for (std::size_t i = 0; i < B; ++i) {
        off_diag(i, i) = 0.0;
        const auto& P = part.positives[i];
        if (P.empty()) continue;
        const double wi = 1.0 / (static_cast<double>(P.size()) * static_cast<double>(anchors));
        for (auto j : P) w(i, j) = wi;
        anchor_w.data[i] = 1.0 / static_cast<double>(anchors);
    }

    const Var sim = scale(matmul(z, transpose(z)), 1.0 / tau);
    const Var log_den = log(row_sum(mul(exp(sim), tape.constant(off_diag))));
    // loss = sum_i anchor_w_i * log_den_i - sum_{i,p} w_ip * sim_ip
    return sub(dot(log_den, tape.constant(anchor_w)), dot(sim, tape.constant(w)));
}

Var regression_loss(Var pred, std::span<const double> target, const LossWeights& w) {
    Tape& tape = *pred.tape;
    const Tensor& pv = pred.value();
    require(pv.cols == 1 && pv.rows == target.size(), "regression_loss: prediction shape " + shape_str(pv) +
                                                          " does not match " + std::to_string(target.size()) +
                                                          " targets");
    require(!target.empty(), "regression_loss: empty batch");
    const std::size_t n = target.size();
    const Tensor t = Tensor::column(std::vector<double>(target.begin(), target.end()));
    const Var tv = tape.constant(t);

    // Terms with |p| + |t| below eps contribute 0: mask the numerator, pad the denominator.
    Tensor mask(n, 1, 1.0), half_t_pad(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        half_t_pad.data[i] = 0.5 * std::fabs(t.data[i]);
        if (std::fabs(pv.data[i]) + std::fabs(t.data[i]) < kEpsNum) {
            mask.data[i] = 0.0;
            half_t_pad.data[i] += 1.0;
        }
    }
    const Var diff = sub(pred, tv);
    const Var num = mul(abs(diff), tape.constant(mask));
    const Var den = add(scale(abs(pred), 0.5), tape.constant(half_t_pad));
    Var loss = scale(mean(div(num, den)), w.w_smape);

    double mu = 0.0;
    for (double v : target) mu += v;
    mu /= static_cast<double>(n);
    double ss_tot = 0.0;
    for (double v : target) ss_tot += (v - mu) * (v - mu);
    if (ss_tot / static_cast<double>(n) >= kEpsNum) {
        const Var ss_res = dot(diff, diff);
        loss = add(loss, scale(ss_res, w.w_r2 / ss_tot));
    }
    return loss;
}

Stage1Terms stage1_loss(const BranchOut& out, const Batch& batch, std::size_t t, const MarginSchedule& s,
                        const LossWeights& w) {
    Stage1Terms terms;
    terms.margin = margin_at(t, s);
    terms.regression = regression_loss(out.pred_uni, batch.norm_targets, w);
    const auto part = partition(batch.targets, terms.margin);
    terms.supcon = supcon_loss(out.z, part, w.tau);
    terms.total = w.lambda_supcon == 0.0 ? terms.regression : add(terms.regression, scale(terms.supcon, w.lambda_supcon));
    return terms;
}

} // namespace mmreg
