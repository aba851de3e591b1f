// SPDX-License-Identifier: Apache-2.0
//
// Sharpness-aware gradient modulation for multi-objective joint training.
//
// One step: probe the local sharpness of the total loss with a normalized
// ascent/descent pair, turn it into a modulation factor gamma through a
// window median, back-propagate the multimodal and unimodal losses
// separately, weight them (MinNorm on conflict, uniform otherwise), rescale
// each shared block to the baseline gradient norm times gamma, and hand the
// result to Adam. Head parameters receive the plain total-loss gradient.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmreg/losses.hpp"
#include "mmreg/minnorm.hpp"
#include "mmreg/model.hpp"

namespace mmreg {

struct SgmConfig {
    double gamma_base = 1.0;
    double gamma_min = 0.5;
    double gamma_max = 15.0;
    double eps_probe = 0.05; // probe radius
    std::size_t probe_steps = 1;
    std::size_t window_len = 20;
    double eta = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double eps_num = kEpsNum; // rescale / normalization guard
    bool force_uniform = false; // skip the conflict test, always (0.5, 0.5)

    void validate() const;
    bool operator==(const SgmConfig&) const = default;
};

class SharpnessWindow {
  public:
    explicit SharpnessWindow(std::size_t capacity = 20) : capacity_(capacity) {}

    void push(double s);
    // Mean of the two central values for even sizes. Requires at least one entry.
    double median() const;
    std::size_t size() const { return values_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return values_.empty(); }

  private:
    std::size_t capacity_;
    std::deque<double> values_;
};

// Value and (optionally) gradient of a scalar objective at a flat parameter vector.
using Objective = std::function<double(std::span<const double> theta, std::vector<double>* grad)>;

// L(theta+) - L(theta-) after probe_steps normalized ascent / descent steps of
// radius eps_probe. `grad0` may carry the gradient at theta to save one call.
// theta itself is never written.
double probe_sharpness(const Objective& f, std::span<const double> theta, const SgmConfig& cfg,
                       const std::vector<double>* grad0 = nullptr);

// Pushes s_t, then clip(gamma_base * s_t / median, gamma_min, gamma_max).
// When s_t equals the median (always the case for the first entry) the ratio is 1.
double compute_gamma(SharpnessWindow& window, double s_t, const SgmConfig& cfg);

class AdamState {
  public:
    AdamState() = default;
    explicit AdamState(const std::vector<Tensor>& like);

    std::size_t step() const { return t_; }
    const std::vector<Tensor>& first_moment() const { return m_; }
    const std::vector<Tensor>& second_moment() const { return v_; }

    // Bias-corrected Adam. Empty gradient tensors leave their parameter untouched.
    void update(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double eta, double beta1, double beta2,
                double eps);

  private:
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
};

struct JointLosses {
    Var mm;
    std::vector<Var> uni;
    Var total; // mm + sum_k uni_k
};

JointLosses joint_losses(const ForwardOut& out, const Batch& batch, const LossWeights& w);

struct GradBundle {
    std::vector<std::size_t> shared; // parameter indices of the shared encoder blocks
    std::vector<Tensor> g_mm;        // aligned with `shared`
    std::vector<Tensor> g_uni;       // sum over modalities
    std::vector<Tensor> g_base;      // total-loss gradient on shared blocks
    std::vector<Tensor> full_base;   // total-loss gradient on every parameter
    double loss_mm = 0.0;
    std::vector<double> loss_uni;
    double loss_total = 0.0;
};

GradBundle collect_gradients(const TwoBranchNet& net, const Batch& batch, const LossWeights& w);

std::vector<double> flatten(const std::vector<Tensor>& blocks);

struct Integrated {
    std::vector<Tensor> combined;  // 2 a_mm g_mm + 2 a_uni g_uni
    std::vector<Tensor> modulated; // gamma * |g_base| / (|combined| + eps) * combined
};

Integrated integrate_rescale(const GradBundle& bundle, const ParetoWeights& weights, double gamma,
                             const SgmConfig& cfg);

struct SgmState {
    SharpnessWindow window;
    AdamState adam;
    std::size_t step = 0;

    SgmState() = default;
    SgmState(const TwoBranchNet& net, const SgmConfig& cfg) : window(cfg.window_len), adam(net.values()) {}
};

struct StepReport {
    std::size_t step = 0;
    double s_raw = 0.0;
    double s_t = 0.0; // after clamping negatives to zero
    double gamma = 0.0;
    double cos_beta = 0.0;
    double alpha_mm = 0.5;
    double alpha_uni = 0.5;
    bool minnorm = false;
    double loss_mm = 0.0;
    std::vector<double> loss_uni;
    double loss_total = 0.0;

    std::string to_json() const;
    bool operator==(const StepReport&) const = default;
};

// Optional introspection of one step's intermediate gradients.
struct StepTrace {
    GradBundle bundle;
    Integrated integrated;
    std::vector<Tensor> applied; // full gradient handed to Adam
};

StepReport sgm_step(TwoBranchNet& net, const Batch& batch, SgmState& state, const SgmConfig& cfg,
                    const LossWeights& w, StepTrace* trace = nullptr);

// Naive joint training: Adam on the total-loss gradient of every parameter.
StepReport joint_adam_step(TwoBranchNet& net, const Batch& batch, AdamState& adam, const SgmConfig& cfg,
                           const LossWeights& w);

// Total joint loss as an Objective over the flattened parameters of `net`.
Objective joint_objective(const TwoBranchNet& net, const Batch& batch, const LossWeights& w);

} // namespace mmreg
