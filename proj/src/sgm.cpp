// SPDX-License-Identifier: Apache-2.0
#include "mmreg/sgm.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <json.hpp>

#include "mmreg/error.hpp"

namespace mmreg {

void SgmConfig::validate() const {
    require(gamma_min > 0.0 && gamma_min <= gamma_base && gamma_base <= gamma_max,
            "sgm: need 0 < gamma_min <= gamma_base <= gamma_max");
    require(window_len >= 1, "sgm: window_len must be >= 1");
    require(probe_steps >= 1, "sgm: probe_steps must be >= 1");
    require(eps_probe >= 0.0, "sgm: eps_probe must be >= 0");
    require(eta > 0.0, "sgm: learning rate must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "sgm: Adam betas must lie in [0, 1)");
    require(eps_num > 0.0, "sgm: eps_num must be > 0");
}

void SharpnessWindow::push(double s) {
    values_.push_back(s);
    while (values_.size() > capacity_) values_.pop_front();
}

double SharpnessWindow::median() const {
    require(!values_.empty(), "median of an empty sharpness window");
    std::vector<double> v(values_.begin(), values_.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double probe_sharpness(const Objective& f, std::span<const double> theta, const SgmConfig& cfg,
                       const std::vector<double>* grad0) {
    auto walk = [&](double sign) {
        std::vector<double> x(theta.begin(), theta.end());
        std::vector<double> g;
        for (std::size_t step = 0; step < cfg.probe_steps; ++step) {
            if (step == 0 && grad0 != nullptr) {
                require(grad0->size() == x.size(), "probe_sharpness: gradient length mismatch");
                g = *grad0;
            } else {
                g.assign(x.size(), 0.0);
                const double v = f(x, &g);
                if (!std::isfinite(v)) fail_numeric("probe_sharpness: non-finite loss while probing");
            }
            const double n = l2(g);
            if (!std::isfinite(n)) fail_numeric("probe_sharpness: non-finite gradient while probing");
            const double c = sign * cfg.eps_probe / (n + cfg.eps_num);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += c * g[i];
        }
        const double v = f(x, nullptr);
        if (!std::isfinite(v)) fail_numeric("probe_sharpness: non-finite loss while probing");
        return v;
    };
    const double up = walk(+1.0);
    const double down = walk(-1.0);
    return up - down;
}

double compute_gamma(SharpnessWindow& window, double s_t, const SgmConfig& cfg) {
    if (!std::isfinite(s_t)) fail_numeric("compute_gamma: non-finite sharpness");
    window.push(s_t);
    const double med = window.median();
    const double ratio = s_t == med ? 1.0 : s_t / std::max(med, cfg.eps_num);
    return std::clamp(cfg.gamma_base * ratio, cfg.gamma_min, cfg.gamma_max);
}

AdamState::AdamState(const std::vector<Tensor>& like) {
    for (const auto& t : like) {
        m_.emplace_back(t.rows, t.cols);
        v_.emplace_back(t.rows, t.cols);
    }
}

void AdamState::update(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double eta, double beta1,
                       double beta2, double eps) {
    require(params.size() == grads.size() && params.size() == m_.size(), "adam: parameter count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (grads[p].empty()) continue;
        require(grads[p].same_shape(params[p]), "adam: gradient shape mismatch");
        auto& m = m_[p].data;
        auto& v = v_[p].data;
        auto& x = params[p].data;
        const auto& g = grads[p].data;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!std::isfinite(g[i])) fail_numeric("adam: non-finite gradient");
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            x[i] -= eta * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
}

JointLosses joint_losses(const ForwardOut& out, const Batch& batch, const LossWeights& w) {
    JointLosses l;
    l.mm = regression_loss(out.pred_mm, batch.norm_targets, w);
    l.total = l.mm;
    for (const auto& p : out.pred_uni) {
        l.uni.push_back(regression_loss(p, batch.norm_targets, w));
        l.total = add(l.total, l.uni.back());
    }
    return l;
}

std::vector<double> flatten(const std::vector<Tensor>& blocks) {
    std::vector<double> flat;
    for (const auto& b : blocks) flat.insert(flat.end(), b.data.begin(), b.data.end());
    return flat;
}

GradBundle collect_gradients(const TwoBranchNet& net, const Batch& batch, const LossWeights& w) {
    Tape tape;
    const auto p = bind_params(tape, net.values());
    const auto out = forward(net, p, tape, batch);
    const auto losses = joint_losses(out, batch, w);
    const std::size_t np = net.params().size();

    GradBundle b;
    b.shared = net.shared_indices();
    require(!b.shared.empty(), "collect_gradients: network has no shared parameters");
    b.loss_mm = losses.mm.item();
    b.loss_total = losses.total.item();

    auto pick = [&](const std::vector<Tensor>& all) {
        std::vector<Tensor> out_blocks;
        for (auto i : b.shared) out_blocks.push_back(all[i]);
        return out_blocks;
    };

    b.g_mm = pick(tape.param_grads(losses.mm, np));
    for (std::size_t i : b.shared) b.g_uni.emplace_back(net.params()[i].value.rows, net.params()[i].value.cols);
    for (const auto& lu : losses.uni) {
        b.loss_uni.push_back(lu.item());
        const auto gk = pick(tape.param_grads(lu, np));
        for (std::size_t s = 0; s < gk.size(); ++s)
            for (std::size_t j = 0; j < gk[s].size(); ++j) b.g_uni[s].data[j] += gk[s].data[j];
    }
    b.full_base = tape.param_grads(losses.total, np);
    b.g_base = pick(b.full_base);
    return b;
}

Integrated integrate_rescale(const GradBundle& bundle, const ParetoWeights& weights, double gamma,
                             const SgmConfig& cfg) {
    require(bundle.g_mm.size() == bundle.g_uni.size() && bundle.g_mm.size() == bundle.g_base.size(),
            "integrate_rescale: gradient bundle blocks are not aligned");
    Integrated r;
    for (std::size_t i = 0; i < bundle.g_mm.size(); ++i) {
        const Tensor& gm = bundle.g_mm[i];
        const Tensor& gu = bundle.g_uni[i];
        require(gm.same_shape(gu) && gm.same_shape(bundle.g_base[i]), "integrate_rescale: block shape mismatch");
        Tensor c(gm.rows, gm.cols);
        for (std::size_t j = 0; j < c.size(); ++j)
            c.data[j] = 2.0 * weights.alpha_mm * gm.data[j] + 2.0 * weights.alpha_uni * gu.data[j];
        const double factor = gamma * l2(bundle.g_base[i].data) / (l2(c.data) + cfg.eps_num);
        Tensor m = c;
        for (auto& v : m.data) v *= factor;
        r.combined.push_back(std::move(c));
        r.modulated.push_back(std::move(m));
    }
    return r;
}

std::string StepReport::to_json() const {
    nlohmann::json j{{"step", step},       {"s_t", s_t},          {"s_raw", s_raw},
                     {"gamma", gamma},     {"cos_beta", cos_beta}, {"alpha_mm", alpha_mm},
                     {"alpha_uni", alpha_uni}, {"minnorm", minnorm}, {"loss_mm", loss_mm},
                     {"loss_uni", loss_uni}, {"loss_total", loss_total}};
    return j.dump();
}

Objective joint_objective(const TwoBranchNet& net, const Batch& batch, const LossWeights& w) {
    auto scratch = std::make_shared<TwoBranchNet>(net);
    return [scratch, &batch, w](std::span<const double> theta, std::vector<double>* grad) {
        scratch->unflatten(theta);
        Tape tape;
        const auto p = bind_params(tape, scratch->values());
        const auto out = forward(*scratch, p, tape, batch);
        const Var total = joint_losses(out, batch, w).total;
        if (grad != nullptr) *grad = flatten(tape.param_grads(total, p.size()));
        return total.item();
    };
}

StepReport sgm_step(TwoBranchNet& net, const Batch& batch, SgmState& state, const SgmConfig& cfg,
                    const LossWeights& w, StepTrace* trace) {
    require(batch.size() >= 1, "sgm_step: empty batch");
    cfg.validate();

    GradBundle bundle = collect_gradients(net, batch, w);

    // Step 1: sharpness and modulation factor.
    const auto theta = net.flatten();
    const auto g0 = flatten(bundle.full_base);
    StepReport rep;
    rep.s_raw = probe_sharpness(joint_objective(net, batch, w), theta, cfg, &g0);
    rep.s_t = std::max(rep.s_raw, 0.0);
    rep.gamma = compute_gamma(state.window, rep.s_t, cfg);

    // Steps 2-3: conflict test on the shared parameters.
    const auto fm = flatten(bundle.g_mm);
    const auto fu = flatten(bundle.g_uni);
    rep.cos_beta = cosine_similarity(fm, fu);
    const ParetoWeights weights = cfg.force_uniform ? ParetoWeights{} : select_weights(fm, fu);
    rep.alpha_mm = weights.alpha_mm;
    rep.alpha_uni = weights.alpha_uni;
    rep.minnorm = weights.minnorm;

    // Steps 4-5: integrate and rescale shared blocks; heads keep the total-loss gradient.
    Integrated integ = integrate_rescale(bundle, weights, rep.gamma, cfg);
    std::vector<Tensor> applied = bundle.full_base;
    for (std::size_t s = 0; s < bundle.shared.size(); ++s) applied[bundle.shared[s]] = integ.modulated[s];

    // Step 6.
    auto params = net.values();
    state.adam.update(params, applied, cfg.eta, cfg.beta1, cfg.beta2, cfg.adam_eps);
    net.set_values(params);

    rep.step = ++state.step;
    rep.loss_mm = bundle.loss_mm;
    rep.loss_uni = bundle.loss_uni;
    rep.loss_total = bundle.loss_total;
    if (trace != nullptr) {
        trace->bundle = std::move(bundle);
        trace->integrated = std::move(integ);
        trace->applied = std::move(applied);
    }
    return rep;
}

StepReport joint_adam_step(TwoBranchNet& net, const Batch& batch, AdamState& adam, const SgmConfig& cfg,
                           const LossWeights& w) {
    require(batch.size() >= 1, "joint_adam_step: empty batch");
    Tape tape;
    const auto p = bind_params(tape, net.values());
    const auto out = forward(net, p, tape, batch);
    const auto losses = joint_losses(out, batch, w);
    const auto grads = tape.param_grads(losses.total, p.size());
    auto params = net.values();
    adam.update(params, grads, cfg.eta, cfg.beta1, cfg.beta2, cfg.adam_eps);
    net.set_values(params);

    StepReport rep;
    rep.step = adam.step();
    rep.gamma = 1.0;
    rep.loss_mm = losses.mm.item();
    for (const auto& u : losses.uni) rep.loss_uni.push_back(u.item());
    rep.loss_total = losses.total.item();
    return rep;
}

} // namespace mmreg
