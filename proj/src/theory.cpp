// SPDX-License-Identifier: Apache-2.0
#include "mmreg/theory.hpp"

#include <algorithm>
#include <cmath>

#include "mmreg/error.hpp"
#include "mmreg/rng.hpp"

namespace mmreg::theory {

void QuadraticTestbed::validate() const {
    require(L > 0.0, "testbed: L must be > 0");
    require(steps >= 1, "testbed: steps must be >= 1");
}

std::vector<double> gd_trajectory(const QuadraticTestbed& tb) {
    tb.validate();
    std::vector<double> u{tb.u0};
    u.reserve(tb.steps + 1);
    for (std::size_t t = 0; t < tb.steps; ++t) {
        const double grad = tb.L * u.back();
        u.push_back(u.back() - tb.eta * tb.gamma * grad);
    }
    return u;
}

const char* verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Converging: return "Converging";
    case Verdict::Oscillating: return "Oscillating";
    case Verdict::Diverging: return "Diverging";
    }
    return "?";
}

Verdict divergence_verdict(std::span<const double> traj) {
    require(traj.size() >= 3, "divergence_verdict: trajectory needs at least 3 points");
    const double start = std::fabs(traj.front());
    const double end = std::fabs(traj.back());
    require(start > 0.0 && std::isfinite(start), "divergence_verdict: start must be finite and nonzero");
    if (!std::isfinite(end)) return Verdict::Diverging;
    if (end == 0.0) return Verdict::Converging;
    const double rate = std::log(end / start) / static_cast<double>(traj.size() - 1);
    if (rate > 1e-9) return Verdict::Diverging;
    if (rate < -1e-9) return Verdict::Converging;
    return Verdict::Oscillating;
}

void FlatRegionSpec::validate() const {
    require(r > 0.0, "flat region: r must be > 0");
    require(eta > 0.0, "flat region: eta must be > 0");
    require(g_min > 0.0 && g_min <= g_max, "flat region: need 0 < G_min <= G_max");
    require(delta >= 0.0 && epsilon_g >= 0.0, "flat region: delta and epsilon must be >= 0");
    require(g_max <= (1.0 + epsilon_g) * g_min * (1.0 + 1e-12), "flat region: G_max exceeds (1 + epsilon) G_min");
}

FlatBound flat_bound(const FlatRegionSpec& spec) {
    spec.validate();
    FlatBound b;
    b.gamma_base_max = spec.r / (spec.eta * spec.g_max * (1.0 + spec.delta));
    b.gamma_fixed_max = spec.r / (spec.eta * spec.g_min);
    b.lhs = b.gamma_base_max;
    b.rhs = b.gamma_fixed_max / ((1.0 + spec.delta) * (1.0 + spec.epsilon_g));
    b.ratio_holds = b.lhs >= b.rhs * (1.0 - 1e-12);
    return b;
}

double RadialFunction::grad_norm(double rho) const {
    if (rho <= r) return g_inner + (g_outer - g_inner) * rho / r;
    return g_outer + wall * (rho - r);
}

double RadialFunction::value(std::span<const double> u) const {
    require(u.size() == center.size(), "radial function: dimension mismatch");
    double d2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) d2 += (u[i] - center[i]) * (u[i] - center[i]);
    const double rho = std::sqrt(d2);
    // integral of grad_norm from 0 to rho
    const double a = (g_outer - g_inner) / r;
    if (rho <= r) return g_inner * rho + 0.5 * a * rho * rho;
    const double inside = g_inner * r + 0.5 * a * r * r;
    const double e = rho - r;
    return inside + g_outer * e + 0.5 * wall * e * e;
}

std::vector<double> RadialFunction::gradient(std::span<const double> u) const {
    require(u.size() == center.size(), "radial function: dimension mismatch");
    std::vector<double> d(u.size());
    double d2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        d[i] = u[i] - center[i];
        d2 += d[i] * d[i];
    }
    const double rho = std::sqrt(d2);
    if (rho == 0.0) return std::vector<double>(u.size(), 0.0);
    const double s = grad_norm(rho) / rho;
    for (auto& v : d) v *= s;
    return d;
}

RadialFunction make_flat_function(const FlatRegionSpec& spec, std::size_t dim, double wall) {
    spec.validate();
    RadialFunction f;
    f.center.assign(dim, 0.0);
    f.r = spec.r;
    f.g_inner = spec.g_min;
    f.g_outer = spec.g_max;
    f.wall = wall;
    return f;
}

std::vector<double> adversarial_kappas(const FlatRegionSpec& spec, std::size_t steps, std::size_t trial,
                                       std::uint64_t seed) {
    const double hi = 1.0 + spec.delta;
    const double lo = 1.0 / hi;
    std::vector<double> k(steps);
    if (trial == 0) {
        std::fill(k.begin(), k.end(), hi);
    } else if (trial == 1) {
        std::fill(k.begin(), k.end(), lo);
    } else if (trial == 2) {
        for (std::size_t t = 0; t < steps; ++t) k[t] = t % 2 == 0 ? hi : lo;
    } else {
        Rng rng(mix_seed(seed, trial));
        for (auto& v : k) {
            const double pick = rng.uniform();
            v = pick < 0.25 ? hi : (pick < 0.5 ? lo : rng.uniform(lo, hi));
        }
    }
    return k;
}

namespace {

void validate_on_ball(const FlatRegionSpec& spec, const RadialFunction& f) {
    const std::size_t dim = f.center.size();
    require(dim >= 1, "containment: function has no dimensions");
    require(std::fabs(f.r - spec.r) <= 1e-12 * spec.r, "containment: function radius differs from spec radius");
    // Dense sampling along a radial grid in a few directions.
    constexpr int kRadial = 200;
    for (std::size_t axis = 0; axis < dim; ++axis) {
        for (double sgn : {1.0, -1.0}) {
            for (int i = 1; i <= kRadial; ++i) {
                std::vector<double> u = f.center;
                u[axis] += sgn * spec.r * static_cast<double>(i) / kRadial;
                const double g = l2(f.gradient(u));
                if (g < spec.g_min * (1.0 - 1e-12) || g > spec.g_max * (1.0 + 1e-12))
                    fail("containment: sampled gradient norm " + std::to_string(g) + " outside [G_min, G_max]");
            }
        }
    }
}

double distance(std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(d2);
}

ContainmentResult simulate(const FlatRegionSpec& spec, const RadialFunction& f, double gamma_base,
                           std::span<const double> u0, std::span<const double> kappas) {
    require(u0.size() == f.center.size(), "containment: start point dimension mismatch");
    const double limit = spec.r * (1.0 + 1e-12);
    ContainmentResult res;
    std::vector<double> u(u0.begin(), u0.end());
    res.max_distance = distance(u, f.center);
    res.stayed_inside = res.max_distance <= limit;
    for (double kappa : kappas) {
        const auto g = f.gradient(u);
        const double step = spec.eta * gamma_base * kappa;
        for (std::size_t i = 0; i < u.size(); ++i) u[i] -= step * g[i];
        const double d = distance(u, f.center);
        res.max_distance = std::max(res.max_distance, d);
        if (d > limit) res.stayed_inside = false;
    }
    return res;
}

} // namespace

ContainmentResult containment_sim(const FlatRegionSpec& spec, const RadialFunction& f, double gamma_base,
                                  std::span<const double> u0, std::span<const double> kappas) {
    spec.validate();
    validate_on_ball(spec, f);
    return simulate(spec, f, gamma_base, u0, kappas);
}

ContainmentSummary containment_trials(const FlatRegionSpec& spec, const RadialFunction& f, double gamma_base,
                                      std::size_t steps, std::size_t trials, std::uint64_t seed) {
    spec.validate();
    validate_on_ball(spec, f);
    ContainmentSummary sum;
    Rng start_rng(mix_seed(seed, 0x57A7));
    const std::size_t dim = f.center.size();
    for (std::size_t t = 0; t < trials; ++t) {
        // Uniform start in the ball; the first trials start on the boundary.
        std::vector<double> dir(dim);
        double n = 0.0;
        do {
            for (auto& v : dir) v = start_rng.normal();
            n = l2(dir);
        } while (n == 0.0);
        const double radius = t < 3 ? spec.r : spec.r * std::pow(start_rng.uniform(), 1.0 / static_cast<double>(dim));
        std::vector<double> u0(dim);
        for (std::size_t i = 0; i < dim; ++i) u0[i] = f.center[i] + radius * dir[i] / n;
        const auto kappas = adversarial_kappas(spec, steps, t, seed);
        const auto r = simulate(spec, f, gamma_base, u0, kappas);
        ++sum.trials;
        if (!r.stayed_inside) ++sum.exits;
        sum.max_distance = std::max(sum.max_distance, r.max_distance);
    }
    return sum;
}

void WellSpec::validate() const {
    require(!centers.empty(), "wells: need at least one well");
    require(centers.size() == depths.size() && centers.size() == widths.size(), "wells: field lengths differ");
    for (double w : widths) require(w > 0.0, "wells: widths must be > 0");
}

double WellSpec::value(double u) const {
    double f = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const double d = u - centers[j];
        f -= depths[j] * std::exp(-d * d / (2.0 * widths[j] * widths[j]));
    }
    return f;
}

double WellSpec::derivative(double u) const {
    double g = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const double d = u - centers[j];
        const double w2 = widths[j] * widths[j];
        g += depths[j] * d / w2 * std::exp(-d * d / (2.0 * w2));
    }
    return g;
}

WellSpec default_wells() { return WellSpec{{0.0, 2.5}, {1.0, 0.8}, {0.1, 1.0}}; }

ProbeResult double_well_probe(const WellSpec& wells, ProbeOptimizer opt, double fixed_gamma, double start,
                              std::size_t steps, std::uint64_t seed, const ProbeConfig& cfg) {
    wells.validate();
    cfg.sgm.validate();
    require(std::isfinite(start), "double_well_probe: start must be finite");

    const Objective f = [&wells](std::span<const double> x, std::vector<double>* grad) {
        if (grad != nullptr) *grad = {wells.derivative(x[0])};
        return wells.value(x[0]);
    };

    Rng rng(mix_seed(seed, 0xD0E1));
    SharpnessWindow window(cfg.sgm.window_len);
    ProbeResult res;
    double u = start;
    res.u_trace.push_back(u);
    for (std::size_t t = 0; t < steps; ++t) {
        double gamma = fixed_gamma;
        if (opt == ProbeOptimizer::Sgm) {
            const std::vector<double> x{u};
            const double s = std::max(probe_sharpness(f, x, cfg.sgm), 0.0);
            gamma = compute_gamma(window, s, cfg.sgm);
            res.sharpness_trace.push_back(s);
            res.gamma_trace.push_back(gamma);
        }
        double g = wells.derivative(u);
        if (cfg.noise_std > 0.0) g += cfg.noise_std * rng.normal();
        u -= cfg.eta * gamma * g;
        res.u_trace.push_back(u);
    }
    res.final_u = u;
    const double e = cfg.sgm.eps_probe;
    res.final_sharpness = std::max(wells.value(u + e), wells.value(u - e)) - wells.value(u);
    return res;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size() && a.size() >= 2, "pearson: need two aligned series of length >= 2");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

std::vector<CheckResult> run_suite(const SuiteOptions& opt) {
    using nlohmann::json;
    std::vector<CheckResult> out;

    // Amplified gradient descent on (L/2) u^2 with L = 1, eta = 0.1.
    struct Case {
        const char* name;
        double gamma;
        Verdict expect;
        double factor;
    };
    for (const Case& c : {Case{"divergence_gamma_5", 5.0, Verdict::Converging, 0.5},
                          Case{"divergence_gamma_20_boundary", 20.0, Verdict::Oscillating, -1.0},
                          Case{"divergence_gamma_25", 25.0, Verdict::Diverging, -1.5}}) {
        QuadraticTestbed tb{1.0, 1.0, 0.1, c.gamma, 50};
        const auto traj = gd_trajectory(tb);
        const Verdict v = divergence_verdict(traj);
        double worst = 0.0;
        for (std::size_t t = 1; t < traj.size(); ++t)
            worst = std::max(worst, std::fabs(traj[t] / traj[t - 1] - c.factor));
        out.push_back({c.name, v == c.expect && worst <= 1e-12,
                       json{{"verdict", verdict_name(v)}, {"expected", verdict_name(c.expect)},
                            {"factor", tb.factor()}, {"max_factor_error", worst}}});
    }

    {
        Rng rng(mix_seed(opt.seed, 0x7E57));
        std::size_t sampled = 0, consistent = 0;
        while (sampled < 200) {
            const double eta = rng.uniform(0.01, 0.5);
            const double L = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
            const double prod = rng.uniform(0.1, 4.0);
            if (prod >= 1.8 && prod <= 2.2) continue;
            QuadraticTestbed tb{L, rng.uniform(0.5, 2.0), eta, prod / (eta * L), 200};
            const Verdict v = divergence_verdict(gd_trajectory(tb));
            const Verdict expect = prod > 2.0 ? Verdict::Diverging : Verdict::Converging;
            ++sampled;
            if (v == expect) ++consistent;
        }
        out.push_back({"divergence_random_samples", consistent == sampled,
                       json{{"samples", sampled}, {"consistent", consistent}}});
    }

    {
        const auto b = flat_bound(FlatRegionSpec{1.0, 2.0, 2.0, 0.0, 0.0, 0.1});
        out.push_back({"flat_bound_example", std::fabs(b.gamma_base_max - 5.0) <= 1e-12,
                       json{{"gamma_base_max", b.gamma_base_max}, {"expected", 5.0}}});
    }

    const FlatRegionSpec flat{1.0, 1.0, 1.1, 0.1, 0.1, 0.1};
    const auto bound = flat_bound(flat);
    out.push_back({"flat_bound_ratio", bound.ratio_holds,
                   json{{"gamma_base_max", bound.gamma_base_max}, {"gamma_fixed_max", bound.gamma_fixed_max},
                        {"rhs", bound.rhs}}});

    {
        const auto f = make_flat_function(flat, 2);
        const auto s = containment_trials(flat, f, bound.gamma_base_max, 50, opt.containment_trials, opt.seed);
        out.push_back({"containment_at_bound", s.exits == 0,
                       json{{"trials", s.trials}, {"exits", s.exits}, {"max_distance", s.max_distance},
                            {"radius", flat.r}}});
        const auto steep = make_flat_function(flat, 2, 50.0);
        const auto s10 = containment_trials(flat, steep, 10.0 * bound.gamma_base_max, 50, 100, opt.seed);
        out.push_back({"containment_10x_exits", s10.exits == s10.trials,
                       json{{"trials", s10.trials}, {"exits", s10.exits}, {"max_distance", s10.max_distance}}});
    }

    {
        const auto wells = default_wells();
        const auto sgm = double_well_probe(wells, ProbeOptimizer::Sgm, 0.0, 0.05, opt.probe_steps, opt.seed, opt.probe);
        const auto fixed = double_well_probe(wells, ProbeOptimizer::FixedGamma, opt.probe.sgm.gamma_min, 0.05,
                                             opt.probe_steps, opt.seed, opt.probe);
        const double rho = pearson(sgm.sharpness_trace, sgm.gamma_trace);
        out.push_back({"sharpness_gamma_coupling", rho > 0.0, json{{"pearson", rho}, {"steps", opt.probe_steps}}});
        out.push_back({"sharp_well_escape", sgm.final_sharpness <= fixed.final_sharpness,
                       json{{"sgm_final_u", sgm.final_u},
                            {"sgm_final_sharpness", sgm.final_sharpness},
                            {"fixed_final_u", fixed.final_u},
                            {"fixed_final_sharpness", fixed.final_sharpness}}});

        const WellSpec wide{{0.0}, {1.0}, {1.0}};
        bool near = true;
        json finals = json::object();
        for (auto [name, o, g] : {std::tuple{"sgm", ProbeOptimizer::Sgm, 0.0},
                                  std::tuple{"fixed_min", ProbeOptimizer::FixedGamma, opt.probe.sgm.gamma_min},
                                  std::tuple{"fixed_max", ProbeOptimizer::FixedGamma, opt.probe.sgm.gamma_max}}) {
            const auto r = double_well_probe(wide, o, g, 1.5, opt.probe_steps, opt.seed, opt.probe);
            finals[name] = r.final_u;
            near = near && std::fabs(r.final_u) <= 3.0;
        }
        out.push_back({"wide_well_settles", near, json{{"final_u", finals}}});
    }
    return out;
}

nlohmann::json suite_json(const std::vector<CheckResult>& checks) {
    nlohmann::json j;
    j["schema_version"] = 1;
    bool all = true;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
        all = all && c.passed;
        arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    j["checks"] = std::move(arr);
    j["all_passed"] = all;
    return j;
}

} // namespace mmreg::theory
