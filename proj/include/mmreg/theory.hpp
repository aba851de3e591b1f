// SPDX-License-Identifier: Apache-2.0
//
// Numerical checks of the stability results behind sharpness-aware
// modulation: the divergence regime of amplified gradient descent on a
// quadratic, the base step bound that keeps modulated updates inside a flat
// neighborhood, and a 1-D multi-well landscape probe.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmreg/sgm.hpp"

namespace mmreg::theory {

// f(u) = (L / 2) u^2, u_{t+1} = u_t - eta * gamma * f'(u_t).
struct QuadraticTestbed {
    double L = 1.0;
    double u0 = 1.0;
    double eta = 0.1;
    double gamma = 1.0;
    std::size_t steps = 50;

    void validate() const;
    // 1 - eta * gamma * L; the exact per-step multiplier.
    double factor() const { return 1.0 - eta * gamma * L; }
};

std::vector<double> gd_trajectory(const QuadraticTestbed& tb);

enum class Verdict { Converging, Oscillating, Diverging };
const char* verdict_name(Verdict v);

// Classifies by the mean per-step log growth of |u|: above +1e-9 is Diverging,
// below -1e-9 is Converging, otherwise Oscillating. Overflow counts as
// Diverging and reaching exactly zero as Converging.
Verdict divergence_verdict(std::span<const double> traj);

struct FlatRegionSpec {
    double r = 1.0;
    double g_min = 1.0;
    double g_max = 1.0;
    double epsilon_g = 0.0; // g_max <= (1 + epsilon_g) g_min
    double delta = 0.0;     // kappa_t in [1 / (1 + delta), 1 + delta]
    double eta = 0.1;

    void validate() const;
};

struct FlatBound {
    double gamma_base_max = 0.0;  // r / (eta g_max (1 + delta))
    double gamma_fixed_max = 0.0; // r / (eta g_min)
    double lhs = 0.0;             // gamma_base_max
    double rhs = 0.0;             // gamma_fixed_max / ((1 + delta)(1 + epsilon_g))
    bool ratio_holds = false;
};

FlatBound flat_bound(const FlatRegionSpec& spec);

// Radially symmetric test function around `center`. Gradient norm grows
// linearly from g_inner at the center to g_outer at radius r, then with
// slope `wall` outside the ball.
struct RadialFunction {
    std::vector<double> center{0.0, 0.0};
    double r = 1.0;
    double g_inner = 1.0;
    double g_outer = 1.0;
    double wall = 0.0;

    double grad_norm(double rho) const;
    double value(std::span<const double> u) const;
    std::vector<double> gradient(std::span<const double> u) const;
};

// Flat-bottomed function matching the region's gradient bounds.
RadialFunction make_flat_function(const FlatRegionSpec& spec, std::size_t dim = 2, double wall = 0.0);

// Adversarial kappa sequences: trial 0 pins 1 + delta, trial 1 pins 1 / (1 + delta),
// trial 2 alternates, later trials mix endpoints with uniform draws.
std::vector<double> adversarial_kappas(const FlatRegionSpec& spec, std::size_t steps, std::size_t trial,
                                       std::uint64_t seed);

struct ContainmentResult {
    bool stayed_inside = true;
    double max_distance = 0.0;
};

// u <- u - eta * gamma_base * kappa_t * grad f(u) from u0; inside means
// |u - center| <= r (1 + 1e-12). Errors when dense sampling of f on the ball
// violates the region's gradient bounds.
ContainmentResult containment_sim(const FlatRegionSpec& spec, const RadialFunction& f, double gamma_base,
                                  std::span<const double> u0, std::span<const double> kappas);

struct ContainmentSummary {
    std::size_t trials = 0;
    std::size_t exits = 0;
    double max_distance = 0.0;
};

ContainmentSummary containment_trials(const FlatRegionSpec& spec, const RadialFunction& f, double gamma_base,
                                      std::size_t steps, std::size_t trials, std::uint64_t seed);

// f(u) = -sum_j depth_j exp(-(u - c_j)^2 / (2 w_j^2))
struct WellSpec {
    std::vector<double> centers;
    std::vector<double> depths;
    std::vector<double> widths;

    void validate() const;
    double value(double u) const;
    double derivative(double u) const;
};

struct ProbeConfig {
    double eta = 0.039;
    double noise_std = 0.0; // additive Gaussian gradient noise, drawn from the run seed
    SgmConfig sgm = [] {
        SgmConfig c;
        c.eps_probe = 0.1;
        c.window_len = 20;
        return c;
    }();
};

enum class ProbeOptimizer { Sgm, FixedGamma };

struct ProbeResult {
    double final_u = 0.0;
    // max(f(u + eps), f(u - eps)) - f(u) at the final point, eps = eps_probe.
    double final_sharpness = 0.0;
    std::vector<double> u_trace;
    std::vector<double> sharpness_trace; // sgm only
    std::vector<double> gamma_trace;     // sgm only
};

ProbeResult double_well_probe(const WellSpec& wells, ProbeOptimizer opt, double fixed_gamma, double start,
                              std::size_t steps, std::uint64_t seed, const ProbeConfig& cfg = {});

double pearson(std::span<const double> a, std::span<const double> b);

struct CheckResult {
    std::string name;
    bool passed = false;
    nlohmann::json detail;
};

struct SuiteOptions {
    std::uint64_t seed = 42;
    std::size_t containment_trials = 10000;
    ProbeConfig probe;
    std::size_t probe_steps = 600;
};

// Every check above with its default instance; one entry per named check.
std::vector<CheckResult> run_suite(const SuiteOptions& opt = {});
nlohmann::json suite_json(const std::vector<CheckResult>& checks);

// Default probe landscape: a narrow deep well at 0 and a wide shallow one at 2.5.
WellSpec default_wells();

} // namespace mmreg::theory
