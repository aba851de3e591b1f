// SPDX-License-Identifier: Apache-2.0
#include "mmreg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mmreg/error.hpp"
#include "mmreg/rng.hpp"

namespace mmreg {

namespace {
constexpr std::uint64_t kStreamTargets = 1;
constexpr std::uint64_t kStreamProjection = 2;
constexpr std::uint64_t kStreamNoise = 3;
} // namespace

const char* group_name(Group g) {
    switch (g) {
    case Group::Many: return "Many";
    case Group::Middle: return "Middle";
    case Group::Few: return "Few";
    }
    return "?";
}

Group parse_group(const std::string& s) {
    if (s == "Many") return Group::Many;
    if (s == "Middle") return Group::Middle;
    if (s == "Few") return Group::Few;
    fail("unknown group label '" + s + "'");
}

void LongTailSpec::validate() const {
    require(target_lo < target_hi, "target_range: lo must be < hi");
    require(tail_exponent > 0.0, "tail_exponent must be > 0");
    require(modality_dims.size() >= 2, "need at least two modalities");
    for (auto d : modality_dims) require(d >= 1, "modality dimension 0");
    require(noise_scales.size() == modality_dims.size(), "noise_scales must have one entry per modality");
    for (double s : noise_scales) require(s >= 0.0 && std::isfinite(s), "noise scale must be finite and >= 0");
}

void GroupThresholds::validate() const {
    require(bin_width > 0.0, "bin_width must be > 0");
    require(few_max < many_min, "few_max must be < many_min");
}

std::vector<double> Dataset::targets() const {
    std::vector<double> t;
    t.reserve(samples.size());
    for (const auto& s : samples) t.push_back(s.target);
    return t;
}

std::array<std::size_t, 3> Dataset::group_counts() const {
    std::array<std::size_t, 3> c{0, 0, 0};
    for (const auto& s : samples) ++c[static_cast<int>(s.group)];
    return c;
}

std::vector<double> sample_targets(const LongTailSpec& spec) {
    spec.validate();
    Rng rng(mix_seed(spec.seed, kStreamTargets));
    std::vector<double> out;
    out.reserve(spec.n_samples);
    const double inv_k = std::isinf(spec.tail_exponent) ? 0.0 : 1.0 / spec.tail_exponent;
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        // Inverse CDF of Beta(1, k): B = 1 - (1 - U)^(1/k), so 1 - B = (1 - U)^(1/k).
        const double one_minus_b = std::pow(1.0 - rng.uniform(), inv_k);
        const double y = spec.target_lo + (spec.target_hi - spec.target_lo) * one_minus_b;
        out.push_back(std::clamp(y, spec.target_lo, spec.target_hi));
    }
    return out;
}

namespace {

std::vector<double> phi(std::size_t k, double u) {
    if (k == 0) return {u};
    return {u, u * u, std::sin(3.0 * u)};
}

} // namespace

Dataset synthesize(const LongTailSpec& spec, const std::vector<double>& targets) {
    spec.validate();
    const std::size_t K = spec.modality_dims.size();

    Rng proj_rng(mix_seed(spec.seed, kStreamProjection));
    std::vector<std::vector<double>> W(K); // row-major dims[k] x phi_dim
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t pd = phi(k, 0.0).size();
        W[k].resize(spec.modality_dims[k] * pd);
        const double s = 1.0 / std::sqrt(static_cast<double>(pd));
        for (auto& w : W[k]) w = s * proj_rng.normal();
    }

    Rng noise_rng(mix_seed(spec.seed, kStreamNoise));
    Dataset d;
    d.modality_dims = spec.modality_dims;
    d.samples.reserve(targets.size());
    const double mid = 0.5 * (spec.target_lo + spec.target_hi);
    const double half = 0.5 * (spec.target_hi - spec.target_lo);
    for (double y : targets) {
        MultimodalSample s;
        s.target = y;
        const double u = (y - mid) / half;
        for (std::size_t k = 0; k < K; ++k) {
            const auto f = phi(k, u);
            std::vector<double> x(spec.modality_dims[k], 0.0);
            for (std::size_t r = 0; r < x.size(); ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < f.size(); ++c) acc += W[k][r * f.size() + c] * f[c];
                x[r] = acc;
            }
            if (spec.noise_scales[k] > 0.0)
                for (auto& v : x) v += spec.noise_scales[k] * noise_rng.normal();
            s.features.push_back(std::move(x));
        }
        d.samples.push_back(std::move(s));
    }
    return d;
}

std::vector<Group> assign_groups(const std::vector<double>& targets, const GroupThresholds& th) {
    th.validate();
    std::map<long long, std::size_t> counts;
    std::vector<long long> bin(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        bin[i] = static_cast<long long>(std::floor(targets[i] / th.bin_width));
        ++counts[bin[i]];
    }
    std::vector<Group> out(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto c = counts[bin[i]];
        out[i] = c >= th.many_min ? Group::Many : (c <= th.few_max ? Group::Few : Group::Middle);
    }
    return out;
}

Dataset generate(const LongTailSpec& spec, const GroupThresholds& th) {
    const auto t = sample_targets(spec);
    Dataset d = synthesize(spec, t);
    const auto g = assign_groups(t, th);
    for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i].group = g[i];
    return d;
}

Split split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must lie in (0, 1)");
    const std::size_t n = data.size();
    std::array<std::vector<std::size_t>, 3> by_group;
    for (std::size_t i = 0; i < n; ++i) by_group[static_cast<int>(data.samples[i].group)].push_back(i);

    const auto total_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    std::array<std::size_t, 3> quota{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int g = 0; g < 3; ++g) {
        const double exact = train_fraction * static_cast<double>(by_group[g].size());
        quota[g] = static_cast<std::size_t>(std::floor(exact));
        remainder[g] = exact - static_cast<double>(quota[g]);
        assigned += quota[g];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int g : order) {
        if (assigned >= total_train) break;
        if (quota[g] < by_group[g].size()) {
            ++quota[g];
            ++assigned;
        }
    }

    Rng rng(seed);
    Split s;
    for (int g = 0; g < 3; ++g) {
        auto idx = by_group[g];
        rng.shuffle(idx);
        s.train_index.insert(s.train_index.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[g]));
        s.test_index.insert(s.test_index.end(), idx.begin() + static_cast<std::ptrdiff_t>(quota[g]), idx.end());
    }
    std::sort(s.train_index.begin(), s.train_index.end());
    std::sort(s.test_index.begin(), s.test_index.end());
    s.train.modality_dims = s.test.modality_dims = data.modality_dims;
    for (auto i : s.train_index) s.train.samples.push_back(data.samples[i]);
    for (auto i : s.test_index) s.test.samples.push_back(data.samples[i]);
    return s;
}

int level_for(double y) {
    require(std::isfinite(y) && y >= -18.0 && y <= 1.0,
            "target " + std::to_string(y) + " outside the level-coded range [-18, 1]");
    if (y >= 0.0) return 1;
    if (y >= -6.0) return -6;
    if (y >= -12.0) return -12;
    return -18;
}

double normalize_target(double y, int level) {
    require(std::find(kLevelCodes.begin(), kLevelCodes.end(), level) != kLevelCodes.end(),
            "unknown level code " + std::to_string(level));
    return y / static_cast<double>(level);
}

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) fail("bad number '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail("bad number '" + s + "'");
    } catch (const std::out_of_range&) {
        fail("number out of range '" + s + "'");
    }
}

} // namespace

void write_csv(const Dataset& d, std::ostream& os) {
    os << "y,group";
    for (std::size_t k = 0; k < d.modalities(); ++k)
        for (std::size_t j = 0; j < d.modality_dims[k]; ++j) os << ",m" << (k + 1) << "_" << j;
    os << "\n";
    for (const auto& s : d.samples) {
        os << fmt17(s.target) << "," << group_name(s.group);
        for (const auto& f : s.features)
            for (double v : f) os << "," << fmt17(v);
        os << "\n";
    }
}

void write_csv(const Dataset& d, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open '" + path + "' for writing");
    write_csv(d, f);
    if (!f) fail_io("write failed for '" + path + "'");
}

Dataset read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) fail("empty CSV");
    const auto header = split_line(line);
    require(header.size() >= 2 && header[0] == "y" && header[1] == "group", "CSV header must start with y,group");

    Dataset d;
    std::size_t current = 0;
    for (std::size_t c = 2; c < header.size(); ++c) {
        const auto& h = header[c];
        const auto us = h.find('_');
        require(h.size() > 1 && h[0] == 'm' && us != std::string::npos, "bad feature column '" + h + "'");
        const auto k = static_cast<std::size_t>(std::stoul(h.substr(1, us - 1)));
        const auto j = static_cast<std::size_t>(std::stoul(h.substr(us + 1)));
        require(k >= 1, "modality index starts at 1");
        if (k != current) {
            require(k == current + 1 && j == 0, "feature columns out of order at '" + h + "'");
            d.modality_dims.push_back(0);
            current = k;
        }
        require(j == d.modality_dims.back(), "feature columns out of order at '" + h + "'");
        ++d.modality_dims.back();
    }

    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        require(cells.size() == header.size(), "CSV line " + std::to_string(lineno) + ": expected " +
                                                   std::to_string(header.size()) + " cells");
        MultimodalSample s;
        s.target = parse_double(cells[0]);
        s.group = parse_group(cells[1]);
        std::size_t c = 2;
        for (auto dim : d.modality_dims) {
            std::vector<double> f(dim);
            for (auto& v : f) v = parse_double(cells[c++]);
            s.features.push_back(std::move(f));
        }
        d.samples.push_back(std::move(s));
    }
    return d;
}

Dataset read_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open '" + path + "'");
    return read_csv(f);
}

} // namespace mmreg
