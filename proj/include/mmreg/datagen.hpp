// SPDX-License-Identifier: Apache-2.0
//
// Synthetic long-tailed multimodal regression data.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmreg {

enum class Group { Many = 0, Middle = 1, Few = 2 };

const char* group_name(Group g);
Group parse_group(const std::string& s);

struct LongTailSpec {
    std::size_t n_samples = 2000;
    double target_lo = -18.0;
    double target_hi = 1.0;
    // Targets are lo + (hi - lo) * (1 - B) with B ~ Beta(1, tail_exponent).
    double tail_exponent = 5.0;
    std::vector<std::size_t> modality_dims{16, 8};
    std::vector<double> noise_scales{0.5, 0.25};
    std::uint64_t seed = 42;

    void validate() const;
    bool operator==(const LongTailSpec&) const = default;
};

struct GroupThresholds {
    double bin_width = 1.0;
    std::size_t many_min = 100;
    std::size_t few_max = 20;

    void validate() const;
    bool operator==(const GroupThresholds&) const = default;
};

struct MultimodalSample {
    std::vector<std::vector<double>> features; // one vector per modality
    double target = 0.0;
    Group group = Group::Many;
};

struct Dataset {
    std::vector<std::size_t> modality_dims;
    std::vector<MultimodalSample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t modalities() const { return modality_dims.size(); }
    std::vector<double> targets() const;
    std::array<std::size_t, 3> group_counts() const;
};

std::vector<double> sample_targets(const LongTailSpec& spec);

// Modality k gets W_k * phi_k(u) + noise_k * N(0, 1), where u rescales y onto
// [-1, 1]. phi_0(u) = (u); phi_k(u) = (u, u^2, sin(3u)) for k >= 1. W_k is a
// fixed Gaussian projection drawn from spec.seed.
Dataset synthesize(const LongTailSpec& spec, const std::vector<double>& targets);

// Histogram into bins floor(y / bin_width); bins holding >= many_min samples
// are Many, <= few_max are Few, everything else Middle.
std::vector<Group> assign_groups(const std::vector<double>& targets, const GroupThresholds& th);

// Full generation: targets -> features -> group labels.
Dataset generate(const LongTailSpec& spec, const GroupThresholds& th);

struct Split {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_index;
    std::vector<std::size_t> test_index;
};

// Stratified by group; per-group quotas by largest remainder so that the train
// size is round(fraction * n). Samples keep their original relative order.
Split split(const Dataset& data, double train_fraction, std::uint64_t seed);

// Clinical severity codes used by the level-based post-processing.
inline constexpr std::array<int, 4> kLevelCodes{1, -6, -12, -18};

// Smallest-magnitude code whose scale covers y, so that y / level lies in [0, 1].
int level_for(double y);
double normalize_target(double y, int level);

void write_csv(const Dataset& d, std::ostream& os);
void write_csv(const Dataset& d, const std::string& path);
Dataset read_csv(std::istream& is);
Dataset read_csv(const std::string& path);

} // namespace mmreg
