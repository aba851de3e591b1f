// SPDX-License-Identifier: Apache-2.0
//
// Config-driven orchestration: data generation, per-modality contrastive
// pretraining, joint training (modulated or naive baseline), evaluation,
// the theory suite and the double-well probe. Every command reads and writes
// files inside RunConfig::output_dir and returns its JSON report.
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "mmreg/datagen.hpp"
#include "mmreg/losses.hpp"
#include "mmreg/model.hpp"
#include "mmreg/sgm.hpp"
#include "mmreg/theory.hpp"

namespace mmreg {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "runs/default";

    LongTailSpec data;
    GroupThresholds groups;
    double train_fraction = 0.8;

    ArchSpec arch;

    std::size_t stage1_epochs = 10;
    MarginSchedule margin;
    LossWeights loss;
    double stage1_lr = 1e-4;

    std::size_t stage2_epochs = 10;
    SgmConfig sgm;

    std::size_t baseline_epochs = 20;
    std::size_t batch_size = 8;

    std::size_t probe_steps = 600;
    double probe_start = 0.05;
    double probe_eta = 0.039;
    double probe_noise_std = 0.0;
    double probe_eps = 0.1;
    std::size_t containment_trials = 10000;

    void validate() const;
    bool operator==(const RunConfig&) const = default;

    // Seeds derived from `seed` for data and weight initialization.
    LongTailSpec data_spec() const;
    ArchSpec arch_spec() const;
    theory::SuiteOptions suite_options() const;
};

// Flat `key = value` text with `#` comments. Unknown keys, duplicate keys and
// malformed values are validation errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Canonical documented form; parse_config(render_config(c)) == c.
std::string render_config(const RunConfig& c);
// Applies one `key = value` assignment.
void set_config_value(RunConfig& c, const std::string& key, const std::string& value);

// Standard file names inside output_dir.
struct RunPaths {
    std::string dir;

    std::string train_csv() const { return dir + "/train.csv"; }
    std::string test_csv() const { return dir + "/test.csv"; }
    std::string data_summary() const { return dir + "/data_summary.json"; }
    std::string config_snapshot() const { return dir + "/config.snapshot"; }
    std::string config_resolved() const { return dir + "/config.resolved"; }
    std::string pretrain_ckpt(std::size_t k) const { return dir + "/pretrain_m" + std::to_string(k) + ".json"; }
    std::string pretrain_log() const { return dir + "/pretrain_log.jsonl"; }
    std::string pretrain_summary() const { return dir + "/pretrain_summary.json"; }
    std::string joint_ckpt() const { return dir + "/joint.json"; }
    std::string joint_log() const { return dir + "/joint_steps.jsonl"; }
    std::string joint_summary() const { return dir + "/joint_summary.json"; }
    std::string baseline_ckpt() const { return dir + "/baseline.json"; }
    std::string baseline_log() const { return dir + "/baseline_steps.jsonl"; }
    std::string baseline_summary() const { return dir + "/baseline_summary.json"; }
    std::string metrics() const { return dir + "/metrics.json"; }
    std::string theory() const { return dir + "/theory.json"; }
    std::string probe() const { return dir + "/probe.json"; }
    std::string probe_trace() const { return dir + "/probe_trace.csv"; }
};

// Writes the config snapshot. `source_text` is copied verbatim when non-empty,
// otherwise the rendered config is written. The resolved config is always rendered.
void write_config_files(const RunConfig& c, const std::string& source_text);

nlohmann::json cmd_gen_data(const RunConfig& c);
nlohmann::json cmd_pretrain(const RunConfig& c);
nlohmann::json cmd_train_joint(const RunConfig& c, bool baseline);
nlohmann::json cmd_eval(const RunConfig& c);
// `passed` receives whether every check held.
nlohmann::json cmd_theory(const RunConfig& c, bool* passed = nullptr);
nlohmann::json cmd_probe(const RunConfig& c);

} // namespace mmreg
