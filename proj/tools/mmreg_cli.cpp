// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Talks to the library only through the C interface.
#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "mmreg/mmreg.h"

namespace {

// 0 success, 1 invalid input, 2 failed check, 3 runtime failure.
int exit_code(mmreg_status st) {
    switch (st) {
    case MMREG_OK: return 0;
    case MMREG_ERR_CHECK_FAILED: return 2;
    case MMREG_ERR_VALIDATION:
    case MMREG_ERR_IO: return 1;
    default: return 3;
    }
}

struct Common {
    std::string config;
    std::optional<unsigned long long> seed;
    std::string output_dir;
    bool baseline = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "run configuration file (key = value)");
    sub->add_option("--seed", c.seed, "override the configured seed");
    sub->add_option("--output-dir", c.output_dir, "override the configured output directory");
}

int run(const Common& c, const std::function<mmreg_status(const mmreg_config*, char**)>& cmd) {
    mmreg_config* cfg = nullptr;
    mmreg_status st = c.config.empty() ? mmreg_config_default(&cfg) : mmreg_config_load(c.config.c_str(), &cfg);
    if (st == MMREG_OK && c.seed) st = mmreg_config_set(cfg, "seed", std::to_string(*c.seed).c_str());
    if (st == MMREG_OK && !c.output_dir.empty()) st = mmreg_config_set(cfg, "output_dir", c.output_dir.c_str());
    char* report = nullptr;
    if (st == MMREG_OK) st = cmd(cfg, &report);
    if (report != nullptr) {
        std::cout << report << "\n";
        mmreg_free_string(report);
    }
    if (st != MMREG_OK) std::cerr << "error: " << mmreg_last_error() << "\n";
    mmreg_config_free(cfg);
    return exit_code(st);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Long-tailed multimodal regression with sharpness-aware gradient modulation"};
    app.set_version_flag("--version", std::string(mmreg_version()));
    app.require_subcommand(1);

    Common common;
    std::function<mmreg_status(const mmreg_config*, char**)> cmd;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic long-tailed dataset and split it");
    auto* pre = app.add_subcommand("pretrain", "per-modality adaptive-margin contrastive pretraining");
    auto* joint = app.add_subcommand("train-joint", "joint training with sharpness-aware modulation");
    auto* eval = app.add_subcommand("eval", "grouped test metrics for every trained checkpoint");
    auto* theory = app.add_subcommand("theory", "run the stability check suite");
    auto* probe = app.add_subcommand("probe", "double-well sharpness probe");
    auto* render = app.add_subcommand("render-config", "print the resolved configuration");
    for (auto* s : {gen, pre, joint, eval, theory, probe, render}) add_common(s, common);
    joint->add_flag("--baseline", common.baseline, "train the naive joint Adam baseline instead");

    gen->callback([&] { cmd = mmreg_gen_data; });
    pre->callback([&] { cmd = mmreg_pretrain; });
    joint->callback([&] {
        cmd = [&](const mmreg_config* c, char** out) { return mmreg_train_joint(c, common.baseline ? 1 : 0, out); };
    });
    eval->callback([&] { cmd = mmreg_eval; });
    theory->callback([&] { cmd = mmreg_theory; });
    probe->callback([&] { cmd = mmreg_probe; });
    render->callback([&] { cmd = mmreg_config_render; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    return run(common, cmd);
}
