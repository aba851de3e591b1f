// SPDX-License-Identifier: Apache-2.0
// Exercises the shared library strictly through its C header.
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mmreg/mmreg.h"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
    std::string out = s == nullptr ? "" : s;
    mmreg_free_string(s);
    return out;
}

} // namespace

TEST(CApi, Version) { EXPECT_STREQ(mmreg_version(), "0.1.0"); }

TEST(CApi, ConfigLifecycle) {
    mmreg_config* cfg = nullptr;
    ASSERT_EQ(mmreg_config_default(&cfg), MMREG_OK);
    EXPECT_EQ(mmreg_config_set(cfg, "seed", "9"), MMREG_OK);
    EXPECT_EQ(mmreg_config_set(cfg, "no.such.key", "1"), MMREG_ERR_VALIDATION);
    EXPECT_NE(std::string(mmreg_last_error()).find("no.such.key"), std::string::npos);
    EXPECT_EQ(mmreg_config_set(cfg, "train.batch_size", "1"), MMREG_ERR_VALIDATION);

    char* text = nullptr;
    ASSERT_EQ(mmreg_config_render(cfg, &text), MMREG_OK);
    const std::string rendered = take(text);
    EXPECT_NE(rendered.find("seed = 9"), std::string::npos);
    EXPECT_NE(rendered.find("train.batch_size = 8"), std::string::npos);

    mmreg_config* again = nullptr;
    ASSERT_EQ(mmreg_config_parse(rendered.c_str(), &again), MMREG_OK);
    char* text2 = nullptr;
    ASSERT_EQ(mmreg_config_render(again, &text2), MMREG_OK);
    EXPECT_EQ(take(text2), rendered);
    mmreg_config_free(again);
    mmreg_config_free(cfg);
}

TEST(CApi, ErrorsAreReported) {
    mmreg_config* cfg = nullptr;
    EXPECT_EQ(mmreg_config_load("/nonexistent/mmreg.cfg", &cfg), MMREG_ERR_IO);
    EXPECT_EQ(cfg, nullptr);
    EXPECT_EQ(mmreg_config_parse("seed = x\n", &cfg), MMREG_ERR_VALIDATION);
    EXPECT_EQ(mmreg_config_default(nullptr), MMREG_ERR_VALIDATION);
    char* out = nullptr;
    EXPECT_EQ(mmreg_eval(nullptr, &out), MMREG_ERR_VALIDATION);
}

TEST(CApi, Helpers) {
    const double y[] = {1, 2, 3}, p[] = {1, 2, 4};
    double m[5];
    ASSERT_EQ(mmreg_metrics(y, p, 3, m), MMREG_OK);
    EXPECT_NEAR(m[0], 0.5, 1e-12);
    EXPECT_NEAR(m[1], 1.0 / 3.0, 1e-12);
    EXPECT_EQ(mmreg_metrics(y, p, 0, m), MMREG_ERR_VALIDATION);

    const double g1[] = {2, 0}, g2[] = {-1, 0};
    double a = 0, b = 0;
    ASSERT_EQ(mmreg_minnorm_two(g1, g2, 2, &a, &b), MMREG_OK);
    EXPECT_NEAR(a, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(a + b, 1.0, 1e-15);

    double margin = 0;
    ASSERT_EQ(mmreg_margin_at(1100, 0.4, 0.0005, 100, &margin), MMREG_OK);
    EXPECT_NEAR(margin, 0.24261, 1e-5);
    EXPECT_EQ(mmreg_margin_at(0, -1, 0.0005, 100, &margin), MMREG_ERR_VALIDATION);
}

TEST(CApi, CommandsRunEndToEnd) {
    const auto dir = fs::temp_directory_path() / "mmreg_c_api_run";
    fs::remove_all(dir);
    const std::string text = "output_dir = " + dir.string() +
                             "\ndata.n_samples = 60\narch.encoder_hidden = 6\narch.embed_dim = 4\n"
                             "stage1.epochs = 1\nstage2.epochs = 1\nbaseline.epochs = 2\n"
                             "theory.containment_trials = 50\n";
    mmreg_config* cfg = nullptr;
    ASSERT_EQ(mmreg_config_parse(text.c_str(), &cfg), MMREG_OK);

    char* out = nullptr;
    EXPECT_EQ(mmreg_eval(cfg, &out), MMREG_ERR_IO);
    EXPECT_EQ(out, nullptr);

    ASSERT_EQ(mmreg_gen_data(cfg, &out), MMREG_OK) << mmreg_last_error();
    EXPECT_EQ(nlohmann::json::parse(take(out))["n_train"], 48);
    ASSERT_EQ(mmreg_pretrain(cfg, &out), MMREG_OK) << mmreg_last_error();
    take(out);
    ASSERT_EQ(mmreg_train_joint(cfg, 0, &out), MMREG_OK) << mmreg_last_error();
    take(out);
    ASSERT_EQ(mmreg_train_joint(cfg, 1, &out), MMREG_OK) << mmreg_last_error();
    take(out);
    ASSERT_EQ(mmreg_eval(cfg, &out), MMREG_OK) << mmreg_last_error();
    const auto report = nlohmann::json::parse(take(out));
    EXPECT_EQ(report["schema_version"], 1);
    EXPECT_TRUE(report["models"].contains("sgm"));
    EXPECT_TRUE(report["models"].contains("baseline"));
    ASSERT_EQ(mmreg_theory(cfg, &out), MMREG_OK) << mmreg_last_error();
    EXPECT_TRUE(nlohmann::json::parse(take(out))["all_passed"].get<bool>());
    ASSERT_EQ(mmreg_probe(cfg, &out), MMREG_OK) << mmreg_last_error();
    take(out);

    EXPECT_TRUE(fs::exists(dir / "config.snapshot"));
    mmreg_config_free(cfg);
    fs::remove_all(dir);
}
