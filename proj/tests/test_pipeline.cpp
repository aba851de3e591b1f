// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmreg/error.hpp"
#include "mmreg/metrics.hpp"
#include "mmreg/model.hpp"
#include "mmreg/pipeline.hpp"

using namespace mmreg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& path, const std::string& needle = "") {
    std::ifstream f(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line))
        if (needle.empty() || line.find(needle) != std::string::npos) ++n;
    return n;
}

class PipelineTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("mmreg_pipeline_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    RunConfig small() const {
        RunConfig c;
        c.output_dir = dir_.string();
        c.data.n_samples = 120;
        c.arch.encoder_hidden = {8};
        c.arch.embed_dim = 4;
        c.arch.fusion_hidden = {4};
        c.stage1_epochs = 2;
        c.stage2_epochs = 2;
        c.baseline_epochs = 4;
        c.stage1_lr = 1e-3;
        c.sgm.eta = 1e-3;
        return c;
    }

    fs::path dir_;
};

} // namespace

TEST(Config, RenderParseRoundTrip) {
    RunConfig c;
    EXPECT_EQ(parse_config(render_config(c)), c);
    c.seed = 7;
    c.output_dir = "some/dir";
    c.data.modality_dims = {4, 3, 2};
    c.data.noise_scales = {0.1, 0.2, 0.3};
    c.arch.modality_dims = c.data.modality_dims;
    c.arch.fusion_hidden = {};
    c.sgm.eps_probe = 0.1 + 0.2;
    c.sgm.force_uniform = true;
    c.margin.beta = 1.0 / 3.0;
    EXPECT_EQ(parse_config(render_config(c)), c);
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_config("nope = 1\n"), Error);
    EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), Error);
    EXPECT_THROW(parse_config("seed = abc\n"), Error);
    EXPECT_THROW(parse_config("train.batch_size = 1\n"), Error);
    EXPECT_THROW(parse_config("stage1.epochs = 0\n"), Error);
    EXPECT_THROW(parse_config("just text\n"), Error);
    EXPECT_THROW(parse_config("sgm.gamma_min = 20\n"), Error);
    EXPECT_NO_THROW(parse_config("# comment only\n\nseed = 3 # trailing\n"));
    EXPECT_EQ(parse_config("seed = 3 # trailing\n").seed, 3u);
    EXPECT_THROW(load_config("/nonexistent/config.txt"), Error);
}

TEST_F(PipelineTest, GenDataSplitsAndIsDeterministic) {
    RunConfig c = small();
    c.data.n_samples = 100;
    const auto j = cmd_gen_data(c);
    EXPECT_EQ(j["n_train"], 80);
    EXPECT_EQ(j["n_test"], 20);
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
    RunPaths p{c.output_dir};
    const auto train = slurp(p.train_csv()), test = slurp(p.test_csv());
    cmd_gen_data(c);
    EXPECT_EQ(slurp(p.train_csv()), train);
    EXPECT_EQ(slurp(p.test_csv()), test);

    const auto counts = generate(c.data_spec(), c.groups).group_counts();
    EXPECT_EQ(j["group_counts"]["all"]["Many"], counts[0]);
    EXPECT_EQ(j["group_counts"]["all"]["Middle"], counts[1]);
    EXPECT_EQ(j["group_counts"]["all"]["Few"], counts[2]);
}

TEST_F(PipelineTest, PretrainStepCountsAndLambdaZero) {
    RunConfig c = small();
    c.data.n_samples = 20;
    c.stage1_epochs = 1;
    cmd_gen_data(c);
    const auto j = cmd_pretrain(c);
    RunPaths p{c.output_dir};
    EXPECT_EQ(count_lines(p.pretrain_log(), "\"modality\":0"), 2u); // 16 train rows, batch 8
    EXPECT_EQ(count_lines(p.pretrain_log(), "\"modality\":1"), 2u);
    EXPECT_TRUE(fs::exists(p.pretrain_ckpt(0)));
    EXPECT_TRUE(fs::exists(p.pretrain_ckpt(1)));

    // lambda = 0: logged loss equals the regression term at every step
    c.loss.lambda_supcon = 0.0;
    cmd_pretrain(c);
    std::ifstream f(p.pretrain_log());
    std::string line;
    while (std::getline(f, line)) {
        const auto e = nlohmann::json::parse(line);
        EXPECT_EQ(e["loss"].get<double>(), e["regression"].get<double>());
    }
}

TEST_F(PipelineTest, PretrainReducesLoss) {
    RunConfig c = small();
    c.stage1_epochs = 8;
    cmd_gen_data(c);
    const auto j = cmd_pretrain(c);
    for (const auto& m : j["modalities"])
        EXPECT_LT(m["last_epoch_mean_loss"].get<double>(), m["first_epoch_mean_loss"].get<double>());
}

TEST_F(PipelineTest, MissingInputsAreErrors) {
    const RunConfig c = small();
    EXPECT_THROW(cmd_pretrain(c), Error);
    cmd_gen_data(c);
    EXPECT_THROW(cmd_train_joint(c, false), Error); // no stage-1 checkpoints yet
    EXPECT_THROW(cmd_eval(c), Error);
}

TEST_F(PipelineTest, ArchMismatchIsRejected) {
    RunConfig c = small();
    cmd_gen_data(c);
    cmd_pretrain(c);
    c.arch.embed_dim = 5;
    EXPECT_THROW(cmd_train_joint(c, false), Error);
}

TEST_F(PipelineTest, EndToEndIsDeterministicAndLeavesStageOneUntouched) {
    const RunConfig c = small();
    RunPaths p{c.output_dir};
    cmd_gen_data(c);
    cmd_pretrain(c);
    const auto ck0 = slurp(p.pretrain_ckpt(0));
    const auto joint = cmd_train_joint(c, false);
    EXPECT_EQ(slurp(p.pretrain_ckpt(0)), ck0);
    cmd_train_joint(c, true);
    const auto metrics = slurp((cmd_eval(c), p.metrics()));

    EXPECT_GE(joint["gamma_min_seen"].get<double>(), 0.5);
    EXPECT_LE(joint["gamma_max_seen"].get<double>(), 15.0);
    std::ifstream log(p.joint_log());
    std::string line;
    std::size_t steps = 0;
    while (std::getline(log, line)) {
        const auto e = nlohmann::json::parse(line);
        EXPECT_TRUE(std::isfinite(e["loss_total"].get<double>()));
        ++steps;
    }
    EXPECT_EQ(steps, joint["steps"].get<std::size_t>());

    const auto m = nlohmann::json::parse(metrics);
    EXPECT_EQ(m["schema_version"], kSchemaVersion);
    for (const char* model : {"sgm", "baseline"})
        for (const char* k : {"r2", "mse", "mae", "gm", "smape"}) EXPECT_TRUE(m["models"][model]["overall"].contains(k));
    EXPECT_TRUE(m.contains("comparison"));

    // Same config again: bitwise identical metrics.
    cmd_gen_data(c);
    cmd_pretrain(c);
    cmd_train_joint(c, false);
    cmd_train_joint(c, true);
    cmd_eval(c);
    EXPECT_EQ(slurp(p.metrics()), metrics);
}

TEST_F(PipelineTest, ReductionConfigMatchesBaselineMode) {
    // gamma pinned to 1 and uniform weights: the modulated run from an untrained
    // start equals the naive joint run from that same start.
    RunConfig c = small();
    c.sgm.gamma_min = c.sgm.gamma_max = c.sgm.gamma_base = 1.0;
    c.sgm.force_uniform = true;
    cmd_gen_data(c);
    RunPaths p{c.output_dir};
    const TwoBranchNet fresh(c.arch_spec());
    for (std::size_t k = 0; k < 2; ++k) save_checkpoint(fresh, p.pretrain_ckpt(k));
    c.baseline_epochs = c.stage2_epochs;
    cmd_train_joint(c, false);
    cmd_train_joint(c, true);
    const auto a = load_checkpoint(p.joint_ckpt()).flatten();
    const auto b = load_checkpoint(p.baseline_ckpt()).flatten();
    ASSERT_EQ(a.size(), b.size());
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    EXPECT_LT(l2(diff) / l2(b), 1e-6);
}

TEST_F(PipelineTest, EvalOfOracleIsPerfect) {
    const RunConfig c = small();
    cmd_gen_data(c);
    const Dataset test = read_csv(RunPaths{c.output_dir}.test_csv());
    const auto y = test.targets();
    const auto r = grouped_eval(test, y);
    EXPECT_EQ(r.overall.r2, 1.0);
    EXPECT_EQ(r.overall.mse, 0.0);
}

TEST_F(PipelineTest, TheoryAndProbeReports) {
    RunConfig c = small();
    c.containment_trials = 200;
    bool passed = false;
    const auto t = cmd_theory(c, &passed);
    EXPECT_TRUE(passed) << t.dump(2);
    EXPECT_TRUE(fs::exists(RunPaths{c.output_dir}.theory()));
    const auto p = cmd_probe(c);
    EXPECT_GT(p["sgm"]["pearson_s_gamma"].get<double>(), 0.0);
    EXPECT_EQ(count_lines(RunPaths{c.output_dir}.probe_trace()), c.probe_steps + 1);
}

TEST_F(PipelineTest, ConfigSnapshotIsVerbatim) {
    RunConfig c = small();
    const std::string text = "# hand written\nseed = 42   # spacing kept\n";
    write_config_files(c, text);
    EXPECT_EQ(slurp(RunPaths{c.output_dir}.config_snapshot()), text);
    EXPECT_EQ(parse_config(slurp(RunPaths{c.output_dir}.config_resolved())), c);
}
