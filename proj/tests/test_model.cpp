// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mmreg/error.hpp"
#include "mmreg/model.hpp"

using namespace mmreg;

namespace {

Dataset small_data(std::size_t n = 12) {
    LongTailSpec s;
    s.n_samples = n;
    return generate(s, GroupThresholds{});
}

} // namespace

TEST(Init, SameSeedSameParameters) {
    const TwoBranchNet a(ArchSpec{});
    const TwoBranchNet b(ArchSpec{});
    EXPECT_EQ(a.values(), b.values());
}

TEST(Init, BiasesStartAtZero) {
    const TwoBranchNet net(ArchSpec{});
    std::size_t biases = 0;
    for (const auto& p : net.params()) {
        if (p.name.back() != 'b') continue;
        ++biases;
        for (double v : p.value.data) EXPECT_EQ(v, 0.0) << p.name;
    }
    EXPECT_GT(biases, 0u);
}

TEST(Init, Seed7GoldenFirstWeight) {
    ArchSpec a;
    a.seed = 7;
    const TwoBranchNet net(a);
    EXPECT_EQ(net.params()[0].name, "enc0.l0.W");
    EXPECT_DOUBLE_EQ(net.params()[0].value.data[0], -0.16684667800881581);
}

TEST(Registry, SharedPlusHeadCoversEverything) {
    const TwoBranchNet net(ArchSpec{});
    const auto shared = net.shared_indices();
    const auto heads = net.head_indices();
    EXPECT_EQ(shared.size() + heads.size(), net.params().size());
    std::size_t scalars = 0;
    for (auto i : shared) scalars += net.params()[i].value.size();
    for (auto i : heads) scalars += net.params()[i].value.size();
    EXPECT_EQ(scalars, net.scalar_count());
}

TEST(Forward, ZeroWeightsGiveOneHalf) {
    TwoBranchNet net(ArchSpec{});
    for (auto& p : net.params()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
    const Dataset d = small_data();
    for (double p : predict_mm(net, make_batch(d))) EXPECT_DOUBLE_EQ(p, 0.5);
}

TEST(Forward, NoCouplingAcrossBatchRows) {
    const TwoBranchNet net(ArchSpec{});
    const Dataset d = small_data();
    const auto one = predict_mm(net, make_batch(d, std::vector<std::size_t>{3}));
    const auto two = predict_mm(net, make_batch(d, std::vector<std::size_t>{3, 3}));
    EXPECT_EQ(one[0], two[0]);
    EXPECT_EQ(one[0], two[1]);
}

TEST(Forward, RangesAndUnitEmbeddings) {
    const TwoBranchNet net(ArchSpec{});
    const Dataset d = small_data(32);
    const Batch b = make_batch(d);
    Tape tape;
    const auto p = bind_params(tape, net.values());
    const auto out = forward(net, p, tape, b);
    for (double v : out.pred_mm.value().data) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    for (const auto& z : out.z) {
        const Tensor& t = z.value();
        for (std::size_t r = 0; r < t.rows; ++r) {
            double n2 = 0.0;
            for (std::size_t c = 0; c < t.cols; ++c) n2 += t(r, c) * t(r, c);
            EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-9);
        }
    }
}

TEST(Forward, GoldenPrediction) {
    const TwoBranchNet net(ArchSpec{});
    const Dataset d = generate(LongTailSpec{}, GroupThresholds{});
    const auto p = predict_mm(net, make_batch(d, std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
    EXPECT_DOUBLE_EQ(p[0], 0.5862912609997899);
}

TEST(Forward, RejectsMismatchedInputs) {
    const TwoBranchNet net(ArchSpec{});
    LongTailSpec s;
    s.n_samples = 4;
    s.modality_dims = {5, 8};
    const Dataset d = generate(s, GroupThresholds{});
    EXPECT_THROW(predict_mm(net, make_batch(d)), Error);
}

TEST(Postprocess, Examples) {
    EXPECT_DOUBLE_EQ(postprocess(0.5, -12), -6.0);
    EXPECT_DOUBLE_EQ(postprocess(0.0, -18), 0.0);
    EXPECT_DOUBLE_EQ(postprocess(0.0, 1), 0.0);
    EXPECT_DOUBLE_EQ(postprocess(1.0, -18), -18.0);
    EXPECT_THROW(postprocess(0.5, 3), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
    ArchSpec a;
    a.seed = 9;
    const TwoBranchNet net(a);
    const auto back = checkpoint_from_json(checkpoint_json(net));
    EXPECT_EQ(back.arch(), net.arch());
    EXPECT_EQ(back.values(), net.values());

    const auto path = (std::filesystem::temp_directory_path() / "mmreg_ckpt_test.json").string();
    save_checkpoint(net, path);
    EXPECT_EQ(load_checkpoint(path).values(), net.values());
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
    EXPECT_THROW(checkpoint_from_json("{\"format\":\"other\"}"), std::exception);
    auto j = checkpoint_json(TwoBranchNet(ArchSpec{}));
    j.replace(j.find("enc0.l0.W"), 9, "enc9.l0.W");
    EXPECT_THROW(checkpoint_from_json(j), std::exception);
    EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), Error);
}

TEST(Flatten, RoundTrip) {
    TwoBranchNet net(ArchSpec{});
    auto flat = net.flatten();
    EXPECT_EQ(flat.size(), net.scalar_count());
    flat[0] += 1.0;
    net.unflatten(flat);
    EXPECT_EQ(net.flatten(), flat);
}
