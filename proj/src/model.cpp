// SPDX-License-Identifier: Apache-2.0
#include "mmreg/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmreg/error.hpp"
#include "mmreg/rng.hpp"

namespace mmreg {

using nlohmann::json;

namespace {
constexpr int kCheckpointVersion = 1;
}

void ArchSpec::validate() const {
    require(modality_dims.size() >= 2, "arch: need at least two modalities");
    for (auto d : modality_dims) require(d >= 1, "arch: modality dimension must be >= 1");
    require(!encoder_hidden.empty(), "arch: encoder needs at least one hidden layer");
    for (auto w : encoder_hidden) require(w >= 1, "arch: encoder widths must be >= 1");
    for (auto w : fusion_hidden) require(w >= 1, "arch: fusion widths must be >= 1");
    require(embed_dim >= 1, "arch: embed_dim must be >= 1");
}

void TwoBranchNet::add_linear(const std::string& prefix, std::size_t in, std::size_t out, ParamRole role,
                              int modality, std::vector<std::size_t>& layout) {
    layout.push_back(params_.size());
    params_.push_back({prefix + ".W", Tensor(in, out), role, modality});
    layout.push_back(params_.size());
    params_.push_back({prefix + ".b", Tensor(1, out), role, modality});
}

TwoBranchNet::TwoBranchNet(const ArchSpec& arch) : arch_(arch) {
    arch_.validate();
    const std::size_t K = arch_.modality_dims.size();
    enc_.resize(K);
    proj_.resize(K);
    uni_.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const int mk = static_cast<int>(k);
        std::size_t in = arch_.modality_dims[k];
        for (std::size_t l = 0; l < arch_.encoder_hidden.size(); ++l) {
            add_linear("enc" + std::to_string(k) + ".l" + std::to_string(l), in, arch_.encoder_hidden[l],
                       ParamRole::Encoder, mk, enc_[k]);
            in = arch_.encoder_hidden[l];
        }
        add_linear("proj" + std::to_string(k), in, arch_.embed_dim, ParamRole::Projection, mk, proj_[k]);
        add_linear("uni" + std::to_string(k), in, 1, ParamRole::UniHead, mk, uni_[k]);
    }
    std::size_t in = K * arch_.encoder_hidden.back();
    for (std::size_t l = 0; l < arch_.fusion_hidden.size(); ++l) {
        add_linear("fuse.l" + std::to_string(l), in, arch_.fusion_hidden[l], ParamRole::Fusion, -1, fuse_);
        in = arch_.fusion_hidden[l];
    }
    add_linear("fuse.out", in, 1, ParamRole::Fusion, -1, fuse_);

    Rng rng(mix_seed(arch_.seed, 0xA5C4));
    for (auto& p : params_) {
        if (p.value.rows == 1 && p.name.ends_with(".b")) continue; // biases stay zero
        const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows + p.value.cols));
        for (auto& w : p.value.data) w = rng.uniform(-limit, limit);
    }
}

std::vector<Tensor> TwoBranchNet::values() const {
    std::vector<Tensor> v;
    v.reserve(params_.size());
    for (const auto& p : params_) v.push_back(p.value);
    return v;
}

void TwoBranchNet::set_values(const std::vector<Tensor>& v) {
    require(v.size() == params_.size(), "set_values: parameter count mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) {
        require(v[i].same_shape(params_[i].value), "set_values: shape mismatch for " + params_[i].name);
        params_[i].value = v[i];
    }
}

std::size_t TwoBranchNet::find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    fail("no parameter named '" + name + "'");
}

std::vector<std::size_t> TwoBranchNet::indices(ParamRole role, int modality) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].role == role && (modality == -2 || params_[i].modality == modality)) out.push_back(i);
    return out;
}

std::vector<std::size_t> TwoBranchNet::head_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].role != ParamRole::Encoder) out.push_back(i);
    return out;
}

std::vector<std::size_t> TwoBranchNet::modality_indices(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].modality == k) out.push_back(i);
    return out;
}

std::size_t TwoBranchNet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::vector<double> TwoBranchNet::flatten() const {
    std::vector<double> flat;
    flat.reserve(scalar_count());
    for (const auto& p : params_) flat.insert(flat.end(), p.value.data.begin(), p.value.data.end());
    return flat;
}

void TwoBranchNet::unflatten(std::span<const double> flat) {
    require(flat.size() == scalar_count(), "unflatten: length mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p.value.size(), p.value.data.begin());
        off += p.value.size();
    }
}

Batch make_batch(const Dataset& d, std::span<const std::size_t> rows) {
    Batch b;
    const std::size_t B = rows.size();
    for (auto dim : d.modality_dims) b.inputs.emplace_back(B, dim);
    for (std::size_t r = 0; r < B; ++r) {
        require(rows[r] < d.size(), "make_batch: row out of range");
        const auto& s = d.samples[rows[r]];
        require(s.features.size() == d.modalities(), "make_batch: sample modality count mismatch");
        for (std::size_t k = 0; k < d.modalities(); ++k) {
            require(s.features[k].size() == d.modality_dims[k], "make_batch: feature length mismatch");
            std::copy(s.features[k].begin(), s.features[k].end(), &b.inputs[k].data[r * d.modality_dims[k]]);
        }
        const int level = level_for(s.target);
        b.targets.push_back(s.target);
        b.levels.push_back(level);
        b.norm_targets.push_back(normalize_target(s.target, level));
        b.groups.push_back(s.group);
    }
    return b;
}

Batch make_batch(const Dataset& d) {
    std::vector<std::size_t> rows(d.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return make_batch(d, rows);
}

std::vector<Var> bind_params(Tape& tape, const std::vector<Tensor>& values) {
    std::vector<Var> p;
    p.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) p.push_back(tape.param(values[i], i));
    return p;
}

namespace {

Var linear(Var x, const std::vector<Var>& p, std::size_t w, std::size_t b) { return add(matmul(x, p[w]), p[b]); }

} // namespace

BranchOut forward_branch(const TwoBranchNet& net, const std::vector<Var>& p, Tape& tape, const Batch& batch, int k) {
    require(p.size() == net.params_.size(), "forward: bound parameter count mismatch");
    require(k >= 0 && static_cast<std::size_t>(k) < net.modalities(), "forward: modality out of range");
    require(batch.inputs.size() == net.modalities(), "forward: batch modality count mismatch");
    const Tensor& x = batch.inputs[k];
    if (x.cols != net.arch_.modality_dims[k])
        fail("forward: modality " + std::to_string(k) + " expects dim " + std::to_string(net.arch_.modality_dims[k]) +
             ", got " + std::to_string(x.cols));

    Var h = tape.constant(x);
    const auto& enc = net.enc_[k];
    for (std::size_t l = 0; l < enc.size(); l += 2) h = relu(linear(h, p, enc[l], enc[l + 1]));

    BranchOut out;
    out.encoded = h;
    const Var zr = linear(h, p, net.proj_[k][0], net.proj_[k][1]);
    out.z = div(zr, row_l2_norm(zr));
    out.pred_uni = sigmoid(linear(h, p, net.uni_[k][0], net.uni_[k][1]));
    return out;
}

ForwardOut forward(const TwoBranchNet& net, const std::vector<Var>& p, Tape& tape, const Batch& batch) {
    ForwardOut out;
    Var fused{};
    for (std::size_t k = 0; k < net.modalities(); ++k) {
        auto br = forward_branch(net, p, tape, batch, static_cast<int>(k));
        out.pred_uni.push_back(br.pred_uni);
        out.z.push_back(br.z);
        fused = k == 0 ? br.encoded : concat_cols(fused, br.encoded);
    }
    Var h = fused;
    const auto& f = net.fuse_;
    for (std::size_t l = 0; l + 2 < f.size(); l += 2) h = relu(linear(h, p, f[l], f[l + 1]));
    out.pred_mm = sigmoid(linear(h, p, f[f.size() - 2], f[f.size() - 1]));
    return out;
}

std::vector<double> predict_mm(const TwoBranchNet& net, const Batch& batch) {
    Tape tape;
    const auto p = bind_params(tape, net.values());
    return forward(net, p, tape, batch).pred_mm.value().data;
}

double postprocess(double pred_norm, int level) {
    require(std::find(kLevelCodes.begin(), kLevelCodes.end(), level) != kLevelCodes.end(),
            "postprocess: unknown level code " + std::to_string(level));
    return pred_norm * static_cast<double>(level);
}

std::string checkpoint_json(const TwoBranchNet& net) {
    json j;
    j["format"] = "mmreg-checkpoint";
    j["version"] = kCheckpointVersion;
    const auto& a = net.arch();
    j["arch"] = {{"modality_dims", a.modality_dims}, {"encoder_hidden", a.encoder_hidden},
                 {"embed_dim", a.embed_dim},         {"fusion_hidden", a.fusion_hidden},
                 {"seed", a.seed}};
    json params = json::array();
    for (const auto& p : net.params())
        params.push_back({{"name", p.name}, {"shape", {p.value.rows, p.value.cols}}, {"values", p.value.data}});
    j["params"] = std::move(params);
    return j.dump();
}

TwoBranchNet checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(std::string("checkpoint: ") + e.what());
    }
    require(j.value("format", "") == "mmreg-checkpoint", "checkpoint: wrong format tag");
    require(j.value("version", 0) == kCheckpointVersion, "checkpoint: unsupported version");
    ArchSpec a;
    try {
        const auto& ja = j.at("arch");
        a.modality_dims = ja.at("modality_dims").get<std::vector<std::size_t>>();
        a.encoder_hidden = ja.at("encoder_hidden").get<std::vector<std::size_t>>();
        a.embed_dim = ja.at("embed_dim").get<std::size_t>();
        a.fusion_hidden = ja.at("fusion_hidden").get<std::vector<std::size_t>>();
        a.seed = ja.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        fail(std::string("checkpoint arch: ") + e.what());
    }
    TwoBranchNet net(a);
    const auto& jp = j.at("params");
    require(jp.size() == net.params_.size(), "checkpoint: parameter count does not match arch");
    for (std::size_t i = 0; i < jp.size(); ++i) {
        auto& p = net.params_[i];
        require(jp[i].at("name").get<std::string>() == p.name, "checkpoint: unexpected parameter " +
                                                                    jp[i].at("name").get<std::string>());
        const auto shape = jp[i].at("shape").get<std::vector<std::size_t>>();
        require(shape.size() == 2 && shape[0] == p.value.rows && shape[1] == p.value.cols,
                "checkpoint: shape mismatch for " + p.name);
        p.value.data = jp[i].at("values").get<std::vector<double>>();
        require(p.value.data.size() == p.value.rows * p.value.cols, "checkpoint: value count mismatch for " + p.name);
    }
    return net;
}

void save_checkpoint(const TwoBranchNet& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open '" + path + "' for writing");
    f << checkpoint_json(net) << "\n";
    if (!f) fail_io("write failed for '" + path + "'");
}

TwoBranchNet load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open checkpoint '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return checkpoint_from_json(ss.str());
}

} // namespace mmreg
