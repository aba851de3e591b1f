// SPDX-License-Identifier: Apache-2.0
//
// Two-branch multimodal regressor. Each modality k owns an MLP encoder, a
// projection head producing unit-norm embeddings for contrastive pretraining
// and a sigmoid regression head. A fusion MLP over the concatenated encoder
// outputs gives the multimodal prediction.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmreg/datagen.hpp"
#include "mmreg/tensor.hpp"

namespace mmreg {

struct ArchSpec {
    std::vector<std::size_t> modality_dims{16, 8};
    std::vector<std::size_t> encoder_hidden{64, 64};
    std::size_t embed_dim = 32;
    std::vector<std::size_t> fusion_hidden{32};
    std::uint64_t seed = 42;

    void validate() const;
    bool operator==(const ArchSpec&) const = default;
};

enum class ParamRole {
    Encoder, // shared: receives modulated gradients in joint training
    Projection,
    UniHead,
    Fusion,
};

struct Param {
    std::string name;
    Tensor value;
    ParamRole role = ParamRole::Encoder;
    int modality = -1; // -1 for the fusion head
};

struct Batch;
struct BranchOut;
struct ForwardOut;

class TwoBranchNet {
  public:
    TwoBranchNet() = default;
    explicit TwoBranchNet(const ArchSpec& arch); // Glorot-uniform weights, zero biases

    const ArchSpec& arch() const { return arch_; }
    std::size_t modalities() const { return arch_.modality_dims.size(); }

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    std::vector<Tensor> values() const;
    void set_values(const std::vector<Tensor>& v);

    std::size_t find(const std::string& name) const;
    std::vector<std::size_t> indices(ParamRole role, int modality = -2) const;
    std::vector<std::size_t> shared_indices() const { return indices(ParamRole::Encoder); }
    std::vector<std::size_t> head_indices() const;
    // Everything a single-modality pretraining run touches.
    std::vector<std::size_t> modality_indices(int k) const;

    std::size_t scalar_count() const;

    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);

  private:
    friend BranchOut forward_branch(const TwoBranchNet&, const std::vector<Var>&, Tape&, const Batch&, int);
    friend ForwardOut forward(const TwoBranchNet&, const std::vector<Var>&, Tape&, const Batch&);
    friend TwoBranchNet checkpoint_from_json(const std::string&);

    void add_linear(const std::string& prefix, std::size_t in, std::size_t out, ParamRole role, int modality,
                    std::vector<std::size_t>& layout);

    ArchSpec arch_;
    std::vector<Param> params_;
    // Parameter indices as consecutive (W, b) pairs.
    std::vector<std::vector<std::size_t>> enc_, proj_, uni_;
    std::vector<std::size_t> fuse_;
};

struct Batch {
    std::vector<Tensor> inputs; // per modality: B x d_k
    std::vector<double> targets;     // raw targets
    std::vector<int> levels;
    std::vector<double> norm_targets; // target / level, in [0, 1]
    std::vector<Group> groups;

    std::size_t size() const { return targets.size(); }
};

Batch make_batch(const Dataset& d, std::span<const std::size_t> rows);
Batch make_batch(const Dataset& d);

// Per-modality encoder pass output.
struct BranchOut {
    Var encoded;  // B x H
    Var z;        // B x E, unit rows
    Var pred_uni; // B x 1, in (0, 1)
};

struct ForwardOut {
    Var pred_mm;                // B x 1
    std::vector<Var> pred_uni;  // per modality, B x 1
    std::vector<Var> z;         // per modality, B x E
};

// Registers every parameter on the tape (param index = position in net.params()).
std::vector<Var> bind_params(Tape& tape, const std::vector<Tensor>& values);

BranchOut forward_branch(const TwoBranchNet& net, const std::vector<Var>& p, Tape& tape, const Batch& batch, int k);
ForwardOut forward(const TwoBranchNet& net, const std::vector<Var>& p, Tape& tape, const Batch& batch);

// Convenience: fresh tape, values only.
std::vector<double> predict_mm(const TwoBranchNet& net, const Batch& batch);

// pred_norm * level for level in {1, -6, -12, -18}.
double postprocess(double pred_norm, int level);

void save_checkpoint(const TwoBranchNet& net, const std::string& path);
TwoBranchNet load_checkpoint(const std::string& path);
std::string checkpoint_json(const TwoBranchNet& net);
TwoBranchNet checkpoint_from_json(const std::string& text);

} // namespace mmreg
