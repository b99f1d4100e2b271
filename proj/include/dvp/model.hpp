// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>

#include "dvp/decoder.hpp"
#include "dvp/dpg.hpp"
#include "dvp/encoder.hpp"
#include "dvp/grammar.hpp"
#include "dvp/hde.hpp"

namespace dvp {

// Variant switchboard. The named rows of the experiment matrix are fixed
// flag assignments over these switches.
struct AblationFlags {
    bool use_global = true;
    bool use_local = true;
    bool use_e = true;
    bool use_prefix = true;
    bool pixel_diff = false; // voxelwise subtraction in place of latent deltas
};

// Full report generator: encoder + resampler + difference encoders + prompt
// generator + auxiliary label head + decoder.
struct GeneratorModel {
    ModelConfig cfg;
    VolumeEncoder encoder;
    Resampler resampler;
    HybridDeltaEncoder hde;
    PromptGenerator dpg;
    Linear aux_head; // d -> K, over mean-pooled target latents
    Decoder decoder;

    GeneratorModel() = default;
    GeneratorModel(const ModelConfig& cfg, uint64_t seed);

    ParamMap params() const;

    Tensor volume_tensor(const std::vector<float>& volume) const; // (1,1,s,h,w)
    Tensor latents_for(const std::vector<float>& volume) const;   // (1,n,d)

    struct ForwardOut {
        InputSequence x_in;
        Tensor latents;     // target latent tokens
        Tensor latents_ref; // defined unless pixel_diff
        Tensor prompt;      // defined when use_prefix
        std::vector<int> anchor_ids;
    };
    // Wiring per flags: deltas disabled by a flag enter the projector as
    // zero vectors; with use_prefix=false the prompt segment is dropped;
    // with use_e=false anchors are dropped (anchor_probs may be null only
    // then). pixel_diff derives both projector slots from the mean-pooled
    // latents of the voxelwise difference volume.
    ForwardOut forward_inputs(const std::vector<float>& target_vol,
                              const std::vector<float>& ref_vol,
                              const std::array<float, kNumClasses>* anchor_probs,
                              const AblationFlags& flags) const;

    Tensor aux_logits(const Tensor& latents) const; // (b, K)

    void apply_adapters(int r, float alpha, uint64_t seed);
};

// mean over elements of softplus(x) - x*y (binary cross-entropy with logits)
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

} // namespace dvp
