// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "dvp/nn.hpp"

namespace dvp {

// Projects the pair of difference summaries (g, l), each (b, d), into p
// soft prompt vectors in decoder space: concat -> 2d -> relu(4*d_llm) ->
// p*d_llm -> reshape (b, p, d_llm). Also owns the d -> d_llm projection
// applied to latent tokens entering the decoder.
struct PromptGenerator {
    Linear fc1, fc2;
    Linear latent_proj;
    int p = 0, d_llm = 0;

    PromptGenerator() = default;
    PromptGenerator(const ModelConfig& cfg, Rng& rng);

    Tensor fuse_and_project(const Tensor& g, const Tensor& l) const; // (b, p, d_llm)
    Tensor project_latents(const Tensor& lat) const;                 // (b, n, d_llm)
    void params(const std::string& prefix, ParamMap& out) const;
};

// Decoder conditioning sequence [prompt; latents; anchors; instruction]
// with recorded segment extents. Boundary offsets are {0, p, p+n, p+n+e};
// report tokens start at total().
struct InputSequence {
    Tensor emb; // (b, p+n+e+t, d_llm)
    int p = 0, n = 0, e = 0, t = 0;

    int total() const { return p + n + e + t; }
    std::array<int, 4> boundaries() const { return {0, p, p + n, p + n + e}; }
};

// prompt may be empty (rank 0) to drop the prompt segment; anchor_ids may be
// empty only when the anchor segment is disabled by the caller.
InputSequence build_input(const Tensor& prompt, const Tensor& projected_latents,
                          const std::vector<int>& anchor_ids,
                          const std::vector<int>& instruction_ids,
                          const Tensor& token_table);

} // namespace dvp
