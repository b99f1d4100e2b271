// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dvp/nn.hpp"

namespace dvp {

// Two complementary difference summaries over latent arrays I, I_ref of
// shape (b, n, d):
//  - global: a learned delta query is prepended to [I; I_ref], a single
//    post-norm transformer layer with per-position embeddings mixes the
//    2n+1 tokens, and the transformed query position is the summary.
//  - local: parameter-free. w_i = |I_i - Iref_i|^2 / (sum_j |I_j - Iref_j|^2
//    + 1e-5), output sum_i w_i (I_i - Iref_i).
struct HybridDeltaEncoder {
    Tensor delta_query; // (d)
    Tensor pos;         // (2n+1, d)
    MultiHeadAttention attn;
    FeedForward ff;
    LayerNormLayer ln1, ln2;

    HybridDeltaEncoder() = default;
    HybridDeltaEncoder(const ModelConfig& cfg, Rng& rng);

    Tensor global_delta(const Tensor& lat, const Tensor& lat_ref) const; // (b, d)
    void params(const std::string& prefix, ParamMap& out) const;

    // Local branch is stateless; kept here for discoverability.
    static Tensor local_weights(const Tensor& lat, const Tensor& lat_ref); // (b, n)
    static Tensor local_delta(const Tensor& lat, const Tensor& lat_ref);   // (b, d)
    // Unnormalized per-latent discrepancy scores |I_i - Iref_i|^2 for a
    // single pair (b must be 1); used for diff-map reporting.
    static std::vector<float> importance_scores(const Tensor& lat, const Tensor& lat_ref);
};

} // namespace dvp
