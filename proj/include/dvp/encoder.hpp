// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dvp/nn.hpp"

namespace dvp {

// Three-stage strided conv feature extractor. A (b,1,s,h,w) volume maps to
// (b, v, enc_c) feature tokens, v = (s/4)*(h/8)*(w/8), with a learned
// positional embedding added after flattening.
struct VolumeEncoder {
    Conv3dLayer conv1, conv2, conv3;
    Tensor pos; // (v, enc_c)
    int v = 0;

    VolumeEncoder() = default;
    VolumeEncoder(const ModelConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& volume) const;
    void params(const std::string& prefix, ParamMap& out) const;
};

// Cross-attention resampler: a learned latent array queries the encoder
// tokens and compresses them to (b, n_latents, d). The same latent array is
// shared across every call — target and reference volumes in one step are
// resampled by pointer-identical queries.
struct Resampler {
    Tensor latents; // (n_latents, d)
    MultiHeadAttention attn;
    FeedForward ff;
    LayerNormLayer ln1, ln2;

    Resampler() = default;
    Resampler(const ModelConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& features) const;
    const float* latent_data() const; // identity probe for tests
    void params(const std::string& prefix, ParamMap& out) const;
};

// Convenience: encode then resample.
Tensor perceive(const VolumeEncoder& enc, const Resampler& rs, const Tensor& volume);

} // namespace dvp
