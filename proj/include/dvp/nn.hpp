// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dvp/checkpoint.hpp"
#include "dvp/ops.hpp"
#include "dvp/tensor.hpp"

namespace dvp {

// Shared hyperparameters of the report-generation model. Defaults mirror
// the reference configuration; tests shrink them freely.
struct ModelConfig {
    int s = 16, h = 32, w = 32;  // volume extents
    int enc_c1 = 32, enc_c2 = 128, enc_c = 512;
    int n_latents = 32; // latent tokens per volume
    int d = 64;         // latent width
    int heads = 4;
    int d_llm = 64; // decoder embedding width
    int dec_layers = 2, dec_heads = 4;
    int context = 256;
    int prefix_len = 16; // discrepancy prompt tokens
    int ff_mult = 4;
    float anchor_threshold = 0.5f;
    int vocab = 0; // filled from the grammar vocabulary

    int tokens_v() const; // encoder output tokens: (s/4)*(h/8)*(w/8)
    void validate() const;
};

// y = x W^T + b with W stored (out, in). Optional low-rank adapter adds
// (alpha/r) * x A^T B^T with A (r, in), B (out, r); B starts at zero so an
// adapted layer reproduces the base output until trained.
struct Linear {
    Tensor w, b;
    bool has_lora = false;
    Tensor lora_a, lora_b;
    float lora_scale = 0.0f;

    Linear() = default;
    Linear(int in, int out, Rng& rng, float w_sd = 0.02f);

    Tensor forward(const Tensor& x) const;
    void add_lora(int r, float alpha, Rng& rng);
    int64_t adapter_param_count() const;
    void params(const std::string& prefix, ParamMap& out) const;
};

struct LayerNormLayer {
    Tensor gamma, beta;

    LayerNormLayer() = default;
    explicit LayerNormLayer(int d);
    Tensor forward(const Tensor& x) const;
    void params(const std::string& prefix, ParamMap& out) const;
};

// Multi-head scaled dot-product attention. kv_dim may differ from d_model
// (cross-attention over encoder features). When prefix_len >= 0 the score
// matrix is masked prefix-causally: position i attends to j iff
// j < prefix_len or j <= i (requires square score matrices).
struct MultiHeadAttention {
    int d_model = 0, heads = 0;
    Linear wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(int d_model, int heads, int kv_dim, Rng& rng);

    Tensor forward(const Tensor& q_in, const Tensor& kv_in,
                   int prefix_len = -1) const;
    void params(const std::string& prefix, ParamMap& out) const;
};

struct FeedForward {
    Linear fc1, fc2;

    FeedForward() = default;
    FeedForward(int d, int hidden, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void params(const std::string& prefix, ParamMap& out) const;
};

struct Conv3dLayer {
    Tensor w; // (out_c, in_c*27)
    Tensor b; // (out_c)
    int stride_d = 1, stride_h = 1, stride_w = 1;

    Conv3dLayer() = default;
    Conv3dLayer(int in_c, int out_c, int sd, int sh, int sw, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void params(const std::string& prefix, ParamMap& out) const;
};

} // namespace dvp
