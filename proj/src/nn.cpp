// SPDX-License-Identifier: Apache-2.0
#include "dvp/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dvp {

int ModelConfig::tokens_v() const {
    return (s / 4) * (h / 8) * (w / 8);
}

void ModelConfig::validate() const {
    if (s % 4 != 0 || h % 8 != 0 || w % 8 != 0)
        throw std::runtime_error("model config: extents (" + std::to_string(s) + "," +
                                 std::to_string(h) + "," + std::to_string(w) +
                                 ") must be divisible by the encoder stride product (4,8,8)");
    if (d % heads != 0)
        throw std::runtime_error("model config: d=" + std::to_string(d) +
                                 " not divisible by heads=" + std::to_string(heads));
    if (d_llm % dec_heads != 0)
        throw std::runtime_error("model config: d_llm=" + std::to_string(d_llm) +
                                 " not divisible by dec_heads=" + std::to_string(dec_heads));
    if (vocab <= 0) throw std::runtime_error("model config: vocab size not set");
}

Linear::Linear(int in, int out, Rng& rng, float w_sd) {
    if (in <= 0 || out <= 0)
        throw std::runtime_error("linear: non-positive dims (" + std::to_string(in) + "," +
                                 std::to_string(out) + ")");
    w = Tensor::randn({out, in}, rng, w_sd, true);
    b = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x) const {
    if (x.rank() < 2 || x.dim(x.rank() - 1) != w.dim(1))
        throw std::runtime_error("linear: input " + shape_str(x.shape()) +
                                 " incompatible with weight " + shape_str(w.shape()));
    Tensor y = ops::add(ops::matmul(x, ops::transpose(w, 0, 1)), b);
    if (has_lora) {
        Tensor lo = ops::matmul(ops::matmul(x, ops::transpose(lora_a, 0, 1)),
                                ops::transpose(lora_b, 0, 1));
        y = ops::add(y, ops::mul_scalar(lo, lora_scale));
    }
    return y;
}

void Linear::add_lora(int r, float alpha, Rng& rng) {
    if (has_lora) throw std::runtime_error("linear: adapter already attached");
    if (r <= 0) throw std::runtime_error("linear: adapter rank must be positive");
    const int out = w.dim(0), in = w.dim(1);
    lora_a = Tensor::randn({r, in}, rng, 0.02f, true);
    lora_b = Tensor::zeros({out, r}, true); // zero so the adapted output starts at the base output
    lora_scale = alpha / static_cast<float>(r);
    has_lora = true;
    w.set_requires_grad(false); // base weight frozen under adaptation
}

int64_t Linear::adapter_param_count() const {
    if (!has_lora) return 0;
    return static_cast<int64_t>(lora_a.numel()) + static_cast<int64_t>(lora_b.numel());
}

void Linear::params(const std::string& prefix, ParamMap& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
    if (has_lora) {
        out.emplace_back(prefix + ".lora_a", lora_a);
        out.emplace_back(prefix + ".lora_b", lora_b);
    }
}

LayerNormLayer::LayerNormLayer(int d) {
    gamma = Tensor::full({d}, 1.0f, true);
    beta = Tensor::zeros({d}, true);
}

Tensor LayerNormLayer::forward(const Tensor& x) const {
    return ops::layer_norm(x, gamma, beta);
}

void LayerNormLayer::params(const std::string& prefix, ParamMap& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(int d_model_, int heads_, int kv_dim, Rng& rng)
    : d_model(d_model_), heads(heads_) {
    if (d_model % heads != 0)
        throw std::runtime_error("attention: d_model=" + std::to_string(d_model) +
                                 " not divisible by heads=" + std::to_string(heads));
    wq = Linear(d_model, d_model, rng);
    wk = Linear(kv_dim, d_model, rng);
    wv = Linear(kv_dim, d_model, rng);
    wo = Linear(d_model, d_model, rng);
}

// Additive mask: blocked entries get -1e9 before softmax; with row-max
// subtraction exp() underflows those lanes to exactly 0, so blocked
// positions contribute exact zeros forward and backward.
static Tensor prefix_mask(int t, int prefix_len) {
    NoGradGuard ng;
    std::vector<float> m(static_cast<size_t>(t) * t, 0.0f);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j)
            if (!(j < prefix_len || j <= i)) m[static_cast<size_t>(i) * t + j] = -1e9f;
    return Tensor::from_data({t, t}, m);
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& kv_in,
                                   int prefix_len) const {
    if (q_in.rank() != 3 || kv_in.rank() != 3)
        throw std::runtime_error("attention: expected rank-3 inputs, got " +
                                 shape_str(q_in.shape()) + " and " + shape_str(kv_in.shape()));
    const int bsz = q_in.dim(0), tq = q_in.dim(1), tk = kv_in.dim(1);
    if (kv_in.dim(0) != bsz)
        throw std::runtime_error("attention: batch mismatch " + shape_str(q_in.shape()) +
                                 " vs " + shape_str(kv_in.shape()));
    const int dh = d_model / heads;

    Tensor q = ops::transpose(ops::reshape(wq.forward(q_in), {bsz, tq, heads, dh}), 1, 2);
    Tensor k = ops::transpose(ops::reshape(wk.forward(kv_in), {bsz, tk, heads, dh}), 1, 2);
    Tensor v = ops::transpose(ops::reshape(wv.forward(kv_in), {bsz, tk, heads, dh}), 1, 2);

    Tensor scores = ops::mul_scalar(ops::matmul(q, ops::transpose(k, 2, 3)),
                                    1.0f / std::sqrt(static_cast<float>(dh)));
    if (prefix_len >= 0) {
        if (tq != tk)
            throw std::runtime_error("attention: prefix mask needs square scores, got tq=" +
                                     std::to_string(tq) + " tk=" + std::to_string(tk));
        scores = ops::add(scores, prefix_mask(tq, prefix_len));
    }
    Tensor ctx = ops::matmul(ops::softmax(scores), v);
    return wo.forward(ops::reshape(ops::transpose(ctx, 1, 2), {bsz, tq, d_model}));
}

void MultiHeadAttention::params(const std::string& prefix, ParamMap& out) const {
    wq.params(prefix + ".wq", out);
    wk.params(prefix + ".wk", out);
    wv.params(prefix + ".wv", out);
    wo.params(prefix + ".wo", out);
}

FeedForward::FeedForward(int d, int hidden, Rng& rng) {
    fc1 = Linear(d, hidden, rng);
    fc2 = Linear(hidden, d, rng);
}

Tensor FeedForward::forward(const Tensor& x) const {
    return fc2.forward(ops::relu(fc1.forward(x)));
}

void FeedForward::params(const std::string& prefix, ParamMap& out) const {
    fc1.params(prefix + ".fc1", out);
    fc2.params(prefix + ".fc2", out);
}

Conv3dLayer::Conv3dLayer(int in_c, int out_c, int sd, int sh, int sw, Rng& rng)
    : stride_d(sd), stride_h(sh), stride_w(sw) {
    const float w_sd = std::sqrt(2.0f / static_cast<float>(in_c * 27));
    w = Tensor::randn({out_c, in_c * 27}, rng, w_sd, true);
    b = Tensor::zeros({out_c}, true);
}

Tensor Conv3dLayer::forward(const Tensor& x) const {
    return ops::conv3d(x, w, b, stride_d, stride_h, stride_w);
}

void Conv3dLayer::params(const std::string& prefix, ParamMap& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

} // namespace dvp
