// SPDX-License-Identifier: Apache-2.0
#include "dvp/hde.hpp"

#include <stdexcept>

namespace dvp {

static void check_pair(const char* who, const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || !same_shape(a.shape(), b.shape()))
        throw std::runtime_error(std::string(who) + ": expected matching (b,n,d) latents, got " +
                                 shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

HybridDeltaEncoder::HybridDeltaEncoder(const ModelConfig& cfg, Rng& rng) {
    delta_query = Tensor::randn({cfg.d}, rng, 0.02f, true);
    pos = Tensor::randn({2 * cfg.n_latents + 1, cfg.d}, rng, 0.02f, true);
    attn = MultiHeadAttention(cfg.d, cfg.heads, cfg.d, rng);
    ff = FeedForward(cfg.d, cfg.ff_mult * cfg.d, rng);
    ln1 = LayerNormLayer(cfg.d);
    ln2 = LayerNormLayer(cfg.d);
}

Tensor HybridDeltaEncoder::global_delta(const Tensor& lat, const Tensor& lat_ref) const {
    check_pair("global delta", lat, lat_ref);
    const int bsz = lat.dim(0), n = lat.dim(1), d = lat.dim(2);
    if (2 * n + 1 != pos.dim(0))
        throw std::runtime_error("global delta: latent count " + std::to_string(n) +
                                 " does not fit position table of " + std::to_string(pos.dim(0)) +
                                 " rows");
    Tensor dq = ops::repeat_leading(ops::reshape(delta_query, {1, d}), bsz); // (b,1,d)
    Tensor x = ops::add(ops::concat({dq, lat, lat_ref}, 1), pos);
    Tensor h = ln1.forward(ops::add(x, attn.forward(x, x)));
    h = ln2.forward(ops::add(h, ff.forward(h)));
    return ops::reshape(ops::slice(h, 1, 0, 1), {bsz, d}); // only the query position leaves
}

void HybridDeltaEncoder::params(const std::string& prefix, ParamMap& out) const {
    out.emplace_back(prefix + ".delta_query", delta_query);
    out.emplace_back(prefix + ".pos", pos);
    attn.params(prefix + ".attn", out);
    ff.params(prefix + ".ff", out);
    ln1.params(prefix + ".ln1", out);
    ln2.params(prefix + ".ln2", out);
}

Tensor HybridDeltaEncoder::local_weights(const Tensor& lat, const Tensor& lat_ref) {
    check_pair("local delta", lat, lat_ref);
    Tensor diff = ops::sub(lat, lat_ref);
    Tensor sq = ops::squared_l2(diff, 2);                    // (b, n)
    Tensor tot = ops::sum_axis(sq, 1, /*keepdim=*/true);     // (b, 1)
    return ops::div(sq, ops::add_scalar(tot, 1e-5f));
}

Tensor HybridDeltaEncoder::local_delta(const Tensor& lat, const Tensor& lat_ref) {
    const int bsz = lat.dim(0), n = lat.dim(1);
    Tensor diff = ops::sub(lat, lat_ref);
    Tensor w = ops::reshape(local_weights(lat, lat_ref), {bsz, n, 1});
    return ops::sum_axis(ops::mul(diff, w), 1); // (b, d)
}

std::vector<float> HybridDeltaEncoder::importance_scores(const Tensor& lat,
                                                         const Tensor& lat_ref) {
    check_pair("importance scores", lat, lat_ref);
    if (lat.dim(0) != 1)
        throw std::runtime_error("importance scores: expected a single pair, got batch " +
                                 std::to_string(lat.dim(0)));
    NoGradGuard ng;
    Tensor sq = ops::squared_l2(ops::sub(lat, lat_ref), 2);
    return sq.values();
}

} // namespace dvp
