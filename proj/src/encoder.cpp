// SPDX-License-Identifier: Apache-2.0
#include "dvp/encoder.hpp"

#include <stdexcept>

namespace dvp {

VolumeEncoder::VolumeEncoder(const ModelConfig& cfg, Rng& rng) {
    conv1 = Conv3dLayer(1, cfg.enc_c1, 2, 2, 2, rng);
    conv2 = Conv3dLayer(cfg.enc_c1, cfg.enc_c2, 1, 2, 2, rng);
    conv3 = Conv3dLayer(cfg.enc_c2, cfg.enc_c, 2, 2, 2, rng);
    v = cfg.tokens_v();
    pos = Tensor::randn({v, cfg.enc_c}, rng, 0.02f, true);
}

Tensor VolumeEncoder::forward(const Tensor& volume) const {
    if (volume.rank() != 5 || volume.dim(1) != 1)
        throw std::runtime_error("encoder: expected (b,1,s,h,w) volume, got " +
                                 shape_str(volume.shape()));
    Tensor x = ops::relu(conv1.forward(volume));
    x = ops::relu(conv2.forward(x));
    x = ops::relu(conv3.forward(x));
    // (b, c, d', h', w') -> (b, v, c)
    const int bsz = x.dim(0), c = x.dim(1);
    const int cells = x.dim(2) * x.dim(3) * x.dim(4);
    if (cells != v)
        throw std::runtime_error("encoder: token count " + std::to_string(cells) +
                                 " does not match positional table rows " + std::to_string(v));
    x = ops::transpose(ops::reshape(x, {bsz, c, cells}), 1, 2);
    return ops::add(x, pos);
}

void VolumeEncoder::params(const std::string& prefix, ParamMap& out) const {
    conv1.params(prefix + ".conv1", out);
    conv2.params(prefix + ".conv2", out);
    conv3.params(prefix + ".conv3", out);
    out.emplace_back(prefix + ".pos", pos);
}

Resampler::Resampler(const ModelConfig& cfg, Rng& rng) {
    latents = Tensor::randn({cfg.n_latents, cfg.d}, rng, 0.02f, true);
    attn = MultiHeadAttention(cfg.d, cfg.heads, cfg.enc_c, rng);
    ff = FeedForward(cfg.d, cfg.ff_mult * cfg.d, rng);
    ln1 = LayerNormLayer(cfg.d);
    ln2 = LayerNormLayer(cfg.d);
}

Tensor Resampler::forward(const Tensor& features) const {
    if (features.rank() != 3)
        throw std::runtime_error("resampler: expected (b,v,c) features, got " +
                                 shape_str(features.shape()));
    const int bsz = features.dim(0);
    Tensor q = ops::repeat_leading(latents, bsz); // (b, n, d), one shared table
    Tensor h = ln1.forward(ops::add(q, attn.forward(q, features)));
    return ln2.forward(ops::add(h, ff.forward(h)));
}

const float* Resampler::latent_data() const {
    return latents.data();
}

void Resampler::params(const std::string& prefix, ParamMap& out) const {
    out.emplace_back(prefix + ".latents", latents);
    attn.params(prefix + ".attn", out);
    ff.params(prefix + ".ff", out);
    ln1.params(prefix + ".ln1", out);
    ln2.params(prefix + ".ln2", out);
}

Tensor perceive(const VolumeEncoder& enc, const Resampler& rs, const Tensor& volume) {
    return rs.forward(enc.forward(volume));
}

} // namespace dvp
