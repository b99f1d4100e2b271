// SPDX-License-Identifier: Apache-2.0
#include "dvp/model.hpp"

#include <stdexcept>

namespace dvp {

GeneratorModel::GeneratorModel(const ModelConfig& cfg_, uint64_t seed) : cfg(cfg_) {
    cfg.vocab = vocab().size();
    cfg.validate();
    Rng rng(mix64(seed, 0x6d6f646c)); // "modl"
    encoder = VolumeEncoder(cfg, rng);
    resampler = Resampler(cfg, rng);
    hde = HybridDeltaEncoder(cfg, rng);
    dpg = PromptGenerator(cfg, rng);
    aux_head = Linear(cfg.d, kNumClasses, rng);
    decoder = Decoder(cfg, rng);
}

ParamMap GeneratorModel::params() const {
    ParamMap out;
    encoder.params("enc", out);
    resampler.params("rs", out);
    hde.params("hde", out);
    dpg.params("dpg", out);
    aux_head.params("aux", out);
    decoder.params("dec", out);
    return out;
}

Tensor GeneratorModel::volume_tensor(const std::vector<float>& volume) const {
    const int64_t want = (int64_t)cfg.s * cfg.h * cfg.w;
    if ((int64_t)volume.size() != want)
        throw std::runtime_error("model: volume has " + std::to_string(volume.size()) +
                                 " voxels, expected " + std::to_string(want));
    return Tensor::from_data({1, 1, cfg.s, cfg.h, cfg.w}, volume);
}

Tensor GeneratorModel::latents_for(const std::vector<float>& volume) const {
    return perceive(encoder, resampler, volume_tensor(volume));
}

GeneratorModel::ForwardOut GeneratorModel::forward_inputs(
    const std::vector<float>& target_vol, const std::vector<float>& ref_vol,
    const std::array<float, kNumClasses>* anchor_probs, const AblationFlags& flags) const {
    if (flags.use_e && anchor_probs == nullptr)
        throw std::runtime_error("model: anchor probabilities required when use_e is on");
    if (target_vol.size() != ref_vol.size())
        throw std::runtime_error("model: target and reference volumes differ in size (" +
                                 std::to_string(target_vol.size()) + " vs " +
                                 std::to_string(ref_vol.size()) + ")");

    ForwardOut out;
    out.latents = latents_for(target_vol);

    if (flags.pixel_diff) {
        if (flags.use_prefix) {
            std::vector<float> dvol(target_vol.size());
            for (size_t i = 0; i < dvol.size(); ++i) dvol[i] = target_vol[i] - ref_vol[i];
            Tensor pooled = ops::mean_axis(latents_for(dvol), 1); // (1, d)
            out.prompt = dpg.fuse_and_project(pooled, pooled);    // same slot twice
        }
    } else {
        out.latents_ref = latents_for(ref_vol);
        if (flags.use_prefix) {
            const int bsz = out.latents.dim(0);
            Tensor g = flags.use_global ? hde.global_delta(out.latents, out.latents_ref)
                                        : Tensor::zeros({bsz, cfg.d});
            Tensor l = flags.use_local
                           ? HybridDeltaEncoder::local_delta(out.latents, out.latents_ref)
                           : Tensor::zeros({bsz, cfg.d});
            out.prompt = dpg.fuse_and_project(g, l);
        }
    }

    if (flags.use_e) out.anchor_ids = anchor_tokens(*anchor_probs, cfg.anchor_threshold);
    out.x_in = build_input(out.prompt, dpg.project_latents(out.latents), out.anchor_ids,
                           instruction_tokens(), decoder.tok_emb);
    return out;
}

Tensor GeneratorModel::aux_logits(const Tensor& latents) const {
    return aux_head.forward(ops::mean_axis(latents, 1));
}

void GeneratorModel::apply_adapters(int r, float alpha, uint64_t seed) {
    Rng rng(mix64(seed, 0x6c6f7261)); // "lora"
    decoder.apply_adapters(r, alpha, rng);
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    if (!same_shape(logits.shape(), targets.shape()))
        throw std::runtime_error("bce: logits " + shape_str(logits.shape()) +
                                 " vs targets " + shape_str(targets.shape()));
    return ops::mean(ops::sub(ops::softplus(logits), ops::mul(logits, targets)));
}

} // namespace dvp
