// SPDX-License-Identifier: Apache-2.0
#include "dvp/dpg.hpp"

#include <stdexcept>

namespace dvp {

PromptGenerator::PromptGenerator(const ModelConfig& cfg, Rng& rng)
    : p(cfg.prefix_len), d_llm(cfg.d_llm) {
    fc1 = Linear(2 * cfg.d, 4 * cfg.d_llm, rng);
    fc2 = Linear(4 * cfg.d_llm, cfg.prefix_len * cfg.d_llm, rng);
    latent_proj = Linear(cfg.d, cfg.d_llm, rng);
}

Tensor PromptGenerator::fuse_and_project(const Tensor& g, const Tensor& l) const {
    if (g.rank() != 2 || !same_shape(g.shape(), l.shape()))
        throw std::runtime_error("prompt generator: expected matching (b,d) summaries, got " +
                                 shape_str(g.shape()) + " and " + shape_str(l.shape()));
    Tensor z = ops::concat({g, l}, 1); // (b, 2d)
    z = fc2.forward(ops::relu(fc1.forward(z)));
    return ops::reshape(z, {g.dim(0), p, d_llm});
}

Tensor PromptGenerator::project_latents(const Tensor& lat) const {
    if (lat.rank() != 3)
        throw std::runtime_error("prompt generator: expected (b,n,d) latents, got " +
                                 shape_str(lat.shape()));
    return latent_proj.forward(lat);
}

void PromptGenerator::params(const std::string& prefix, ParamMap& out) const {
    fc1.params(prefix + ".fc1", out);
    fc2.params(prefix + ".fc2", out);
    latent_proj.params(prefix + ".latent_proj", out);
}

static Tensor embed_ids(const Tensor& table, const std::vector<int>& ids) {
    Tensor t = ops::embedding(table, ids);                // (len, d_llm)
    return ops::reshape(t, {1, (int)ids.size(), table.dim(1)});
}

InputSequence build_input(const Tensor& prompt, const Tensor& projected_latents,
                          const std::vector<int>& anchor_ids,
                          const std::vector<int>& instruction_ids,
                          const Tensor& token_table) {
    if (projected_latents.rank() != 3)
        throw std::runtime_error("build input: expected (b,n,d_llm) latents, got " +
                                 shape_str(projected_latents.shape()));
    if (instruction_ids.empty())
        throw std::runtime_error("build input: instruction segment must not be empty");
    const int bsz = projected_latents.dim(0);
    const int d_llm = projected_latents.dim(2);
    if (bsz != 1)
        throw std::runtime_error("build input: token segments require batch 1, got " +
                                 std::to_string(bsz));

    InputSequence seq;
    seq.n = projected_latents.dim(1);
    seq.e = (int)anchor_ids.size();
    seq.t = (int)instruction_ids.size();

    std::vector<Tensor> parts;
    if (prompt.defined() && prompt.rank() == 3) {
        if (prompt.dim(0) != bsz || prompt.dim(2) != d_llm)
            throw std::runtime_error("build input: prompt " + shape_str(prompt.shape()) +
                                     " does not align with latents " +
                                     shape_str(projected_latents.shape()));
        seq.p = prompt.dim(1);
        parts.push_back(prompt);
    }
    parts.push_back(projected_latents);
    if (!anchor_ids.empty()) parts.push_back(embed_ids(token_table, anchor_ids));
    parts.push_back(embed_ids(token_table, instruction_ids));
    seq.emb = parts.size() == 1 ? parts[0] : ops::concat(parts, 1);
    return seq;
}

} // namespace dvp
