// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dvp/dpg.hpp"
#include "dvp/nn.hpp"

namespace dvp {

// Autoregressive transformer over token + soft-prompt embeddings with a
// prefix-LM mask: the conditioning block (everything in InputSequence) is
// bidirectionally visible, report tokens are causal. Pre-norm blocks,
// learned positions, tied nothing (separate output projection).
struct Decoder {
    ModelConfig cfg;
    Tensor tok_emb; // (vocab, d_llm)
    Tensor pos_emb; // (context, d_llm)
    struct Block {
        MultiHeadAttention attn;
        FeedForward ff;
        LayerNormLayer ln1, ln2;
    };
    std::vector<Block> blocks;
    LayerNormLayer ln_f;
    Linear out_proj;

    Decoder() = default;
    Decoder(const ModelConfig& cfg, Rng& rng);

    // seq_emb (1, T, d_llm) without positions; adds positions, runs the
    // blocks under the prefix mask, applies the final norm.
    Tensor hidden_states(const Tensor& seq_emb, int prefix_len) const;

    // Teacher forcing: conditioning followed by [bos, y_1..y_{L-1}] produces
    // logits (1, L, vocab) aligned with targets y_1..y_L.
    Tensor report_logits(const InputSequence& x_in, const std::vector<int>& targets) const;

    // Greedy decoding (ties resolve to the lowest token id). Returns report
    // ids without bos/eos; stops at eos, max_len, or the context limit.
    // Incremental cached implementation; generate_naive recomputes the full
    // sequence every step and exists to pin the cache's correctness.
    std::vector<int> generate(const InputSequence& x_in, int max_len) const;
    std::vector<int> generate_naive(const InputSequence& x_in, int max_len) const;

    // Low-rank adapters on every block's query and value projections; the
    // adapted base weights freeze.
    void apply_adapters(int r, float alpha, Rng& rng);
    int64_t adapter_param_count() const;

    void params(const std::string& prefix, ParamMap& out) const;
};

// Mean negative log-likelihood of targets under logits (1, L, vocab),
// skipping positions whose target is pad_id. Differentiable w.r.t. logits.
Tensor nll_loss(const Tensor& logits, const std::vector<int>& targets, int pad_id);

} // namespace dvp
