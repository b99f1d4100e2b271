// SPDX-License-Identifier: Apache-2.0
#include "dvp/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dvp/grammar.hpp"
#include "dvp/kernels.hpp"

namespace dvp {

Decoder::Decoder(const ModelConfig& cfg_, Rng& rng) : cfg(cfg_) {
    cfg.validate();
    tok_emb = Tensor::randn({cfg.vocab, cfg.d_llm}, rng, 0.02f, true);
    pos_emb = Tensor::randn({cfg.context, cfg.d_llm}, rng, 0.02f, true);
    blocks.resize((size_t)cfg.dec_layers);
    for (auto& blk : blocks) {
        blk.attn = MultiHeadAttention(cfg.d_llm, cfg.dec_heads, cfg.d_llm, rng);
        blk.ff = FeedForward(cfg.d_llm, cfg.ff_mult * cfg.d_llm, rng);
        blk.ln1 = LayerNormLayer(cfg.d_llm);
        blk.ln2 = LayerNormLayer(cfg.d_llm);
    }
    ln_f = LayerNormLayer(cfg.d_llm);
    out_proj = Linear(cfg.d_llm, cfg.vocab, rng);
}

Tensor Decoder::hidden_states(const Tensor& seq_emb, int prefix_len) const {
    if (seq_emb.rank() != 3 || seq_emb.dim(0) != 1 || seq_emb.dim(2) != cfg.d_llm)
        throw std::runtime_error("decoder: expected (1,T,d_llm) embeddings, got " +
                                 shape_str(seq_emb.shape()));
    const int t = seq_emb.dim(1);
    if (t > cfg.context)
        throw std::runtime_error("decoder: sequence length " + std::to_string(t) +
                                 " exceeds context " + std::to_string(cfg.context));
    Tensor x = ops::add(seq_emb, ops::slice(pos_emb, 0, 0, t));
    for (const auto& blk : blocks) {
        Tensor a = blk.ln1.forward(x);
        x = ops::add(x, blk.attn.forward(a, a, prefix_len));
        x = ops::add(x, blk.ff.forward(blk.ln2.forward(x)));
    }
    return ln_f.forward(x);
}

Tensor Decoder::report_logits(const InputSequence& x_in, const std::vector<int>& targets) const {
    if (targets.empty()) throw std::runtime_error("decoder: empty target report");
    const int p = x_in.total();
    const int l = (int)targets.size();
    if (p + l > cfg.context)
        throw std::runtime_error("decoder: conditioning " + std::to_string(p) + " + report " +
                                 std::to_string(l) + " exceeds context " +
                                 std::to_string(cfg.context));
    std::vector<int> y_in(1, Vocabulary::bos_id);
    y_in.insert(y_in.end(), targets.begin(), targets.end() - 1);
    Tensor y_emb = ops::reshape(ops::embedding(tok_emb, y_in), {1, l, cfg.d_llm});
    Tensor hid = hidden_states(ops::concat({x_in.emb, y_emb}, 1), p);
    return out_proj.forward(ops::slice(hid, 1, p, l));
}

Tensor nll_loss(const Tensor& logits, const std::vector<int>& targets, int pad_id) {
    if (logits.rank() < 2)
        throw std::runtime_error("nll: expected rank >= 2 logits, got " +
                                 shape_str(logits.shape()));
    const int v = logits.dim(logits.rank() - 1);
    const int64_t rows = logits.numel() / v;
    if ((int64_t)targets.size() != rows)
        throw std::runtime_error("nll: " + std::to_string(targets.size()) + " targets for " +
                                 std::to_string(rows) + " logit rows");
    int64_t n_valid = 0;
    for (int y : targets) {
        if (y == pad_id) continue;
        if (y < 0 || y >= v)
            throw std::runtime_error("nll: target id " + std::to_string(y) +
                                     " outside vocabulary of " + std::to_string(v));
        ++n_valid;
    }
    if (n_valid == 0) throw std::runtime_error("nll: every target position is padding");

    Tensor out = make_node(Shape{}, {logits});
    const float* x = logits.data();
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        if (targets[(size_t)r] == pad_id) continue;
        const float* xr = x + r * v;
        float m = xr[0];
        for (int j = 1; j < v; ++j) m = std::max(m, xr[j]);
        double den = 0.0;
        for (int j = 0; j < v; ++j) den += std::exp((double)xr[j] - m);
        total += (double)m + std::log(den) - (double)xr[targets[(size_t)r]];
    }
    out.data()[0] = (float)(total / (double)n_valid);

    if (out.requires_grad()) {
        auto li = logits.impl();
        TensorImpl* oi = out.impl().get();
        const float inv = 1.0f / (float)n_valid;
        out.impl()->backward_fn = [li, oi, targets, pad_id, rows, v, inv]() {
            if (!li->requires_grad) return;
            li->ensure_grad();
            const float g = oi->grad[0] * inv;
            kernels::parallel_for(rows, [&](int64_t r) {
                if (targets[(size_t)r] == pad_id) return;
                const float* xr = li->value.data() + r * v;
                float* dr = li->grad.data() + r * v;
                float m = xr[0];
                for (int j = 1; j < v; ++j) m = std::max(m, xr[j]);
                double den = 0.0;
                for (int j = 0; j < v; ++j) den += std::exp((double)xr[j] - m);
                for (int j = 0; j < v; ++j) {
                    const float p = (float)(std::exp((double)xr[j] - m) / den);
                    dr[j] += g * (p - (j == targets[(size_t)r] ? 1.0f : 0.0f));
                }
            });
        };
    }
    return out;
}

static int argmax_lowest(const float* x, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (x[j] > x[best]) best = j; // strict: ties keep the lowest id
    return best;
}

std::vector<int> Decoder::generate_naive(const InputSequence& x_in, int max_len) const {
    NoGradGuard ng;
    const int p = x_in.total();
    std::vector<int> ids;
    while ((int)ids.size() < max_len && p + 1 + (int)ids.size() <= cfg.context) {
        std::vector<int> y_in(1, Vocabulary::bos_id);
        y_in.insert(y_in.end(), ids.begin(), ids.end());
        const int l = (int)y_in.size();
        Tensor y_emb = ops::reshape(ops::embedding(tok_emb, y_in), {1, l, cfg.d_llm});
        Tensor hid = hidden_states(ops::concat({x_in.emb, y_emb}, 1), p);
        Tensor logits = out_proj.forward(ops::slice(hid, 1, p + l - 1, 1));
        const int next = argmax_lowest(logits.data(), cfg.vocab);
        if (next == Vocabulary::eos_id) break;
        ids.push_back(next);
    }
    return ids;
}

// ---- incremental decoding ------------------------------------------------
// Raw float re-implementation of the block forward, replicating the ops
// arithmetic element for element (same kernels, same accumulation order) so
// cached decoding matches the naive path.

namespace {

struct RawLinear {
    int in = 0, out = 0;
    std::vector<float> wt; // (in, out)
    const float* bias = nullptr;
    bool lora = false;
    int r = 0;
    float scale = 0.0f;
    std::vector<float> at, bt; // (in, r), (r, out)
};

RawLinear make_raw(const Linear& l) {
    RawLinear rl;
    rl.out = l.w.dim(0);
    rl.in = l.w.dim(1);
    rl.wt.resize((size_t)rl.in * rl.out);
    kernels::transpose(l.w.data(), rl.wt.data(), rl.out, rl.in);
    rl.bias = l.b.data();
    if (l.has_lora) {
        rl.lora = true;
        rl.r = l.lora_a.dim(0);
        rl.scale = l.lora_scale;
        rl.at.resize((size_t)rl.in * rl.r);
        kernels::transpose(l.lora_a.data(), rl.at.data(), rl.r, rl.in);
        rl.bt.resize((size_t)rl.r * rl.out);
        kernels::transpose(l.lora_b.data(), rl.bt.data(), rl.out, rl.r);
    }
    return rl;
}

// y = x W^T + b (+ adapter); saxpy in ascending-k order like the gemm kernel
void raw_apply(const RawLinear& l, const float* x, float* y) {
    std::fill(y, y + l.out, 0.0f);
    for (int k = 0; k < l.in; ++k) {
        const float xa = x[k];
        const float* row = l.wt.data() + (size_t)k * l.out;
        for (int j = 0; j < l.out; ++j) y[j] += xa * row[j];
    }
    for (int j = 0; j < l.out; ++j) y[j] += l.bias[j];
    if (l.lora) {
        std::vector<float> tr((size_t)l.r, 0.0f), to((size_t)l.out, 0.0f);
        for (int k = 0; k < l.in; ++k) {
            const float xa = x[k];
            const float* row = l.at.data() + (size_t)k * l.r;
            for (int j = 0; j < l.r; ++j) tr[(size_t)j] += xa * row[j];
        }
        for (int k = 0; k < l.r; ++k) {
            const float ta = tr[(size_t)k];
            const float* row = l.bt.data() + (size_t)k * l.out;
            for (int j = 0; j < l.out; ++j) to[(size_t)j] += ta * row[j];
        }
        for (int j = 0; j < l.out; ++j) {
            const float s = l.scale * to[(size_t)j];
            y[j] += s;
        }
    }
}

struct RawBlock {
    RawLinear wq, wk, wv, wo, fc1, fc2;
    const float* ln1_g;
    const float* ln1_b;
    const float* ln2_g;
    const float* ln2_b;
    std::vector<float> k_cache, v_cache; // rows x d
};

struct RawState {
    std::vector<RawBlock> blocks;
    RawLinear out_proj;
    const float* lnf_g;
    const float* lnf_b;
    int d, heads, dh;
    int prefix_len = 0; // rows visible bidirectionally
    int rows = 0;       // cached rows so far
};

void raw_ln(const float* g, const float* b, const float* x, float* y, int rows, int d) {
    std::vector<float> mean((size_t)rows), rstd((size_t)rows);
    kernels::layernorm_rows(x, g, b, 1e-5f, y, mean.data(), rstd.data(), rows, d);
}

// attention for `new_rows` appended rows whose q/k/v live at the cache
// tail; row i sees j < prefix_len or j <= i (prefix-LM visibility)
void raw_attend(RawState& st, RawBlock& blk, const std::vector<float>& q, int new_rows,
                float* out) {
    const int d = st.d, dh = st.dh;
    const float inv = 1.0f / std::sqrt((float)dh);
    const int base_row = st.rows - new_rows; // global index of first new row
    std::vector<float> scores, probs, ctx((size_t)d);
    for (int rr = 0; rr < new_rows; ++rr) {
        const int upto = std::max(st.prefix_len, base_row + rr + 1);
        scores.resize((size_t)upto);
        probs.resize((size_t)upto);
        const float* qr = q.data() + (size_t)rr * d;
        for (int hd = 0; hd < st.heads; ++hd) {
            const int off = hd * dh;
            for (int j = 0; j < upto; ++j) {
                const float* kr = blk.k_cache.data() + (size_t)j * d + off;
                float acc = 0.0f;
                for (int t = 0; t < dh; ++t) acc += qr[off + t] * kr[t];
                scores[(size_t)j] = acc * inv;
            }
            kernels::softmax_rows(scores.data(), probs.data(), 1, upto);
            for (int t = 0; t < dh; ++t) {
                float acc = 0.0f;
                for (int j = 0; j < upto; ++j)
                    acc += probs[(size_t)j] * blk.v_cache[(size_t)j * d + off + t];
                ctx[(size_t)(off + t)] = acc;
            }
        }
        raw_apply(blk.wo, ctx.data(), out + (size_t)rr * d);
    }
}

// run `new_rows` embedded+positioned rows through every block, extending the
// caches; x is modified in place into the final pre-ln_f hidden rows
void raw_forward_rows(RawState& st, std::vector<float>& x, int new_rows) {
    const int d = st.d;
    st.rows += new_rows;
    std::vector<float> a((size_t)new_rows * d), q(a.size()), attn_out(a.size());
    for (auto& blk : st.blocks) {
        raw_ln(blk.ln1_g, blk.ln1_b, x.data(), a.data(), new_rows, d);
        const size_t tail = blk.k_cache.size();
        blk.k_cache.resize(tail + (size_t)new_rows * d);
        blk.v_cache.resize(tail + (size_t)new_rows * d);
        for (int rr = 0; rr < new_rows; ++rr) {
            const float* ar = a.data() + (size_t)rr * d;
            raw_apply(blk.wq, ar, q.data() + (size_t)rr * d);
            raw_apply(blk.wk, ar, blk.k_cache.data() + tail + (size_t)rr * d);
            raw_apply(blk.wv, ar, blk.v_cache.data() + tail + (size_t)rr * d);
        }
        raw_attend(st, blk, q, new_rows, attn_out.data());
        for (size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];
        raw_ln(blk.ln2_g, blk.ln2_b, x.data(), a.data(), new_rows, d);
        std::vector<float> hid((size_t)blk.fc1.out);
        for (int rr = 0; rr < new_rows; ++rr) {
            raw_apply(blk.fc1, a.data() + (size_t)rr * d, hid.data());
            for (auto& hv : hid) hv = hv > 0.0f ? hv : 0.0f;
            raw_apply(blk.fc2, hid.data(), attn_out.data() + (size_t)rr * d);
        }
        for (size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];
    }
}

} // namespace

std::vector<int> Decoder::generate(const InputSequence& x_in, int max_len) const {
    NoGradGuard ng;
    const int p = x_in.total();
    const int d = cfg.d_llm;
    if (p > cfg.context)
        throw std::runtime_error("decoder: conditioning length " + std::to_string(p) +
                                 " exceeds context " + std::to_string(cfg.context));

    RawState st;
    st.d = d;
    st.heads = cfg.dec_heads;
    st.dh = d / cfg.dec_heads;
    st.prefix_len = p;
    st.blocks.resize(blocks.size());
    for (size_t i = 0; i < blocks.size(); ++i) {
        auto& rb = st.blocks[i];
        const auto& blk = blocks[i];
        rb.wq = make_raw(blk.attn.wq);
        rb.wk = make_raw(blk.attn.wk);
        rb.wv = make_raw(blk.attn.wv);
        rb.wo = make_raw(blk.attn.wo);
        rb.fc1 = make_raw(blk.ff.fc1);
        rb.fc2 = make_raw(blk.ff.fc2);
        rb.ln1_g = blk.ln1.gamma.data();
        rb.ln1_b = blk.ln1.beta.data();
        rb.ln2_g = blk.ln2.gamma.data();
        rb.ln2_b = blk.ln2.beta.data();
    }
    st.out_proj = make_raw(out_proj);
    st.lnf_g = ln_f.gamma.data();
    st.lnf_b = ln_f.beta.data();

    // prefill: conditioning rows, bidirectional within the prefix
    std::vector<float> x((size_t)p * d);
    const float* xe = x_in.emb.data();
    const float* pe = pos_emb.data();
    for (size_t i = 0; i < x.size(); ++i) x[i] = xe[i] + pe[i];
    raw_forward_rows(st, x, p);

    std::vector<int> ids;
    std::vector<float> row((size_t)d), normed((size_t)d), logits((size_t)cfg.vocab);
    int prev = Vocabulary::bos_id;
    while ((int)ids.size() < max_len && p + 1 + (int)ids.size() <= cfg.context) {
        const int pos = p + (int)ids.size();
        const float* te = tok_emb.data() + (size_t)prev * d;
        for (int j = 0; j < d; ++j) row[(size_t)j] = te[j] + pe[(size_t)pos * d + j];
        std::vector<float> xr = row;
        raw_forward_rows(st, xr, 1);
        raw_ln(st.lnf_g, st.lnf_b, xr.data(), normed.data(), 1, d);
        raw_apply(st.out_proj, normed.data(), logits.data());
        const int next = argmax_lowest(logits.data(), cfg.vocab);
        if (next == Vocabulary::eos_id) break;
        ids.push_back(next);
        prev = next;
    }
    return ids;
}

void Decoder::apply_adapters(int r, float alpha, Rng& rng) {
    for (auto& blk : blocks) {
        blk.attn.wq.add_lora(r, alpha, rng);
        blk.attn.wv.add_lora(r, alpha, rng);
    }
}

int64_t Decoder::adapter_param_count() const {
    int64_t n = 0;
    for (const auto& blk : blocks)
        n += blk.attn.wq.adapter_param_count() + blk.attn.wv.adapter_param_count();
    return n;
}

void Decoder::params(const std::string& prefix, ParamMap& out) const {
    out.emplace_back(prefix + ".tok_emb", tok_emb);
    out.emplace_back(prefix + ".pos_emb", pos_emb);
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string bp = prefix + ".block" + std::to_string(i);
        blocks[i].attn.params(bp + ".attn", out);
        blocks[i].ff.params(bp + ".ff", out);
        blocks[i].ln1.params(bp + ".ln1", out);
        blocks[i].ln2.params(bp + ".ln2", out);
    }
    ln_f.params(prefix + ".ln_f", out);
    out_proj.params(prefix + ".out_proj", out);
}

} // namespace dvp
