// SPDX-License-Identifier: Apache-2.0
#include "dvp/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "dvp/kernels.hpp"

namespace dvp::ops {

namespace {

std::runtime_error op_error(const char* op, const std::string& what) {
    return std::runtime_error(std::string(op) + ": " + what);
}

std::runtime_error mismatch(const char* op, const Shape& a, const Shape& b) {
    return op_error(op, "shape mismatch " + shape_str(a) + " vs " +
                            shape_str(b));
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = (int)s.size() - 1; i >= 0; --i) {
        st[(size_t)i] = acc;
        acc *= s[(size_t)i];
    }
    return st;
}

struct BcastPlan {
    Shape out;
    std::vector<int64_t> stride_a, stride_b;
    bool same = false;
};

BcastPlan broadcast_plan(const char* op, const Shape& a, const Shape& b) {
    BcastPlan p;
    if (a == b) {
        p.out = a;
        p.same = true;
        return p;
    }
    const int ra = (int)a.size(), rb = (int)b.size();
    const int r = ra > rb ? ra : rb;
    p.out.resize((size_t)r);
    for (int i = 0; i < r; ++i) {
        const int da = i < r - ra ? 1 : a[(size_t)(i - (r - ra))];
        const int db = i < r - rb ? 1 : b[(size_t)(i - (r - rb))];
        if (da != db && da != 1 && db != 1) throw mismatch(op, a, b);
        p.out[(size_t)i] = da > db ? da : db;
    }
    const auto sa = row_major_strides(a), sb = row_major_strides(b);
    p.stride_a.assign((size_t)r, 0);
    p.stride_b.assign((size_t)r, 0);
    for (int i = 0; i < r; ++i) {
        if (i >= r - ra && a[(size_t)(i - (r - ra))] != 1)
            p.stride_a[(size_t)i] = sa[(size_t)(i - (r - ra))];
        if (i >= r - rb && b[(size_t)(i - (r - rb))] != 1)
            p.stride_b[(size_t)i] = sb[(size_t)(i - (r - rb))];
    }
    return p;
}

// decompose flat out index into the two source offsets
inline void bcast_offsets(const BcastPlan& p,
                          const std::vector<int64_t>& out_strides, int64_t i,
                          int64_t& oa, int64_t& ob) {
    oa = 0;
    ob = 0;
    int64_t rem = i;
    for (size_t d = 0; d < p.out.size(); ++d) {
        const int64_t q = rem / out_strides[d];
        rem -= q * out_strides[d];
        oa += q * p.stride_a[d];
        ob += q * p.stride_b[d];
    }
}

// generic broadcasting binary op. fwd(av,bv) -> out value;
// ga(av,bv,g) / gb(av,bv,g) -> gradient contributions.
template <class Fwd, class Ga, class Gb>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                 Ga ga, Gb gb) {
    BcastPlan plan = broadcast_plan(name, a.shape(), b.shape());
    Tensor out = make_node(plan.out, {a, b});
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const int64_t n = out.numel();
    if (plan.same) {
        kernels::parallel_for(n, [&](int64_t i) { po[i] = fwd(pa[i], pb[i]); });
    } else {
        const auto ostr = row_major_strides(plan.out);
        for (int64_t i = 0; i < n; ++i) {
            int64_t oa, ob;
            bcast_offsets(plan, ostr, i, oa, ob);
            po[i] = fwd(pa[oa], pb[ob]);
        }
    }
    if (out.requires_grad()) {
        auto ai = a.impl();
        auto bi = b.impl();
        TensorImpl* oi = out.impl().get(); // raw self-ref: a shared_ptr here would cycle and leak the graph
        out.impl()->backward_fn = [ai, bi, oi, plan, ga, gb]() {
            const float* g = oi->grad.data();
            const float* pa = ai->value.data();
            const float* pb = bi->value.data();
            const int64_t n = (int64_t)oi->value.size();
            const bool need_a = ai->requires_grad;
            const bool need_b = bi->requires_grad;
            if (need_a) ai->ensure_grad();
            if (need_b) bi->ensure_grad();
            if (plan.same) {
                if (need_a) {
                    float* da = ai->grad.data();
                    kernels::parallel_for(n, [&](int64_t i) {
                        da[i] += ga(pa[i], pb[i], g[i]);
                    });
                }
                if (need_b) {
                    float* db = bi->grad.data();
                    kernels::parallel_for(n, [&](int64_t i) {
                        db[i] += gb(pa[i], pb[i], g[i]);
                    });
                }
            } else {
                // broadcast axes reduce into shared slots: keep it serial
                const auto ostr = row_major_strides(plan.out);
                float* da = need_a ? ai->grad.data() : nullptr;
                float* db = need_b ? bi->grad.data() : nullptr;
                for (int64_t i = 0; i < n; ++i) {
                    int64_t oa, ob;
                    bcast_offsets(plan, ostr, i, oa, ob);
                    if (need_a) da[oa] += ga(pa[oa], pb[ob], g[i]);
                    if (need_b) db[ob] += gb(pa[oa], pb[ob], g[i]);
                }
            }
        };
    }
    return out;
}

// elementwise unary op: fwd(v) -> out, bwd(v, out, g) -> grad-in
template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    Tensor out = make_node(a.shape(), {a});
    const float* pa = a.data();
    float* po = out.data();
    kernels::parallel_for(out.numel(),
                          [&](int64_t i) { po[i] = fwd(pa[i]); });
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi, bwd]() {
            ai->ensure_grad();
            const float* g = oi->grad.data();
            const float* v = ai->value.data();
            const float* o = oi->value.data();
            float* d = ai->grad.data();
            kernels::parallel_for((int64_t)oi->value.size(), [&](int64_t i) {
                d[i] += bwd(v[i], o[i], g[i]);
            });
        };
    }
    return out;
}

void check_axis(const char* op, const Tensor& a, int axis) {
    if (axis < 0 || axis >= a.rank())
        throw op_error(op, "axis " + std::to_string(axis) +
                               " out of range for shape " +
                               shape_str(a.shape()));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](float x, float y) { return x + y; },
        [](float, float, float g) { return g; },
        [](float, float, float g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](float x, float y) { return x - y; },
        [](float, float, float g) { return g; },
        [](float, float, float g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](float x, float y) { return x * y; },
        [](float, float y, float g) { return g * y; },
        [](float x, float, float g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](float x, float y) { return x / y; },
        [](float, float y, float g) { return g / y; },
        [](float x, float y, float g) { return -g * x / (y * y); });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        a, [](float v) { return -v; },
        [](float, float, float g) { return -g; });
}

Tensor add_scalar(const Tensor& a, float s) {
    return unary_op(
        a, [s](float v) { return v + s; },
        [](float, float, float g) { return g; });
}

Tensor mul_scalar(const Tensor& a, float s) {
    return unary_op(
        a, [s](float v) { return v * s; },
        [s](float, float, float g) { return g * s; });
}

Tensor rsub_scalar(float s, const Tensor& a) {
    return unary_op(
        a, [s](float v) { return s - v; },
        [](float, float, float g) { return -g; });
}

Tensor clamp_min(const Tensor& a, float lo) {
    return unary_op(
        a, [lo](float v) { return v < lo ? lo : v; },
        [lo](float v, float, float g) { return v >= lo ? g : 0.0f; });
}

Tensor clamp_max(const Tensor& a, float hi) {
    return unary_op(
        a, [hi](float v) { return v > hi ? hi : v; },
        [hi](float v, float, float g) { return v <= hi ? g : 0.0f; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](float v) { return std::exp(v); },
        [](float, float o, float g) { return g * o; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a, [](float v) { return std::log(v); },
        [](float v, float, float g) { return g / v; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](float v) { return v > 0.0f ? v : 0.0f; },
        [](float v, float, float g) { return v > 0.0f ? g : 0.0f; });
}

namespace {
constexpr float kGeluC0 = 0.7978845608028654f; // sqrt(2/pi)
constexpr float kGeluC1 = 0.044715f;
} // namespace

Tensor gelu(const Tensor& a) {
    return unary_op(
        a,
        [](float v) {
            const float u = kGeluC0 * (v + kGeluC1 * v * v * v);
            return 0.5f * v * (1.0f + std::tanh(u));
        },
        [](float v, float, float g) {
            const float u = kGeluC0 * (v + kGeluC1 * v * v * v);
            const float t = std::tanh(u);
            const float du = kGeluC0 * (1.0f + 3.0f * kGeluC1 * v * v);
            return g * (0.5f * (1.0f + t) +
                        0.5f * v * (1.0f - t * t) * du);
        });
}

static inline float sigmoid_val(float v) {
    if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
    const float e = std::exp(v);
    return e / (1.0f + e);
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a, [](float v) { return sigmoid_val(v); },
        [](float, float o, float g) { return g * o * (1.0f - o); });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        a,
        [](float v) {
            const float m = v > 0.0f ? v : 0.0f;
            return m + std::log1p(std::exp(-std::fabs(v)));
        },
        [](float v, float, float g) { return g * sigmoid_val(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) throw mismatch("matmul", a.shape(), b.shape());
    const int m = a.dim(a.rank() - 2);
    const int k = a.dim(a.rank() - 1);
    const int kb = b.dim(b.rank() - 2);
    const int n = b.dim(b.rank() - 1);
    if (k != kb) throw mismatch("matmul", a.shape(), b.shape());
    const bool shared_b = b.rank() == 2;
    Shape lead(a.shape().begin(), a.shape().end() - 2);
    if (!shared_b) {
        Shape lead_b(b.shape().begin(), b.shape().end() - 2);
        if (lead != lead_b) throw mismatch("matmul", a.shape(), b.shape());
    }
    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    const int64_t batches = shape_numel(lead);
    Tensor out = make_node(out_shape, {a, b});
    for (int64_t nb = 0; nb < batches; ++nb)
        kernels::gemm(a.data() + nb * (int64_t)m * k,
                      b.data() + (shared_b ? 0 : nb * (int64_t)k * n),
                      out.data() + nb * (int64_t)m * n, m, k, n, false);
    if (out.requires_grad()) {
        auto ai = a.impl();
        auto bi = b.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, bi, oi, m, k, n, batches, shared_b]() {
            const float* g = oi->grad.data();
            if (ai->requires_grad) {
                ai->ensure_grad();
                // dA = dC * B^T, per batch
                std::vector<float> bt((size_t)((int64_t)k * n));
                for (int64_t nb = 0; nb < batches; ++nb) {
                    const float* bp =
                        bi->value.data() + (shared_b ? 0 : nb * (int64_t)k * n);
                    if (nb == 0 || !shared_b)
                        kernels::transpose(bp, bt.data(), k, n);
                    kernels::gemm(g + nb * (int64_t)m * n, bt.data(),
                                  ai->grad.data() + nb * (int64_t)m * k, m, n,
                                  k, true);
                }
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                // dB = A^T * dC; shared B accumulates across the batch
                std::vector<float> at((size_t)((int64_t)m * k));
                for (int64_t nb = 0; nb < batches; ++nb) {
                    kernels::transpose(ai->value.data() + nb * (int64_t)m * k,
                                       at.data(), m, k);
                    kernels::gemm(at.data(), g + nb * (int64_t)m * n,
                                  bi->grad.data() +
                                      (shared_b ? 0 : nb * (int64_t)k * n),
                                  k, m, n, true);
                }
            }
        };
    }
    return out;
}

Tensor transpose(const Tensor& a, int ax0, int ax1) {
    check_axis("transpose", a, ax0);
    check_axis("transpose", a, ax1);
    Shape os = a.shape();
    std::swap(os[(size_t)ax0], os[(size_t)ax1]);
    Tensor out = make_node(os, {a});
    const auto in_str = row_major_strides(a.shape());
    const auto out_str = row_major_strides(os);
    auto src_strides = in_str;
    std::swap(src_strides[(size_t)ax0], src_strides[(size_t)ax1]);
    const float* pa = a.data();
    float* po = out.data();
    const int r = a.rank();
    kernels::parallel_for(out.numel(), [&](int64_t i) {
        int64_t rem = i, off = 0;
        for (int d = 0; d < r; ++d) {
            const int64_t q = rem / out_str[(size_t)d];
            rem -= q * out_str[(size_t)d];
            off += q * src_strides[(size_t)d];
        }
        po[i] = pa[off];
    });
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi, out_str, src_strides, r]() {
            ai->ensure_grad();
            const float* g = oi->grad.data();
            float* d = ai->grad.data();
            kernels::parallel_for((int64_t)oi->value.size(), [&](int64_t i) {
                int64_t rem = i, off = 0;
                for (int dd = 0; dd < r; ++dd) {
                    const int64_t q = rem / out_str[(size_t)dd];
                    rem -= q * out_str[(size_t)dd];
                    off += q * src_strides[(size_t)dd];
                }
                d[off] += g[i]; // bijective: one writer per slot
            });
        };
    }
    return out;
}

Tensor reshape(const Tensor& a, const Shape& s) {
    if (shape_numel(s) != a.numel())
        throw op_error("reshape", "cannot view " + shape_str(a.shape()) +
                                      " as " + shape_str(s));
    Tensor out = make_node(s, {a});
    std::memcpy(out.data(), a.data(), sizeof(float) * (size_t)a.numel());
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi]() {
            ai->ensure_grad();
            const float* g = oi->grad.data();
            float* d = ai->grad.data();
            kernels::parallel_for((int64_t)oi->value.size(),
                                  [&](int64_t i) { d[i] += g[i]; });
        };
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw op_error("concat", "no inputs");
    check_axis("concat", xs[0], axis);
    Shape os = xs[0].shape();
    int total = 0;
    for (const auto& x : xs) {
        Shape s = x.shape();
        if ((int)s.size() != (int)os.size())
            throw mismatch("concat", os, s);
        for (int d = 0; d < (int)s.size(); ++d)
            if (d != axis && s[(size_t)d] != os[(size_t)d])
                throw mismatch("concat", xs[0].shape(), s);
        total += s[(size_t)axis];
    }
    os[(size_t)axis] = total;
    std::vector<Tensor> parents = xs;
    Tensor out = make_node(os, parents);
    int64_t inner = 1;
    for (int d = axis + 1; d < (int)os.size(); ++d) inner *= os[(size_t)d];
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= os[(size_t)d];
    const int64_t out_row = (int64_t)total * inner;
    int64_t off = 0;
    std::vector<int64_t> offsets;
    for (const auto& x : xs) {
        offsets.push_back(off);
        const int64_t xa = x.dim(axis) * inner;
        const float* px = x.data();
        float* po = out.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(po + o * out_row + off, px + o * xa,
                        sizeof(float) * (size_t)xa);
        off += xa;
    }
    if (out.requires_grad()) {
        TensorImpl* oi = out.impl().get();
        std::vector<std::shared_ptr<TensorImpl>> imps;
        std::vector<int64_t> widths;
        for (const auto& x : xs) {
            imps.push_back(x.impl());
            widths.push_back(x.dim(axis) * inner);
        }
        out.impl()->backward_fn = [oi, imps, widths, offsets, outer,
                                   out_row]() {
            const float* g = oi->grad.data();
            for (size_t t = 0; t < imps.size(); ++t) {
                if (!imps[t]->requires_grad) continue;
                imps[t]->ensure_grad();
                float* d = imps[t]->grad.data();
                const int64_t w = widths[t];
                for (int64_t o = 0; o < outer; ++o) {
                    const float* gs = g + o * out_row + offsets[t];
                    float* ds = d + o * w;
                    for (int64_t i = 0; i < w; ++i) ds[i] += gs[i];
                }
            }
        };
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    check_axis("slice", a, axis);
    if (start < 0 || len <= 0 || start + len > a.dim(axis))
        throw op_error("slice", "range [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) +
                                    ") out of bounds for axis " +
                                    std::to_string(axis) + " of " +
                                    shape_str(a.shape()));
    Shape os = a.shape();
    os[(size_t)axis] = len;
    Tensor out = make_node(os, {a});
    int64_t inner = 1;
    for (int d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    const int64_t in_row = (int64_t)a.dim(axis) * inner;
    const int64_t out_row = (int64_t)len * inner;
    const int64_t src_off = (int64_t)start * inner;
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * out_row, a.data() + o * in_row + src_off,
                    sizeof(float) * (size_t)out_row);
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi, outer, in_row, out_row, src_off]() {
            ai->ensure_grad();
            const float* g = oi->grad.data();
            float* d = ai->grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                const float* gs = g + o * out_row;
                float* ds = d + o * in_row + src_off;
                for (int64_t i = 0; i < out_row; ++i) ds[i] += gs[i];
            }
        };
    }
    return out;
}

Tensor softmax(const Tensor& a) {
    if (a.rank() < 1) throw op_error("softmax", "rank-0 input");
    const int cols = a.dim(a.rank() - 1);
    const int64_t rows = a.numel() / cols;
    Tensor out = make_node(a.shape(), {a});
    kernels::softmax_rows(a.data(), out.data(), (int)rows, cols);
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi, rows, cols]() {
            ai->ensure_grad();
            const float* y = oi->value.data();
            const float* g = oi->grad.data();
            float* d = ai->grad.data();
            kernels::parallel_for(rows, [&](int64_t r) {
                const float* yr = y + r * cols;
                const float* gr = g + r * cols;
                float* dr = d + r * cols;
                float dot = 0.0f;
                for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
                for (int j = 0; j < cols; ++j)
                    dr[j] += yr[j] * (gr[j] - dot);
            });
        };
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
    if (x.rank() < 1) throw op_error("layer_norm", "rank-0 input");
    const int cols = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != cols)
        throw mismatch("layer_norm", x.shape(), gamma.shape());
    if (beta.rank() != 1 || beta.dim(0) != cols)
        throw mismatch("layer_norm", x.shape(), beta.shape());
    const int64_t rows = x.numel() / cols;
    Tensor out = make_node(x.shape(), {x, gamma, beta});
    auto mean = std::make_shared<std::vector<float>>((size_t)rows);
    auto rstd = std::make_shared<std::vector<float>>((size_t)rows);
    kernels::layernorm_rows(x.data(), gamma.data(), beta.data(), eps,
                            out.data(), mean->data(), rstd->data(), (int)rows,
                            cols);
    if (out.requires_grad()) {
        auto xi = x.impl();
        auto gi = gamma.impl();
        auto bi = beta.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [xi, gi, bi, oi, mean, rstd, rows, cols]() {
            const float* g = oi->grad.data();
            const float* xv = xi->value.data();
            const float* gw = gi->value.data();
            if (xi->requires_grad) {
                xi->ensure_grad();
                float* d = xi->grad.data();
                kernels::parallel_for(rows, [&](int64_t r) {
                    const float mu = (*mean)[(size_t)r];
                    const float rs = (*rstd)[(size_t)r];
                    const float* xr = xv + r * cols;
                    const float* gr = g + r * cols;
                    float* dr = d + r * cols;
                    float s1 = 0.0f, s2 = 0.0f;
                    for (int j = 0; j < cols; ++j) {
                        const float gy = gr[j] * gw[j];
                        const float xh = (xr[j] - mu) * rs;
                        s1 += gy;
                        s2 += gy * xh;
                    }
                    s1 /= (float)cols;
                    s2 /= (float)cols;
                    for (int j = 0; j < cols; ++j) {
                        const float gy = gr[j] * gw[j];
                        const float xh = (xr[j] - mu) * rs;
                        dr[j] += rs * (gy - s1 - xh * s2);
                    }
                });
            }
            if (gi->requires_grad || bi->requires_grad) {
                if (gi->requires_grad) gi->ensure_grad();
                if (bi->requires_grad) bi->ensure_grad();
                for (int64_t r = 0; r < rows; ++r) {
                    const float mu = (*mean)[(size_t)r];
                    const float rs = (*rstd)[(size_t)r];
                    const float* xr = xv + r * cols;
                    const float* gr = g + r * cols;
                    for (int j = 0; j < cols; ++j) {
                        if (gi->requires_grad)
                            gi->grad[(size_t)j] += gr[j] * (xr[j] - mu) * rs;
                        if (bi->requires_grad) bi->grad[(size_t)j] += gr[j];
                    }
                }
            }
        };
    }
    return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2)
        throw op_error("embedding", "table must be rank-2, got " +
                                        shape_str(table.shape()));
    const int v = table.dim(0);
    const int d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            throw op_error("embedding", "token id " + std::to_string(id) +
                                            " outside vocabulary of size " +
                                            std::to_string(v));
    if (ids.empty()) throw op_error("embedding", "empty id list");
    Tensor out = make_node({(int)ids.size(), d}, {table});
    for (size_t t = 0; t < ids.size(); ++t)
        std::memcpy(out.data() + (int64_t)t * d,
                    table.data() + (int64_t)ids[t] * d,
                    sizeof(float) * (size_t)d);
    if (out.requires_grad()) {
        auto ti = table.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ti, oi, ids, d]() {
            ti->ensure_grad();
            const float* g = oi->grad.data();
            float* dst = ti->grad.data();
            for (size_t t = 0; t < ids.size(); ++t) {
                float* row = dst + (int64_t)ids[t] * d;
                const float* gr = g + (int64_t)t * d;
                for (int j = 0; j < d; ++j) row[j] += gr[j];
            }
        };
    }
    return out;
}

Tensor sum(const Tensor& a) {
    Tensor out = make_node(Shape{}, {a});
    const float* pa = a.data();
    float acc = 0.0f;
    for (int64_t i = 0; i < a.numel(); ++i) acc += pa[i];
    out.data()[0] = acc;
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi]() {
            ai->ensure_grad();
            const float g = oi->grad[0];
            float* d = ai->grad.data();
            kernels::parallel_for((int64_t)ai->value.size(),
                                  [&](int64_t i) { d[i] += g; });
        };
    }
    return out;
}

Tensor mean(const Tensor& a) {
    return mul_scalar(sum(a), 1.0f / (float)a.numel());
}

namespace {

template <class Acc>
Tensor axis_reduce(const char* name, const Tensor& a, int axis, bool keepdim,
                   Acc acc_fn, float (*grad_fn)(float v, float g, float n)) {
    check_axis(name, a, axis);
    const int n_axis = a.dim(axis);
    int64_t inner = 1;
    for (int d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    Shape os;
    for (int d = 0; d < a.rank(); ++d) {
        if (d == axis) {
            if (keepdim) os.push_back(1);
        } else {
            os.push_back(a.dim(d));
        }
    }
    Tensor out = make_node(os, {a});
    const float* pa = a.data();
    float* po = out.data();
    kernels::parallel_for(outer * inner, [&](int64_t oi_) {
        const int64_t o = oi_ / inner;
        const int64_t i = oi_ % inner;
        const float* base = pa + o * n_axis * inner + i;
        float acc = 0.0f;
        for (int k = 0; k < n_axis; ++k) acc += acc_fn(base[(int64_t)k * inner]);
        po[oi_] = acc;
    });
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi, n_axis, inner, outer, grad_fn]() {
            ai->ensure_grad();
            const float* g = oi->grad.data();
            const float* v = ai->value.data();
            float* d = ai->grad.data();
            kernels::parallel_for(outer * inner, [&](int64_t oi_) {
                const int64_t o = oi_ / inner;
                const int64_t i = oi_ % inner;
                const int64_t base = o * n_axis * inner + i;
                const float gv = g[oi_];
                for (int k = 0; k < n_axis; ++k) {
                    const int64_t idx = base + (int64_t)k * inner;
                    d[idx] += grad_fn(v[idx], gv, (float)n_axis);
                }
            });
        };
    }
    return out;
}

} // namespace

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
    return axis_reduce(
        "sum_axis", a, axis, keepdim, [](float v) { return v; },
        [](float, float g, float) { return g; });
}

Tensor mean_axis(const Tensor& a, int axis, bool keepdim) {
    check_axis("mean_axis", a, axis);
    return mul_scalar(sum_axis(a, axis, keepdim), 1.0f / (float)a.dim(axis));
}

Tensor squared_l2(const Tensor& a, int axis, bool keepdim) {
    return axis_reduce(
        "squared_l2", a, axis, keepdim, [](float v) { return v * v; },
        [](float v, float g, float) { return 2.0f * v * g; });
}

Tensor repeat_leading(const Tensor& a, int times) {
    if (times <= 0)
        throw op_error("repeat_leading", "times must be positive");
    Shape os;
    os.push_back(times);
    for (int d : a.shape()) os.push_back(d);
    Tensor out = make_node(os, {a});
    const int64_t n = a.numel();
    for (int t = 0; t < times; ++t)
        std::memcpy(out.data() + (int64_t)t * n, a.data(),
                    sizeof(float) * (size_t)n);
    if (out.requires_grad()) {
        auto ai = a.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [ai, oi, times, n]() {
            ai->ensure_grad();
            const float* g = oi->grad.data();
            float* d = ai->grad.data();
            for (int t = 0; t < times; ++t) {
                const float* gt = g + (int64_t)t * n;
                for (int64_t i = 0; i < n; ++i) d[i] += gt[i];
            }
        };
    }
    return out;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride_d, int stride_h, int stride_w) {
    if (x.rank() != 5)
        throw op_error("conv3d", "input must be (b, c, d, h, w), got " +
                                     shape_str(x.shape()));
    const int b = x.dim(0), ci = x.dim(1);
    const auto g = kernels::make_conv3d_geom(ci, w.dim(0), x.dim(2), x.dim(3),
                                             x.dim(4), stride_d, stride_h,
                                             stride_w);
    if (w.rank() != 2 || w.dim(1) != g.patch())
        throw op_error("conv3d", "weight shape " + shape_str(w.shape()) +
                                     " incompatible with input " +
                                     shape_str(x.shape()) + " (want [co, " +
                                     std::to_string(g.patch()) + "])");
    if (bias.rank() != 1 || bias.dim(0) != g.out_c)
        throw mismatch("conv3d", w.shape(), bias.shape());
    const int co = g.out_c;
    const int K = g.patch();
    const int P = g.out_voxels();
    Tensor out = make_node({b, co, g.out_d, g.out_h, g.out_w}, {x, w, bias});
    const int64_t in_sz = (int64_t)ci * g.in_d * g.in_h * g.in_w;
    const int64_t out_sz = (int64_t)co * P;
    std::vector<float> col((size_t)((int64_t)K * P));
    for (int nb = 0; nb < b; ++nb) {
        kernels::im2col3d(g, x.data() + nb * in_sz, col.data());
        float* ob = out.data() + nb * out_sz;
        kernels::gemm(w.data(), col.data(), ob, co, K, P, false);
        const float* bv = bias.data();
        kernels::parallel_for(co, [&](int64_t c) {
            float* row = ob + c * P;
            const float bc = bv[c];
            for (int p = 0; p < P; ++p) row[p] += bc;
        });
    }
    if (out.requires_grad()) {
        auto xi = x.impl();
        auto wi = w.impl();
        auto bi = bias.impl();
        TensorImpl* oi = out.impl().get();
        out.impl()->backward_fn = [xi, wi, bi, oi, g, b, co, K, P, in_sz,
                                   out_sz]() {
            std::vector<float> col((size_t)((int64_t)K * P));
            std::vector<float> scratch;
            const float* gout = oi->grad.data();
            if (wi->requires_grad) wi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            if (xi->requires_grad) xi->ensure_grad();
            for (int nb = 0; nb < b; ++nb) {
                const float* gb = gout + nb * out_sz;
                if (wi->requires_grad) {
                    kernels::im2col3d(g, xi->value.data() + nb * in_sz,
                                      col.data());
                    scratch.resize((size_t)((int64_t)P * K));
                    kernels::transpose(col.data(), scratch.data(), K, P);
                    kernels::gemm(gb, scratch.data(), wi->grad.data(), co, P,
                                  K, true);
                }
                if (bi->requires_grad) {
                    float* dbias = bi->grad.data();
                    for (int c = 0; c < co; ++c) {
                        const float* row = gb + (int64_t)c * P;
                        float acc = 0.0f;
                        for (int p = 0; p < P; ++p) acc += row[p];
                        dbias[c] += acc;
                    }
                }
                if (xi->requires_grad) {
                    scratch.resize((size_t)((int64_t)K * co));
                    kernels::transpose(wi->value.data(), scratch.data(), co,
                                       K);
                    kernels::gemm(scratch.data(), gb, col.data(), K, co, P,
                                  false);
                    kernels::col2im3d(g, col.data(),
                                      xi->grad.data() + nb * in_sz);
                }
            }
        };
    }
    return out;
}

} // namespace dvp::ops
