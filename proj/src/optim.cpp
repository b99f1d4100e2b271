// SPDX-License-Identifier: Apache-2.0
#include "dvp/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dvp {

void adam_update(std::vector<float>& value, const std::vector<float>& grad,
                 std::vector<float>& m, std::vector<float>& v, int64_t t,
                 const AdamConfig& cfg) {
    if (value.size() != grad.size() || value.size() != m.size() || value.size() != v.size())
        throw std::runtime_error("adam: state size mismatch");
    if (t < 1) throw std::runtime_error("adam: step index must be >= 1");
    const float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(t));
    for (size_t i = 0; i < value.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * grad[i] * grad[i];
        const float m_hat = m[i] / bc1;
        const float v_hat = v[i] / bc2;
        value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

Adam::Adam(const ParamMap& params, const AdamConfig& cfg) : cfg_(cfg) {
    for (const auto& [name, t] : params) {
        (void)name;
        if (!t.requires_grad()) continue;
        params_.push_back(t);
        m_.emplace_back(t.numel(), 0.0f);
        v_.emplace_back(t.numel(), 0.0f);
    }
    if (params_.empty()) throw std::runtime_error("adam: no trainable parameters");
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

float Adam::step() {
    ++t_;
    // Global norm in double; missing grads count as zero.
    double sq = 0.0;
    for (auto& p : params_) {
        if (!p.has_grad()) continue;
        for (float g : p.grad_vec()) sq += static_cast<double>(g) * g;
    }
    const float norm = static_cast<float>(std::sqrt(sq));
    float scale = 1.0f;
    if (cfg_.clip_norm > 0.0f && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

    for (size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        p.ensure_grad();
        if (scale != 1.0f)
            for (auto& g : p.grad_vec()) g *= scale;
        adam_update(p.values(), p.grad_vec(), m_[k], v_[k], t_, cfg_);
    }
    return norm;
}

static std::string state_name(const char* kind, size_t i) {
    return std::string("opt.") + kind + "." + std::to_string(i);
}

ParamMap Adam::export_state() const {
    ParamMap out;
    out.emplace_back("opt.t", Tensor::from_data({1}, {(float)t_}));
    for (size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back(state_name("m", i), Tensor::from_data({(int)m_[i].size()}, m_[i]));
        out.emplace_back(state_name("v", i), Tensor::from_data({(int)v_[i].size()}, v_[i]));
    }
    return out;
}

void Adam::import_state(const ParamMap& state) {
    if (state.size() != 1 + 2 * params_.size())
        throw std::runtime_error("adam: state has " + std::to_string(state.size()) +
                                 " tensors, expected " + std::to_string(1 + 2 * params_.size()));
    for (const auto& [name, t] : state) {
        if (name == "opt.t") {
            t_ = (int64_t)t.data()[0];
            continue;
        }
        const bool is_m = name.rfind("opt.m.", 0) == 0;
        const bool is_v = name.rfind("opt.v.", 0) == 0;
        if (!is_m && !is_v) throw std::runtime_error("adam: unknown state tensor " + name);
        const size_t i = (size_t)std::stoull(name.substr(6));
        auto& dst = is_m ? m_ : v_;
        if (i >= dst.size() || dst[i].size() != t.values().size())
            throw std::runtime_error("adam: state tensor " + name + " does not fit");
        dst[i] = t.values();
    }
}

} // namespace dvp
