// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dvp/checkpoint.hpp"
#include "dvp/tensor.hpp"

namespace dvp {

struct AdamConfig {
    float lr = 5e-5f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float clip_norm = 1.0f; // <= 0 disables clipping
};

// Single-tensor bias-corrected update, exposed so tests can pin the
// arithmetic: m/v are updated in place, value -= lr * m_hat/(sqrt(v_hat)+eps).
void adam_update(std::vector<float>& value, const std::vector<float>& grad,
                 std::vector<float>& m, std::vector<float>& v, int64_t t,
                 const AdamConfig& cfg);

// Adam over the trainable subset of a parameter map, with global-norm
// gradient clipping applied across all tracked tensors before the update.
class Adam {
public:
    Adam(const ParamMap& params, const AdamConfig& cfg);

    void zero_grad();
    // Returns the pre-clip global gradient norm.
    float step();
    int64_t steps_taken() const { return t_; }
    size_t tracked() const { return params_.size(); }

    // moment state as checkpoint tensors ("opt.t", "opt.m.<i>", "opt.v.<i>")
    ParamMap export_state() const;
    void import_state(const ParamMap& state);

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

} // namespace dvp
