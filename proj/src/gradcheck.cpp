// SPDX-License-Identifier: Apache-2.0
#include "dvp/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace dvp {

float finite_difference_check(const std::function<Tensor(Tensor&)>& f,
                              Tensor point, float step) {
    if (step <= 0.0f)
        throw std::invalid_argument("finite_difference_check: step must be positive");
    point.set_requires_grad(true);
    point.ensure_grad();
    point.zero_grad();
    Tensor loss = f(point);
    if (loss.numel() != 1)
        throw std::runtime_error(
            "finite_difference_check: f must return a scalar");
    backward(loss);
    std::vector<float> analytic(point.grad_vec());

    float worst = 0.0f;
    {
        NoGradGuard ng;
        float* v = point.data();
        for (int64_t i = 0; i < point.numel(); ++i) {
            const float saved = v[i];
            v[i] = saved + step;
            const float up = f(point).item();
            v[i] = saved - step;
            const float dn = f(point).item();
            v[i] = saved;
            const float fd = (up - dn) / (2.0f * step);
            // absolute near zero, relative for large gradients; a pure
            // relative error would amplify float FD noise on tiny grads
            const float err = std::fabs(analytic[(size_t)i] - fd) /
                              (std::fabs(analytic[(size_t)i]) + std::fabs(fd) + 1.0f);
            if (err > worst) worst = err;
        }
    }
    return worst;
}

} // namespace dvp
