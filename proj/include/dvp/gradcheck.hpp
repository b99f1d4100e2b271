// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "dvp/tensor.hpp"

namespace dvp {

// Compares analytic gradients against central finite differences.
// f must map the (mutable) point tensor to a scalar loss; it is invoked
// once with grad recording on and then twice per coordinate with the
// coordinate nudged by +/-step and recording off.
// Returns max_i |analytic_i - fd_i| / (|analytic_i| + |fd_i| + 1).
float finite_difference_check(const std::function<Tensor(Tensor&)>& f,
                              Tensor point, float step);

} // namespace dvp
