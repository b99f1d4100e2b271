// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace dvp::stats {

// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction,
// accurate to ~1e-10.
double incomplete_beta(double a, double b, double x);

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double p = 1.0; // two-sided
};

// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
// freedom. Requires two or more values per sample and nonzero variance in
// at least one ("degenerate samples" otherwise).
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

} // namespace dvp::stats
