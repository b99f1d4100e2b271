// SPDX-License-Identifier: Apache-2.0
#include "dvp/stats.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dvp::stats {

// Lentz's algorithm for the continued fraction of I_x(a,b)
static double betacf(double a, double b, double x) {
    constexpr double eps = 1e-12, tiny = 1e-300;
    constexpr int max_iter = 500;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

double incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0)
        throw std::runtime_error("incomplete beta: parameters must be positive");
    if (x < 0.0 || x > 1.0)
        throw std::runtime_error("incomplete beta: x=" + std::to_string(x) + " outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

static void sample_stats(const std::vector<double>& v, double& mean, double& var) {
    const size_t n = v.size();
    double s = 0.0;
    for (double x : v) s += x;
    mean = s / (double)n;
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    var = sq / (double)(n - 1);
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::runtime_error("welch: need at least two values per sample, got " +
                                 std::to_string(a.size()) + " and " + std::to_string(b.size()));
    double ma, va, mb, vb;
    sample_stats(a, ma, va);
    sample_stats(b, mb, vb);
    if (va == 0.0 && vb == 0.0) throw std::runtime_error("welch: degenerate samples");

    const double sa = va / (double)a.size(), sb = vb / (double)b.size();
    WelchResult r;
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.dof = (sa + sb) * (sa + sb) /
            (sa * sa / (double)(a.size() - 1) + sb * sb / (double)(b.size() - 1));
    // two-sided p: P(|T| > |t|) = I_x(dof/2, 1/2), x = dof/(dof + t^2)
    const double x = r.dof / (r.dof + r.t * r.t);
    r.p = incomplete_beta(r.dof / 2.0, 0.5, x);
    return r;
}

} // namespace dvp::stats
