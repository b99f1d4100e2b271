// SPDX-License-Identifier: Apache-2.0
#include "dvp/kernels.hpp"

#include <cstdlib>

namespace dvp::kernels {

static int resolve_threads() {
    int n = 1;
#if defined(_OPENMP)
    n = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("DVP_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
        if (cap >= 1 && n < 1) n = cap;
    }
    return n < 1 ? 1 : n;
}

static int g_threads = -1;

int threads() {
    if (g_threads < 0) g_threads = resolve_threads();
    return g_threads;
}

void set_threads(int n) { g_threads = n < 1 ? 1 : n; }

bool parallel() { return threads() > 1; }

void gemm(const float* a, const float* b, float* c, int m, int k, int n,
          bool accumulate) {
    if (parallel())
        omp::gemm(a, b, c, m, k, n, accumulate);
    else
        serial::gemm(a, b, c, m, k, n, accumulate);
}

void transpose(const float* src, float* dst, int rows, int cols) {
    if (parallel())
        omp::transpose(src, dst, rows, cols);
    else
        serial::transpose(src, dst, rows, cols);
}

void softmax_rows(const float* x, float* y, int rows, int cols) {
    if (parallel())
        omp::softmax_rows(x, y, rows, cols);
    else
        serial::softmax_rows(x, y, rows, cols);
}

void layernorm_rows(const float* x, const float* gamma, const float* beta,
                    float eps, float* y, float* mean, float* rstd,
                    int rows, int cols) {
    if (parallel())
        omp::layernorm_rows(x, gamma, beta, eps, y, mean, rstd, rows, cols);
    else
        serial::layernorm_rows(x, gamma, beta, eps, y, mean, rstd, rows, cols);
}

void im2col3d(const Conv3dGeom& g, const float* x, float* col) {
    if (parallel())
        omp::im2col3d(g, x, col);
    else
        serial::im2col3d(g, x, col);
}

void col2im3d(const Conv3dGeom& g, const float* col, float* x_grad) {
    if (parallel())
        omp::col2im3d(g, col, x_grad);
    else
        serial::col2im3d(g, col, x_grad);
}

} // namespace dvp::kernels
