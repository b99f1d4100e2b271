// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#if defined(_OPENMP)
#include <omp.h>
#endif

// Numeric inner loops. Every kernel exists twice: a plain serial reference
// (kernels::serial) and an OpenMP variant (kernels::omp). The OpenMP code
// only distributes *independent output elements* across threads; each
// element is computed with the exact arithmetic order of the serial code,
// so the two variants produce bit-identical results for any thread count.
// That property is load-bearing: training logs, checkpoints and metric
// files are required to be bytewise reproducible.
namespace dvp::kernels {

// worker-thread cap; initialised from the DVP_THREADS env var on first use
int threads();
void set_threads(int n);
bool parallel();

struct Conv3dGeom {
    int in_c, out_c;
    int in_d, in_h, in_w;
    int out_d, out_h, out_w;
    int stride_d, stride_h, stride_w;
    // kernel is fixed 3x3x3 with padding 1
    int patch() const { return in_c * 27; }
    int out_voxels() const { return out_d * out_h * out_w; }
};

Conv3dGeom make_conv3d_geom(int in_c, int out_c, int d, int h, int w,
                            int sd, int sh, int sw);

namespace serial {
// C(m x n) = A(m x k) * B(k x n); accumulate adds into C
void gemm(const float* a, const float* b, float* c, int m, int k, int n,
          bool accumulate);
void transpose(const float* src, float* dst, int rows, int cols);
void softmax_rows(const float* x, float* y, int rows, int cols);
void layernorm_rows(const float* x, const float* gamma, const float* beta,
                    float eps, float* y, float* mean, float* rstd,
                    int rows, int cols);
void im2col3d(const Conv3dGeom& g, const float* x, float* col);
void col2im3d(const Conv3dGeom& g, const float* col, float* x_grad);
} // namespace serial

namespace omp {
void gemm(const float* a, const float* b, float* c, int m, int k, int n,
          bool accumulate);
void transpose(const float* src, float* dst, int rows, int cols);
void softmax_rows(const float* x, float* y, int rows, int cols);
void layernorm_rows(const float* x, const float* gamma, const float* beta,
                    float eps, float* y, float* mean, float* rstd,
                    int rows, int cols);
void im2col3d(const Conv3dGeom& g, const float* x, float* col);
void col2im3d(const Conv3dGeom& g, const float* col, float* x_grad);
} // namespace omp

// dispatching entry points used by the ops layer
void gemm(const float* a, const float* b, float* c, int m, int k, int n,
          bool accumulate = false);
void transpose(const float* src, float* dst, int rows, int cols);
void softmax_rows(const float* x, float* y, int rows, int cols);
void layernorm_rows(const float* x, const float* gamma, const float* beta,
                    float eps, float* y, float* mean, float* rstd,
                    int rows, int cols);
void im2col3d(const Conv3dGeom& g, const float* x, float* col);
void col2im3d(const Conv3dGeom& g, const float* col, float* x_grad);

template <class F>
inline void parallel_for(int64_t n, F&& f) {
#if defined(_OPENMP)
    if (parallel() && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads())
        for (int64_t i = 0; i < n; ++i) f(i);
        return;
    }
#endif
    for (int64_t i = 0; i < n; ++i) f(i);
}

} // namespace dvp::kernels
