// SPDX-License-Identifier: Apache-2.0
#include "dvp/kernels.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dvp::kernels {

Conv3dGeom make_conv3d_geom(int in_c, int out_c, int d, int h, int w,
                            int sd, int sh, int sw) {
    auto out_extent = [](int n, int s) { return (n + 2 - 3) / s + 1; };
    Conv3dGeom g;
    g.in_c = in_c;
    g.out_c = out_c;
    g.in_d = d;
    g.in_h = h;
    g.in_w = w;
    g.out_d = out_extent(d, sd);
    g.out_h = out_extent(h, sh);
    g.out_w = out_extent(w, sw);
    g.stride_d = sd;
    g.stride_h = sh;
    g.stride_w = sw;
    if (g.out_d <= 0 || g.out_h <= 0 || g.out_w <= 0)
        throw std::runtime_error("conv3d: input extent too small for stride");
    return g;
}

namespace serial {

void gemm(const float* a, const float* b, float* c, int m, int k, int n,
          bool accumulate) {
    for (int i = 0; i < m; ++i) {
        float* ci = c + (int64_t)i * n;
        if (!accumulate) std::memset(ci, 0, sizeof(float) * n);
        const float* ai = a + (int64_t)i * k;
        for (int kk = 0; kk < k; ++kk) {
            const float av = ai[kk];
            const float* bk = b + (int64_t)kk * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

void transpose(const float* src, float* dst, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            dst[(int64_t)j * rows + i] = src[(int64_t)i * cols + j];
}

void softmax_rows(const float* x, float* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + (int64_t)r * cols;
        float* yr = y + (int64_t)r * cols;
        float mx = xr[0];
        for (int j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
        float sum = 0.0f;
        for (int j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        const float inv = 1.0f / sum;
        for (int j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

void layernorm_rows(const float* x, const float* gamma, const float* beta,
                    float eps, float* y, float* mean, float* rstd,
                    int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + (int64_t)r * cols;
        float* yr = y + (int64_t)r * cols;
        float mu = 0.0f;
        for (int j = 0; j < cols; ++j) mu += xr[j];
        mu /= (float)cols;
        float var = 0.0f;
        for (int j = 0; j < cols; ++j) {
            const float d = xr[j] - mu;
            var += d * d;
        }
        var /= (float)cols;
        const float rs = 1.0f / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (int j = 0; j < cols; ++j)
            yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
    }
}

// col layout: (in_c*27) rows x out_voxels cols, row-major. Row index is
// ci*27 + kz*9 + ky*3 + kx; out-of-bounds taps read as zero (padding 1).
void im2col3d(const Conv3dGeom& g, const float* x, float* col) {
    const int P = g.out_voxels();
    const int64_t in_hw = (int64_t)g.in_h * g.in_w;
    for (int ci = 0; ci < g.in_c; ++ci) {
        const float* xc = x + (int64_t)ci * g.in_d * in_hw;
        for (int kz = 0; kz < 3; ++kz)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    float* row =
                        col + (int64_t)(ci * 27 + kz * 9 + ky * 3 + kx) * P;
                    int p = 0;
                    for (int od = 0; od < g.out_d; ++od) {
                        const int iz = od * g.stride_d + kz - 1;
                        for (int oh = 0; oh < g.out_h; ++oh) {
                            const int iy = oh * g.stride_h + ky - 1;
                            for (int ow = 0; ow < g.out_w; ++ow, ++p) {
                                const int ix = ow * g.stride_w + kx - 1;
                                const bool in = iz >= 0 && iz < g.in_d &&
                                                iy >= 0 && iy < g.in_h &&
                                                ix >= 0 && ix < g.in_w;
                                row[p] = in ? xc[(int64_t)iz * in_hw +
                                               (int64_t)iy * g.in_w + ix]
                                            : 0.0f;
                            }
                        }
                    }
                }
    }
}

void col2im3d(const Conv3dGeom& g, const float* col, float* x_grad) {
    const int P = g.out_voxels();
    const int64_t in_hw = (int64_t)g.in_h * g.in_w;
    for (int ci = 0; ci < g.in_c; ++ci) {
        float* xc = x_grad + (int64_t)ci * g.in_d * in_hw;
        for (int kz = 0; kz < 3; ++kz)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const float* row =
                        col + (int64_t)(ci * 27 + kz * 9 + ky * 3 + kx) * P;
                    int p = 0;
                    for (int od = 0; od < g.out_d; ++od) {
                        const int iz = od * g.stride_d + kz - 1;
                        for (int oh = 0; oh < g.out_h; ++oh) {
                            const int iy = oh * g.stride_h + ky - 1;
                            for (int ow = 0; ow < g.out_w; ++ow, ++p) {
                                const int ix = ow * g.stride_w + kx - 1;
                                if (iz >= 0 && iz < g.in_d && iy >= 0 &&
                                    iy < g.in_h && ix >= 0 && ix < g.in_w)
                                    xc[(int64_t)iz * in_hw +
                                       (int64_t)iy * g.in_w + ix] += row[p];
                            }
                        }
                    }
                }
    }
}

} // namespace serial
} // namespace dvp::kernels
