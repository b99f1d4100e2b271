// SPDX-License-Identifier: Apache-2.0
// Serial vs OpenMP kernel comparison at model-relevant shapes. Run with
// DVP_THREADS=<n> to pin the worker count of the omp variants.
#include <cstdint>
#include <vector>

#include <benchmark/benchmark.h>

#include "dvp/kernels.hpp"
#include "dvp/rng.hpp"

namespace {

using dvp::Rng;
namespace kn = dvp::kernels;

std::vector<float> rand_vec(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v((size_t)n);
    for (float& x : v) x = rng.normal();
    return v;
}

// gemm shapes: decoder projection (T x d_llm * d_llm x d_llm), conv-as-gemm
// (out_c x patch * patch x voxels)
void bm_gemm_serial(benchmark::State& state) {
    const int m = (int)state.range(0), k = (int)state.range(1), n = (int)state.range(2);
    auto a = rand_vec((int64_t)m * k, 11), b = rand_vec((int64_t)k * n, 12);
    std::vector<float> c((size_t)m * n);
    for (auto _ : state) {
        kn::serial::gemm(a.data(), b.data(), c.data(), m, k, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)m * k * n);
}

void bm_gemm_omp(benchmark::State& state) {
    const int m = (int)state.range(0), k = (int)state.range(1), n = (int)state.range(2);
    auto a = rand_vec((int64_t)m * k, 11), b = rand_vec((int64_t)k * n, 12);
    std::vector<float> c((size_t)m * n);
    for (auto _ : state) {
        kn::omp::gemm(a.data(), b.data(), c.data(), m, k, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)m * k * n);
}

void bm_softmax_serial(benchmark::State& state) {
    const int rows = (int)state.range(0), cols = (int)state.range(1);
    auto x = rand_vec((int64_t)rows * cols, 21);
    std::vector<float> y((size_t)rows * cols);
    for (auto _ : state) {
        kn::serial::softmax_rows(x.data(), y.data(), rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)rows * cols);
}

void bm_softmax_omp(benchmark::State& state) {
    const int rows = (int)state.range(0), cols = (int)state.range(1);
    auto x = rand_vec((int64_t)rows * cols, 21);
    std::vector<float> y((size_t)rows * cols);
    for (auto _ : state) {
        kn::omp::softmax_rows(x.data(), y.data(), rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)rows * cols);
}

void bm_im2col_serial(benchmark::State& state) {
    // encoder stage 1 on a 16x32x32 volume
    kn::Conv3dGeom g = kn::make_conv3d_geom(1, 32, 16, 32, 32, 2, 2, 2);
    auto x = rand_vec((int64_t)g.in_c * g.in_d * g.in_h * g.in_w, 31);
    std::vector<float> col((size_t)g.patch() * g.out_voxels());
    for (auto _ : state) {
        kn::serial::im2col3d(g, x.data(), col.data());
        benchmark::DoNotOptimize(col.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)col.size());
}

void bm_im2col_omp(benchmark::State& state) {
    kn::Conv3dGeom g = kn::make_conv3d_geom(1, 32, 16, 32, 32, 2, 2, 2);
    auto x = rand_vec((int64_t)g.in_c * g.in_d * g.in_h * g.in_w, 31);
    std::vector<float> col((size_t)g.patch() * g.out_voxels());
    for (auto _ : state) {
        kn::omp::im2col3d(g, x.data(), col.data());
        benchmark::DoNotOptimize(col.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)col.size());
}

void bm_layernorm_serial(benchmark::State& state) {
    const int rows = (int)state.range(0), cols = (int)state.range(1);
    auto x = rand_vec((int64_t)rows * cols, 41);
    auto gamma = rand_vec(cols, 42), beta = rand_vec(cols, 43);
    std::vector<float> y((size_t)rows * cols), mean((size_t)rows), rstd((size_t)rows);
    for (auto _ : state) {
        kn::serial::layernorm_rows(x.data(), gamma.data(), beta.data(), 1e-5f,
                                   y.data(), mean.data(), rstd.data(), rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)rows * cols);
}

void bm_layernorm_omp(benchmark::State& state) {
    const int rows = (int)state.range(0), cols = (int)state.range(1);
    auto x = rand_vec((int64_t)rows * cols, 41);
    auto gamma = rand_vec(cols, 42), beta = rand_vec(cols, 43);
    std::vector<float> y((size_t)rows * cols), mean((size_t)rows), rstd((size_t)rows);
    for (auto _ : state) {
        kn::omp::layernorm_rows(x.data(), gamma.data(), beta.data(), 1e-5f,
                                y.data(), mean.data(), rstd.data(), rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t)rows * cols);
}

BENCHMARK(bm_gemm_serial)->Args({256, 64, 64})->Args({128, 27, 2048})->Args({512, 512, 64});
BENCHMARK(bm_gemm_omp)->Args({256, 64, 64})->Args({128, 27, 2048})->Args({512, 512, 64});
BENCHMARK(bm_softmax_serial)->Args({1024, 256})->Args({128, 1024});
BENCHMARK(bm_softmax_omp)->Args({1024, 256})->Args({128, 1024});
BENCHMARK(bm_layernorm_serial)->Args({1024, 64})->Args({256, 512});
BENCHMARK(bm_layernorm_omp)->Args({1024, 64})->Args({256, 512});
BENCHMARK(bm_im2col_serial);
BENCHMARK(bm_im2col_omp);

} // namespace

BENCHMARK_MAIN();
