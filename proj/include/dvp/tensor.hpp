// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dvp/rng.hpp"

namespace dvp {

// Row-major shape; rank-0 (empty) means scalar with one element.
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

struct TensorImpl {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad; // empty until ensure_grad()
    bool requires_grad = false;
    uint64_t stamp = 0; // creation order; parents always precede children
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void()> backward_fn;

    void ensure_grad();
};

// Value-semantics handle on a graph node. All arithmetic lives in
// dvp::ops; this type only owns storage and the backward machinery.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, float v, bool requires_grad = false);
    static Tensor from_data(const Shape& s, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor randn(const Shape& s, Rng& rng, float sd,
                        bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return (int)impl_->shape.size(); }
    int dim(int i) const { return impl_->shape[(size_t)i]; }
    int64_t numel() const { return (int64_t)impl_->value.size(); }

    float* data() { return impl_->value.data(); }
    const float* data() const { return impl_->value.data(); }
    std::vector<float>& values() { return impl_->value; }
    const std::vector<float>& values() const { return impl_->value; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg);
    void ensure_grad() { impl_->ensure_grad(); }
    void zero_grad();
    bool has_grad() const { return !impl_->grad.empty(); }
    float* grad() { return impl_->grad.data(); }
    const float* grad() const { return impl_->grad.data(); }
    std::vector<float>& grad_vec();

    // scalar accessor; errors unless numel == 1
    float item() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Runs reverse-mode accumulation from a scalar loss. Visits recorded
// nodes exactly once in reverse execution order; grads add into any
// previously accumulated values (the trainer owns zeroing).
void backward(const Tensor& loss);

bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

// ops-layer helper: allocate a result node wired to its parents.
// requires_grad is inherited when recording is enabled.
Tensor make_node(Shape shape, std::vector<Tensor> parents);

} // namespace dvp
