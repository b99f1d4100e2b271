// SPDX-License-Identifier: Apache-2.0
#include "dvp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace dvp {

static std::atomic<uint64_t> g_stamp{1};
static thread_local bool g_grad_enabled = true;

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

void TensorImpl::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
}

static std::shared_ptr<TensorImpl> alloc_impl(const Shape& s) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = s;
    for (int d : s)
        if (d <= 0)
            throw std::runtime_error("tensor: nonpositive dimension in " +
                                     shape_str(s));
    impl->value.assign((size_t)shape_numel(s), 0.0f);
    impl->stamp = g_stamp.fetch_add(1, std::memory_order_relaxed);
    return impl;
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
    Tensor t(alloc_impl(s));
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor Tensor::full(const Shape& s, float v, bool requires_grad) {
    Tensor t(alloc_impl(s));
    std::fill(t.values().begin(), t.values().end(), v);
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor Tensor::from_data(const Shape& s, std::vector<float> data,
                         bool requires_grad) {
    if ((int64_t)data.size() != shape_numel(s))
        throw std::runtime_error("tensor: data size " +
                                 std::to_string(data.size()) +
                                 " does not match shape " + shape_str(s));
    Tensor t(alloc_impl(s));
    t.impl()->value = std::move(data);
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor Tensor::randn(const Shape& s, Rng& rng, float sd, bool requires_grad) {
    Tensor t(alloc_impl(s));
    for (auto& v : t.values()) v = rng.normal(0.0f, sd);
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor& Tensor::set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty())
        std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

std::vector<float>& Tensor::grad_vec() {
    impl_->ensure_grad();
    return impl_->grad;
}

float Tensor::item() const {
    if (numel() != 1)
        throw std::runtime_error("tensor: item() on non-scalar shape " +
                                 shape_str(shape()));
    return impl_->value[0];
}

Tensor make_node(Shape shape, std::vector<Tensor> parents) {
    Tensor t(alloc_impl(shape));
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) rg = rg || p.requires_grad();
    }
    if (rg) {
        t.impl()->requires_grad = true;
        auto& ps = t.impl()->parents;
        ps.reserve(parents.size());
        for (auto& p : parents) ps.push_back(p.impl());
    }
    return t;
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw std::runtime_error("backward: expected scalar loss, got shape " +
                                 shape_str(loss.shape()));
    if (!loss.requires_grad())
        throw std::runtime_error(
            "backward: loss does not require grad (no recorded graph)");

    // reachable subgraph, then reverse execution order by creation stamp
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<TensorImpl*> stack{loss.impl().get()};
    seen.insert(loss.impl().get());
    while (!stack.empty()) {
        TensorImpl* node = stack.back();
        stack.pop_back();
        order.push_back(node);
        for (const auto& p : node->parents)
            if (p->requires_grad && seen.insert(p.get()).second)
                stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const TensorImpl* a, const TensorImpl* b) {
                  return a->stamp > b->stamp;
              });

    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0f;
    for (TensorImpl* node : order)
        if (node->backward_fn) node->backward_fn();
}

} // namespace dvp
