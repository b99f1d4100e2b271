// SPDX-License-Identifier: Apache-2.0
#include "dvp/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dvp/optim.hpp"

namespace dvp {

float noisy_or_pool(const float* probs, size_t n) {
    if (n == 0) throw std::runtime_error("noisy-or pool: empty input");
    double log1m = 0.0;
    for (size_t i = 0; i < n; ++i) {
        float p = probs[i];
        if (p < 0.0f || p > 1.0f)
            throw std::runtime_error("noisy-or pool: probability out of [0,1]: " +
                                     std::to_string(p));
        p = std::min(p, 1.0f - 1e-7f);
        log1m += std::log(1.0 - static_cast<double>(p));
    }
    return static_cast<float>(1.0 - std::exp(log1m));
}

Classifier::Classifier(int s_, int h_, int w_, int c1, int c2, uint64_t seed)
    : s(s_), h(h_), w(w_) {
    Rng rng(mix64(seed, 0x636c7366)); // "clsf"
    conv1 = Conv3dLayer(1, c1, 2, 2, 2, rng);
    conv2 = Conv3dLayer(c1, c2, 2, 2, 2, rng);
    conv3 = Conv3dLayer(c2, kNumClasses, 1, 2, 2, rng);
}

Tensor Classifier::voxel_logits(const Tensor& volume) const {
    if (volume.rank() != 5 || volume.dim(1) != 1)
        throw std::runtime_error("classifier: expected (b,1,s,h,w) volume, got " +
                                 shape_str(volume.shape()));
    Tensor x = ops::relu(conv1.forward(volume));
    x = ops::relu(conv2.forward(x));
    x = conv3.forward(x); // (b, K, gz, gy, gx), raw per-cell logits
    const int bsz = x.dim(0);
    const int cells = x.dim(2) * x.dim(3) * x.dim(4);
    return ops::transpose(ops::reshape(x, {bsz, kNumClasses, cells}), 1, 2);
}

Tensor Classifier::pooled_log1m(const Tensor& vox_logits) const {
    if (vox_logits.rank() != 3 || vox_logits.dim(2) != kNumClasses)
        throw std::runtime_error("classifier: expected (b,cells,K) logits, got " +
                                 shape_str(vox_logits.shape()));
    Tensor p = ops::clamp_max(ops::sigmoid(vox_logits), 1.0f - 1e-7f);
    return ops::sum_axis(ops::log(ops::rsub_scalar(1.0f, p)), 1); // (b, K)
}

Tensor Classifier::pooled_probs(const Tensor& vox_logits) const {
    return ops::rsub_scalar(1.0f, ops::exp(pooled_log1m(vox_logits)));
}

std::array<float, kNumClasses> Classifier::predict(const std::vector<float>& volume) const {
    if ((int)volume.size() != s * h * w)
        throw std::runtime_error("classifier: volume has " + std::to_string(volume.size()) +
                                 " voxels, expected " + std::to_string(s * h * w));
    NoGradGuard ng;
    Tensor vol = Tensor::from_data({1, 1, s, h, w}, volume);
    Tensor probs = pooled_probs(voxel_logits(vol));
    std::array<float, kNumClasses> out{};
    std::copy_n(probs.values().begin(), kNumClasses, out.begin());
    return out;
}

ParamMap Classifier::params() const {
    ParamMap out;
    conv1.params("cls.conv1", out);
    conv2.params("cls.conv2", out);
    conv3.params("cls.conv3", out);
    return out;
}

void Classifier::seal() {
    sealed = true;
    seal_checksum_ = checksum(params());
}

std::string Classifier::weight_checksum() const {
    return checksum(params());
}

void Classifier::verify_seal() const {
    if (!sealed) throw std::runtime_error("classifier: not sealed");
    if (weight_checksum() != seal_checksum_)
        throw std::runtime_error("classifier: sealed weights changed (checksum " +
                                 weight_checksum() + " != " + seal_checksum_ + ")");
}

ClassifierTrainStats train_classifier(Classifier& cls, const Dataset& data,
                                      const ClassifierTrainConfig& cfg) {
    if (cls.sealed) throw std::runtime_error("classifier: update attempted after seal");
    std::vector<size_t> train_idx;
    for (size_t i = 0; i < data.cases.size(); ++i)
        if (data.cases[i].split == "train") train_idx.push_back(i);
    if (train_idx.empty()) throw std::runtime_error("classifier: no train cases");

    Adam opt(cls.params(), {cfg.lr, 0.9f, 0.999f, 1e-8f, 1.0f});
    Rng shuffle_rng(mix64(cfg.seed, 0x73687566)); // "shuf"
    ClassifierTrainStats stats;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order = train_idx;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int((uint64_t)i)]);
        double epoch_loss = 0.0;
        for (size_t idx : order) {
            const CaseRecord& rec = data.cases[idx];
            if (rec.split != "train")
                throw std::runtime_error("classifier: non-train case " + rec.id +
                                         " reached the training loop");
            opt.zero_grad();
            Tensor vol = Tensor::from_data({1, 1, cls.s, cls.h, cls.w}, rec.volume);
            Tensor s = cls.pooled_log1m(cls.voxel_logits(vol)); // log(1 - P)
            Tensor p = ops::rsub_scalar(1.0f, ops::exp(s));
            std::vector<float> yv(rec.labels.begin(), rec.labels.end());
            Tensor y = [&] {
                NoGradGuard ng;
                return Tensor::from_data({1, kNumClasses}, yv);
            }();
            // y*log P + (1-y)*log(1-P); the second term reuses the exact
            // log-space pool output instead of log(1-P) recomputed from P.
            Tensor term = ops::add(ops::mul(y, ops::log(ops::clamp_min(p, 1e-12f))),
                                   ops::mul(ops::rsub_scalar(1.0f, y), s));
            Tensor loss = ops::neg(ops::mean(term));
            backward(loss);
            opt.step();
            epoch_loss += loss.item();
            ++stats.steps;
        }
        epoch_loss /= static_cast<double>(order.size());
        if (epoch == 0) stats.first_epoch_loss = static_cast<float>(epoch_loss);
        stats.last_epoch_loss = static_cast<float>(epoch_loss);
    }
    return stats;
}

void save_classifier(const std::string& path, const Classifier& cls) {
    save_checkpoint(path, cls.params());
}

Classifier load_classifier(const std::string& path, int s, int h, int w, int c1, int c2,
                           bool sealed) {
    Classifier cls(s, h, w, c1, c2, /*seed=*/0);
    ParamMap params = cls.params();
    load_checkpoint_into(path, params);
    if (sealed) cls.seal();
    return cls;
}

} // namespace dvp
