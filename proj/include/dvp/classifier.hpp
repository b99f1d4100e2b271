// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dvp/grammar.hpp"
#include "dvp/nn.hpp"
#include "dvp/synth.hpp"

namespace dvp {

// Noisy-OR over per-cell probabilities: 1 - prod_i (1 - p_i), computed in
// log space with p clamped to 1 - 1e-7.
float noisy_or_pool(const float* probs, size_t n);

// Small conv net scoring each cell of a coarse grid for each finding class,
// pooled per class with noisy-OR. Trained once on the train split, then
// sealed; its anchor probabilities condition the report generator, which
// must never update it.
struct Classifier {
    Conv3dLayer conv1, conv2, conv3;
    int s = 0, h = 0, w = 0;
    bool sealed = false;

    Classifier() = default;
    Classifier(int s, int h, int w, int c1, int c2, uint64_t seed);

    Tensor voxel_logits(const Tensor& volume) const;     // (b, cells, K)
    Tensor pooled_log1m(const Tensor& vox_logits) const; // (b, K): log(1 - P)
    Tensor pooled_probs(const Tensor& vox_logits) const; // (b, K)
    std::array<float, kNumClasses> predict(const std::vector<float>& volume) const;

    ParamMap params() const; // names carry the "cls." prefix
    void seal();
    std::string weight_checksum() const;
    // Throws if the sealed weights drifted from the seal-time checksum.
    void verify_seal() const;

private:
    std::string seal_checksum_;
};

struct ClassifierTrainConfig {
    int c1 = 16, c2 = 32;
    int epochs = 2;
    float lr = 1e-3f;
    uint64_t seed = 11;
};

struct ClassifierTrainStats {
    int64_t steps = 0;
    float first_epoch_loss = 0.0f;
    float last_epoch_loss = 0.0f;
};

// Trains on the train split only; any case from another split aborts.
// Throws if the classifier is already sealed.
ClassifierTrainStats train_classifier(Classifier& cls, const Dataset& data,
                                      const ClassifierTrainConfig& cfg);

void save_classifier(const std::string& path, const Classifier& cls);
Classifier load_classifier(const std::string& path, int s, int h, int w, int c1, int c2,
                           bool sealed = true);

} // namespace dvp
