// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dvp/classifier.hpp"
#include "dvp/model.hpp"
#include "dvp/optim.hpp"
#include "dvp/synth.hpp"

namespace dvp {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 1; // the loop is written for 1; other values rejected
    float lr = 5e-5f;
    uint64_t seed = 21;
    int pool_max = 0; // 0: every train normal
    AblationFlags flags;
    float clip_norm = 1.0f;
    bool lora = false;
    int lora_r = 4;
    float lora_alpha = 8.0f;
    std::string run_dir; // empty: train in memory, write nothing
    bool resume = false;
    bool epoch_checkpoints = true;
};

struct EpochStat {
    int epoch = 0;
    int64_t steps = 0;
    double mean_gen = 0.0, mean_cls = 0.0, mean_total = 0.0;
};

struct TrainResult {
    int64_t steps = 0;
    std::vector<EpochStat> epochs;
    std::string model_path;
    std::string cls_checksum_before, cls_checksum_after;
};

struct StepLoss {
    float l_gen = 0.0f, l_cls = 0.0f, l_total = 0.0f;
    std::string ref_id;
};

// One optimization step: sample a reference from the pool, wire the inputs
// per the ablation flags, take the summed loss, update. The classifier (if
// used) only ever runs inference here.
StepLoss train_step(GeneratorModel& model, const Classifier* cls, const CaseRecord& target,
                    const ReferencePool& pool, const Dataset& data, Rng& pair_rng,
                    const AblationFlags& flags, Adam& opt);

// Full loop over the train split with per-epoch shuffling, JSONL logging,
// per-epoch checkpoints, resume, and the leakage/freeze audits.
TrainResult train_generator(GeneratorModel& model, const Dataset& data, const Classifier* cls,
                            const TrainConfig& cfg);

} // namespace dvp
