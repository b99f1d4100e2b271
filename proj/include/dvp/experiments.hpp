// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dvp/classifier.hpp"
#include "dvp/config.hpp"
#include "dvp/metrics.hpp"
#include "dvp/model.hpp"
#include "dvp/train.hpp"

namespace dvp {

// Named variants of the ablation/baseline matrix. "wo_diff" is the
// difference-free row (same wiring as "plus_e"); "pixel_diff" swaps the
// semantic deltas for voxelwise subtraction behind an identical prompt.
struct VariantSpec {
    std::string name;
    AblationFlags flags;
};
const std::vector<VariantSpec>& experiment_matrix();
AblationFlags flags_for_variant(const std::string& name);

struct EvalOptions {
    int pool_size = 0; // 0: every test normal
    float contamination = 0.0f;
    bool shift = false;
    float shift_gain = 0.9f, shift_bias = 0.05f, shift_noise = 0.02f;
    uint64_t pairing_seed = 33;
    int max_gen_len = 128;
    int case_limit = 0; // 0: full split
    bool export_diffmap = false;
};

struct EvalSummary {
    int cases = 0;
    metrics::NlgScores nlg; // macro mean over cases
    metrics::CeScores ce;   // micro over case x class cells
    metrics::CeCounts counts;
    int abnormal_cases = 0;
    double mean_top8 = -1.0; // -1 when importance scores are unavailable
    bool refs_all_in_pool = true;
};

// Generates reports for the test split and scores them. When out_dir is
// non-empty writes eval.json + reports.jsonl (+ diffmap.jsonl on request);
// those files carry no timestamps and reproduce bytewise.
EvalSummary run_eval(GeneratorModel& model, const AblationFlags& flags, const Dataset& data,
                     const Classifier* cls, const EvalOptions& opts,
                     const std::string& out_dir);

// Rebuilds a trained run from its manifest: model config, flags, adapters,
// weights, and the sealed classifier it conditioned on.
struct LoadedRun {
    FlatConfig cfg;
    AblationFlags flags;
    GeneratorModel model;
    Classifier cls;
    bool has_cls = false;
    std::string dir;
};
LoadedRun load_run(const std::string& run_dir, const Dataset& data);

// CLI entry points; throw std::runtime_error on any failure.
void cmd_synth(const FlatConfig& cfg);
void cmd_train_classifier(const FlatConfig& cfg);
void cmd_train(const FlatConfig& cfg);
void cmd_eval(const FlatConfig& cfg);
void cmd_ablate(const FlatConfig& cfg);
void cmd_sweep_prefix(const FlatConfig& cfg);
void cmd_seeds(const FlatConfig& cfg);
void cmd_pool_study(const FlatConfig& cfg);
void cmd_diffmap(const FlatConfig& cfg);

} // namespace dvp
