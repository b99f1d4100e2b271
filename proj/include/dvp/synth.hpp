// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dvp/grammar.hpp"
#include "dvp/rng.hpp"

namespace dvp {

struct SynthConfig {
    int s = 16, h = 32, w = 32; // volume extents (depth, height, width)
    int n_train = 400;
    int n_test = 100;
    uint64_t seed = 7;
    float normal_frac = 0.3f;
    float class_prob = 0.15f;    // per-class prevalence on the abnormal branch
    float noise_sd = 0.02f;
    float intensity_delta = 0.12f; // guaranteed mean uplift inside the zone
};

struct CaseRecord {
    std::string id;
    std::string split;      // "train" | "test"
    std::string domain_tag; // "native" | "shifted"
    std::array<int, kNumClasses> labels{};
    std::vector<int> report;
    std::vector<float> volume; // s*h*w floats in [0, 1]
    bool normal() const;
};

struct ZoneBounds {
    int z0, z1, y0, y1, x0, x1; // half-open
    int64_t voxels() const {
        return (int64_t)(z1 - z0) * (y1 - y0) * (x1 - x0);
    }
};

// fixed 2x3x3 tiling of the volume into 18 disjoint class zones
ZoneBounds zone_bounds(int class_index, int s, int h, int w);

// smooth anatomical background shared by every case (no noise)
std::vector<float> background_template(int s, int h, int w);

struct LesionSpec {
    int class_index;
    int radius;      // 2/3/4 -> small/medium/large
    int cz, cy, cx;  // center, inside the zone's middle third
    float amplitude; // normalised so the zone-mean uplift is intensity_delta
};

// Deterministic case synthesis. The volume is the background template plus
// seeded noise plus one truncated Gaussian blob per active class; blob
// amplitude is scaled so the mean value inside the class zone rises by
// exactly intensity_delta before clamping.
CaseRecord generate_case(const SynthConfig& cfg, uint64_t case_seed,
                         const std::vector<int>& active_classes,
                         std::vector<LesionSpec>* lesions_out = nullptr);

struct Dataset {
    SynthConfig cfg;
    std::vector<CaseRecord> cases;

    const CaseRecord& by_id(const std::string& id) const;
    std::vector<const CaseRecord*> split_cases(const std::string& split) const;
    int64_t volume_numel() const { return (int64_t)cfg.s * cfg.h * cfg.w; }
};

// draws the label pattern per case and synthesises everything
Dataset build_dataset(const SynthConfig& cfg);

// dataset directory layout: meta.json + cases.jsonl + volumes.bin
// + pool_train.json + pool_test.json
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

struct ReferencePool {
    std::string split;
    std::vector<std::string> members; // case ids, normals unless contaminated
    float contamination_ratio = 0.0f;
};

// all normal cases of the split in id order; max_size > 0 truncates;
// errors when the split has no normals
ReferencePool build_reference_pool(const Dataset& ds, const std::string& split,
                                   int max_size = 0);

const std::string& sample_reference(const ReferencePool& pool, Rng& rng);

// replaces ceil(ratio * size) members (prefix of the member list) with
// abnormal cases of the same split; ratio must be in [0, 1)
ReferencePool contaminate_pool(const ReferencePool& pool, const Dataset& ds,
                               float ratio);

void save_pool(const ReferencePool& pool, const std::string& path);
ReferencePool load_pool(const std::string& path);

// v' = clamp(gain * v + bias + noise, 0, 1)
std::vector<float> domain_shift_transform(const std::vector<float>& volume,
                                          float gain, float bias,
                                          float noise_sd, Rng& rng);

} // namespace dvp
