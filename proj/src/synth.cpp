// SPDX-License-Identifier: Apache-2.0
#include "dvp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dvp {

using json = nlohmann::ordered_json;

bool CaseRecord::normal() const {
    for (int v : labels)
        if (v) return false;
    return true;
}

ZoneBounds zone_bounds(int class_index, int s, int h, int w) {
    if (class_index < 0 || class_index >= kNumClasses)
        throw std::runtime_error("zone_bounds: class index " +
                                 std::to_string(class_index) +
                                 " out of range");
    const int iz = class_index / 9;
    const int iy = (class_index / 3) % 3;
    const int ix = class_index % 3;
    ZoneBounds zb;
    zb.z0 = s * iz / 2;
    zb.z1 = s * (iz + 1) / 2;
    zb.y0 = h * iy / 3;
    zb.y1 = h * (iy + 1) / 3;
    zb.x0 = w * ix / 3;
    zb.x1 = w * (ix + 1) / 3;
    return zb;
}

std::vector<float> background_template(int s, int h, int w) {
    std::vector<float> vol((size_t)s * h * w);
    const float tau = 6.2831853071795864769f;
    size_t i = 0;
    for (int z = 0; z < s; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x, ++i) {
                const float fz = (float)z / (float)s;
                const float fy = (float)y / (float)h;
                const float fx = (float)x / (float)w;
                vol[i] = 0.28f + 0.12f * std::sin(tau * fz) *
                                     std::cos(tau * fy) +
                         0.05f * std::sin(tau * fx + 1.3f);
            }
    return vol;
}

static LesionSize size_from_radius(int radius) {
    if (radius <= 2) return LesionSize::small;
    if (radius == 3) return LesionSize::medium;
    return LesionSize::large;
}

CaseRecord generate_case(const SynthConfig& cfg, uint64_t case_seed,
                         const std::vector<int>& active_classes,
                         std::vector<LesionSpec>* lesions_out) {
    const int s = cfg.s, h = cfg.h, w = cfg.w;
    CaseRecord rec;
    rec.domain_tag = "native";
    rec.volume = background_template(s, h, w);

    Rng noise_rng = Rng::derive(case_seed, 0x6e6f6973ull); // noise stream
    for (auto& v : rec.volume) v += noise_rng.normal(0.0f, cfg.noise_sd);

    std::array<Finding, kNumClasses> findings{};
    for (int k : active_classes) {
        if (k < 0 || k >= kNumClasses)
            throw std::runtime_error("generate_case: bad class index " +
                                     std::to_string(k));
        if (findings[(size_t)k].present)
            throw std::runtime_error("generate_case: duplicate class index " +
                                     std::to_string(k));
        const ZoneBounds zb = zone_bounds(k, s, h, w);
        Rng lrng = Rng::derive(case_seed, 0x6c657331ull, (uint64_t)k);
        const int radius = 2 + (int)lrng.uniform_int(3); // 2, 3 or 4
        auto third = [&lrng](int lo, int hi) {
            const int span = hi - lo;
            const int a = lo + span / 3;
            const int b = hi - span / 3;
            return a + (int)lrng.uniform_int((uint64_t)std::max(1, b - a));
        };
        LesionSpec spec;
        spec.class_index = k;
        spec.radius = radius;
        spec.cz = third(zb.z0, zb.z1);
        spec.cy = third(zb.y0, zb.y1);
        spec.cx = third(zb.x0, zb.x1);

        const float scale = (float)radius / 3.0f;
        const float sz = 0.5f * (float)(zb.z1 - zb.z0) * scale;
        const float sy = 0.5f * (float)(zb.y1 - zb.y0) * scale;
        const float sx = 0.5f * (float)(zb.x1 - zb.x0) * scale;

        // the blob is truncated to the zone; amplitude is normalised so the
        // zone-mean uplift equals intensity_delta exactly (pre-clamp)
        double gsum = 0.0;
        for (int z = zb.z0; z < zb.z1; ++z)
            for (int y = zb.y0; y < zb.y1; ++y)
                for (int x = zb.x0; x < zb.x1; ++x) {
                    const float dz = ((float)z - (float)spec.cz) / sz;
                    const float dy = ((float)y - (float)spec.cy) / sy;
                    const float dx = ((float)x - (float)spec.cx) / sx;
                    gsum += std::exp(-0.5f * (dz * dz + dy * dy + dx * dx));
                }
        spec.amplitude =
            cfg.intensity_delta * (float)zb.voxels() / (float)gsum;

        for (int z = zb.z0; z < zb.z1; ++z)
            for (int y = zb.y0; y < zb.y1; ++y)
                for (int x = zb.x0; x < zb.x1; ++x) {
                    const float dz = ((float)z - (float)spec.cz) / sz;
                    const float dy = ((float)y - (float)spec.cy) / sy;
                    const float dx = ((float)x - (float)spec.cx) / sx;
                    const float g = std::exp(
                        -0.5f * (dz * dz + dy * dy + dx * dx));
                    rec.volume[(size_t)((int64_t)z * h * w + (int64_t)y * w +
                                        x)] += spec.amplitude * g;
                }

        findings[(size_t)k] = Finding{true, size_from_radius(radius)};
        rec.labels[(size_t)k] = 1;
        if (lesions_out) lesions_out->push_back(spec);
    }

    for (auto& v : rec.volume) v = std::min(1.0f, std::max(0.0f, v));
    rec.report = render_report(findings);
    return rec;
}

const CaseRecord& Dataset::by_id(const std::string& id) const {
    for (const auto& c : cases)
        if (c.id == id) return c;
    throw std::runtime_error("dataset: unknown case id '" + id + "'");
}

std::vector<const CaseRecord*> Dataset::split_cases(
    const std::string& split) const {
    std::vector<const CaseRecord*> out;
    for (const auto& c : cases)
        if (c.split == split) out.push_back(&c);
    return out;
}

static std::vector<int> draw_active_classes(const SynthConfig& cfg, Rng& rng) {
    if (rng.uniform() < cfg.normal_frac) return {};
    std::vector<int> active;
    for (int k = 0; k < kNumClasses; ++k)
        if (rng.uniform() < cfg.class_prob) active.push_back(k);
    if (active.empty())
        active.push_back((int)rng.uniform_int(kNumClasses));
    return active;
}

Dataset build_dataset(const SynthConfig& cfg) {
    Dataset ds;
    ds.cfg = cfg;
    ds.cases.reserve((size_t)(cfg.n_train + cfg.n_test));
    char buf[32];
    for (int i = 0; i < cfg.n_train + cfg.n_test; ++i) {
        const bool train = i < cfg.n_train;
        const uint64_t case_seed = mix64(cfg.seed, (uint64_t)i + 1);
        Rng label_rng = Rng::derive(case_seed, 0x6c61626cull);
        CaseRecord rec =
            generate_case(cfg, case_seed, draw_active_classes(cfg, label_rng));
        std::snprintf(buf, sizeof buf, "%s%06d", train ? "tr" : "te",
                      train ? i : i - cfg.n_train);
        rec.id = buf;
        rec.split = train ? "train" : "test";
        ds.cases.push_back(std::move(rec));
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto& cfg = ds.cfg;
    {
        json meta;
        meta["s"] = cfg.s;
        meta["h"] = cfg.h;
        meta["w"] = cfg.w;
        meta["n_train"] = cfg.n_train;
        meta["n_test"] = cfg.n_test;
        meta["seed"] = cfg.seed;
        meta["normal_frac"] = cfg.normal_frac;
        meta["class_prob"] = cfg.class_prob;
        meta["noise_sd"] = cfg.noise_sd;
        meta["intensity_delta"] = cfg.intensity_delta;
        meta["vocab_size"] = vocab().size();
        std::ofstream f(dir + "/meta.json");
        if (!f) throw std::runtime_error("save_dataset: cannot write to " + dir);
        f << meta.dump(2) << "\n";
    }
    std::ofstream cj(dir + "/cases.jsonl");
    std::ofstream vb(dir + "/volumes.bin", std::ios::binary);
    if (!cj || !vb)
        throw std::runtime_error("save_dataset: cannot write to " + dir);
    int64_t offset = 0;
    for (const auto& c : ds.cases) {
        json row;
        row["id"] = c.id;
        row["split"] = c.split;
        row["domain_tag"] = c.domain_tag;
        row["labels"] = c.labels;
        row["report"] = c.report;
        row["volume_offset"] = offset;
        row["volume_numel"] = (int64_t)c.volume.size();
        cj << row.dump() << "\n";
        vb.write(reinterpret_cast<const char*>(c.volume.data()),
                 (std::streamsize)(c.volume.size() * sizeof(float)));
        offset += (int64_t)c.volume.size();
    }
    save_pool(build_reference_pool(ds, "train"), dir + "/pool_train.json");
    save_pool(build_reference_pool(ds, "test"), dir + "/pool_test.json");
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    {
        std::ifstream f(dir + "/meta.json");
        if (!f)
            throw std::runtime_error("load_dataset: missing meta.json in " +
                                     dir);
        json meta = json::parse(f);
        ds.cfg.s = meta.at("s");
        ds.cfg.h = meta.at("h");
        ds.cfg.w = meta.at("w");
        ds.cfg.n_train = meta.at("n_train");
        ds.cfg.n_test = meta.at("n_test");
        ds.cfg.seed = meta.at("seed");
        ds.cfg.normal_frac = meta.at("normal_frac");
        ds.cfg.class_prob = meta.at("class_prob");
        ds.cfg.noise_sd = meta.at("noise_sd");
        ds.cfg.intensity_delta = meta.at("intensity_delta");
        if ((int)meta.at("vocab_size") != vocab().size())
            throw std::runtime_error(
                "load_dataset: vocabulary size mismatch in " + dir);
    }
    std::ifstream cj(dir + "/cases.jsonl");
    std::ifstream vb(dir + "/volumes.bin", std::ios::binary);
    if (!cj || !vb)
        throw std::runtime_error("load_dataset: missing cases.jsonl or "
                                 "volumes.bin in " +
                                 dir);
    std::string line;
    while (std::getline(cj, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        CaseRecord c;
        c.id = row.at("id");
        c.split = row.at("split");
        c.domain_tag = row.at("domain_tag");
        const auto& lab = row.at("labels");
        if (lab.size() != (size_t)kNumClasses)
            throw std::runtime_error("load_dataset: bad label vector for " +
                                     c.id);
        for (int k = 0; k < kNumClasses; ++k) c.labels[(size_t)k] = lab[(size_t)k];
        c.report = row.at("report").get<std::vector<int>>();
        const int64_t off = row.at("volume_offset");
        const int64_t numel = row.at("volume_numel");
        c.volume.resize((size_t)numel);
        vb.seekg((std::streamoff)(off * (int64_t)sizeof(float)));
        vb.read(reinterpret_cast<char*>(c.volume.data()),
                (std::streamsize)(numel * (int64_t)sizeof(float)));
        if (!vb)
            throw std::runtime_error("load_dataset: truncated volumes.bin at " +
                                     c.id);
        ds.cases.push_back(std::move(c));
    }
    return ds;
}

ReferencePool build_reference_pool(const Dataset& ds, const std::string& split,
                                   int max_size) {
    ReferencePool pool;
    pool.split = split;
    for (const auto& c : ds.cases)
        if (c.split == split && c.normal()) pool.members.push_back(c.id);
    std::sort(pool.members.begin(), pool.members.end());
    if (pool.members.empty())
        throw std::runtime_error("build_reference_pool: split '" + split +
                                 "' has no normal cases");
    if (max_size > 0 && (int)pool.members.size() > max_size)
        pool.members.resize((size_t)max_size);
    return pool;
}

const std::string& sample_reference(const ReferencePool& pool, Rng& rng) {
    if (pool.members.empty())
        throw std::runtime_error("sample_reference: empty pool");
    return pool.members[(size_t)rng.uniform_int(pool.members.size())];
}

ReferencePool contaminate_pool(const ReferencePool& pool, const Dataset& ds,
                               float ratio) {
    if (ratio < 0.0f || ratio >= 1.0f)
        throw std::runtime_error(
            "contaminate_pool: ratio must be in [0, 1), got " +
            std::to_string(ratio));
    ReferencePool out = pool;
    const int m = (int)std::ceil((double)ratio * (double)pool.members.size());
    if (m == 0) return out;
    std::vector<std::string> abnormal;
    for (const auto& c : ds.cases)
        if (c.split == pool.split && !c.normal()) abnormal.push_back(c.id);
    std::sort(abnormal.begin(), abnormal.end());
    if ((int)abnormal.size() < m)
        throw std::runtime_error(
            "contaminate_pool: split has only " +
            std::to_string(abnormal.size()) + " abnormal cases, need " +
            std::to_string(m));
    for (int i = 0; i < m; ++i) out.members[(size_t)i] = abnormal[(size_t)i];
    out.contamination_ratio = ratio;
    return out;
}

void save_pool(const ReferencePool& pool, const std::string& path) {
    json j;
    j["split"] = pool.split;
    j["contamination_ratio"] = pool.contamination_ratio;
    j["members"] = pool.members;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_pool: cannot write " + path);
    f << j.dump(2) << "\n";
}

ReferencePool load_pool(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_pool: cannot open " + path);
    json j = json::parse(f);
    ReferencePool pool;
    pool.split = j.at("split");
    pool.contamination_ratio = j.at("contamination_ratio");
    pool.members = j.at("members").get<std::vector<std::string>>();
    return pool;
}

std::vector<float> domain_shift_transform(const std::vector<float>& volume,
                                          float gain, float bias,
                                          float noise_sd, Rng& rng) {
    std::vector<float> out(volume.size());
    for (size_t i = 0; i < volume.size(); ++i) {
        float v = gain * volume[i] + bias;
        if (noise_sd > 0.0f) v += rng.normal(0.0f, noise_sd);
        out[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
}

} // namespace dvp
