// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dvp {

// Flat string key -> value configuration. Sources merge in precedence
// order: preset defaults, then a config file, then explicit overrides
// (later wins). File grammar: one "key = value" per line, '#' comments,
// blank lines ignored, keys [a-z0-9_.]+.
class FlatConfig {
public:
    FlatConfig() = default;

    static FlatConfig from_file(const std::string& path);
    void merge_file(const std::string& path);
    void apply_override(const std::string& kv); // "key=value"
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    int64_t get_i64(const std::string& key, int64_t fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    float get_float(const std::string& key, float fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // sorted key/value pairs (manifest serialization)
    std::vector<std::pair<std::string, std::string>> items() const;

private:
    std::map<std::string, std::string> kv_;
};

// Named bundles of defaults. "desk": minutes-scale runs (400/100 cases,
// 3 epochs, lr 1e-3). "full": reference protocol (10 epochs, lr 5e-5).
void apply_preset(FlatConfig& cfg, const std::string& name);

// comma-separated helpers ("a,b,c"); empty string -> empty vector
std::vector<std::string> split_list(const std::string& s);
std::vector<int> split_int_list(const std::string& s);
std::vector<uint64_t> split_u64_list(const std::string& s);
std::vector<double> split_double_list(const std::string& s);

// Writes dir/manifest.json: command, resolved config, seed, code version,
// timestamps, output names. Manifests are the only artifacts that carry
// timestamps; metric files must stay bytewise reproducible.
void write_manifest(const std::string& dir, const std::string& command,
                    const FlatConfig& cfg, uint64_t seed,
                    const std::vector<std::string>& outputs);

extern const char* kCodeVersion;

} // namespace dvp
