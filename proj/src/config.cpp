// SPDX-License-Identifier: Apache-2.0
#include "dvp/config.hpp"

#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dvp {

const char* kCodeVersion = "dvp 0.1.0";

static std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace((unsigned char)s[b])) ++b;
    while (e > b && std::isspace((unsigned char)s[e - 1])) --e;
    return s.substr(b, e - b);
}

static bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::islower((unsigned char)c) || std::isdigit((unsigned char)c) || c == '_' ||
              c == '.'))
            return false;
    return true;
}

FlatConfig FlatConfig::from_file(const std::string& path) {
    FlatConfig cfg;
    cfg.merge_file(path);
    return cfg;
}

void FlatConfig::merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key))
            throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                                     ": bad key '" + key + "'");
        kv_[key] = trim(line.substr(eq + 1));
    }
}

void FlatConfig::apply_override(const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
        throw std::runtime_error("config: override '" + kv + "' is not key=value");
    const std::string key = trim(kv.substr(0, eq));
    if (!valid_key(key)) throw std::runtime_error("config: bad override key '" + key + "'");
    kv_[key] = trim(kv.substr(eq + 1));
}

void FlatConfig::set(const std::string& key, const std::string& value) {
    kv_[key] = value;
}

bool FlatConfig::has(const std::string& key) const {
    return kv_.count(key) != 0;
}

std::string FlatConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

template <class T, class Parse>
static T typed_get(const std::map<std::string, std::string>& kv, const std::string& key,
                   T fallback, Parse parse, const char* what) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t used = 0;
        T v = parse(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' = '" + it->second + "' is not " +
                                 what);
    }
}

int FlatConfig::get_int(const std::string& key, int fallback) const {
    return typed_get<int>(
        kv_, key, fallback, [](const std::string& s, size_t* u) { return std::stoi(s, u); },
        "an integer");
}

int64_t FlatConfig::get_i64(const std::string& key, int64_t fallback) const {
    return typed_get<int64_t>(
        kv_, key, fallback, [](const std::string& s, size_t* u) { return std::stoll(s, u); },
        "an integer");
}

uint64_t FlatConfig::get_u64(const std::string& key, uint64_t fallback) const {
    return typed_get<uint64_t>(
        kv_, key, fallback, [](const std::string& s, size_t* u) { return std::stoull(s, u); },
        "an unsigned integer");
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
    return typed_get<double>(
        kv_, key, fallback, [](const std::string& s, size_t* u) { return std::stod(s, u); },
        "a number");
}

float FlatConfig::get_float(const std::string& key, float fallback) const {
    return (float)get_double(key, (double)fallback);
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: key '" + key + "' = '" + v + "' is not a boolean");
}

std::vector<std::pair<std::string, std::string>> FlatConfig::items() const {
    return {kv_.begin(), kv_.end()};
}

void apply_preset(FlatConfig& cfg, const std::string& name) {
    if (name == "desk") {
        cfg.set("data.n_train", "400");
        cfg.set("data.n_test", "100");
        cfg.set("train.epochs", "3");
        cfg.set("train.lr", "0.001");
        cfg.set("cls.epochs", "2");
        cfg.set("cls.lr", "0.001");
        cfg.set("preset", "desk");
    } else if (name == "full") {
        cfg.set("train.epochs", "10");
        cfg.set("train.lr", "5e-05");
        cfg.set("cls.epochs", "4");
        cfg.set("cls.lr", "0.001");
        cfg.set("preset", "full");
    } else {
        throw std::runtime_error("config: unknown preset '" + name + "' (desk|full)");
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        std::string item = trim(s.substr(start, comma - start));
        if (!item.empty()) out.push_back(item);
        start = comma + 1;
    }
    return out;
}

std::vector<int> split_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& item : split_list(s)) out.push_back(std::stoi(item));
    return out;
}

std::vector<uint64_t> split_u64_list(const std::string& s) {
    std::vector<uint64_t> out;
    for (const auto& item : split_list(s)) out.push_back(std::stoull(item));
    return out;
}

std::vector<double> split_double_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) out.push_back(std::stod(item));
    return out;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const FlatConfig& cfg, uint64_t seed,
                    const std::vector<std::string>& outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::ordered_json m;
    m["command"] = command;
    m["code_version"] = kCodeVersion;
    m["seed"] = seed;
    nlohmann::ordered_json conf = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cfg.items()) conf[k] = v;
    m["config"] = conf;
    m["outputs"] = outputs;
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    m["created_unix_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("config: cannot write manifest under " + dir);
    out << m.dump(2) << "\n";
}

} // namespace dvp
