// SPDX-License-Identifier: Apache-2.0
#include "dvp/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace dvp {

void save_checkpoint(const std::string& path, const ParamMap& tensors) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    f << "DVP1 " << tensors.size() << "\n";
    for (const auto& [name, t] : tensors) {
        if (name.find(' ') != std::string::npos ||
            name.find('\n') != std::string::npos)
            throw std::runtime_error("checkpoint: bad tensor name '" + name +
                                     "'");
        f << name << " " << t.rank();
        for (int d : t.shape()) f << " " << d;
        f << "\n";
        f.write(reinterpret_cast<const char*>(t.data()),
                (std::streamsize)(sizeof(float) * (size_t)t.numel()));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamMap load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string magic;
    size_t count = 0;
    f >> magic >> count;
    if (magic != "DVP1")
        throw std::runtime_error("checkpoint: bad magic in " + path);
    f.get(); // newline
    ParamMap out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        std::string header;
        if (!std::getline(f, header))
            throw std::runtime_error("checkpoint: truncated header in " +
                                     path);
        std::istringstream hs(header);
        std::string name;
        int rank = -1;
        hs >> name >> rank;
        if (name.empty() || rank < 0)
            throw std::runtime_error("checkpoint: malformed tensor header '" +
                                     header + "'");
        Shape shape((size_t)rank);
        for (int d = 0; d < rank; ++d)
            if (!(hs >> shape[(size_t)d]))
                throw std::runtime_error(
                    "checkpoint: malformed tensor header '" + header + "'");
        std::vector<float> data((size_t)shape_numel(shape));
        f.read(reinterpret_cast<char*>(data.data()),
               (std::streamsize)(sizeof(float) * data.size()));
        if (!f)
            throw std::runtime_error("checkpoint: truncated payload for '" +
                                     name + "' in " + path);
        out.emplace_back(name, Tensor::from_data(shape, std::move(data)));
    }
    return out;
}

void load_checkpoint_into(const std::string& path, ParamMap& params) {
    ParamMap loaded = load_checkpoint(path);
    if (loaded.size() != params.size())
        throw std::runtime_error(
            "checkpoint: tensor count mismatch, file has " +
            std::to_string(loaded.size()) + ", model expects " +
            std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [want_name, dst] = params[i];
        auto& [got_name, src] = loaded[i];
        if (want_name != got_name)
            throw std::runtime_error("checkpoint: tensor name mismatch at " +
                                     std::to_string(i) + ": file has '" +
                                     got_name + "', model expects '" +
                                     want_name + "'");
        if (!same_shape(dst.shape(), src.shape()))
            throw std::runtime_error("checkpoint: shape mismatch for '" +
                                     want_name + "': file " +
                                     shape_str(src.shape()) + ", model " +
                                     shape_str(dst.shape()));
        dst.values() = src.values();
    }
}

std::string checksum(const ParamMap& tensors) {
    uint64_t h = 1469598103934665603ull; // FNV offset basis
    auto feed = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, t] : tensors) {
        feed(name.data(), name.size());
        feed(t.data(), sizeof(float) * (size_t)t.numel());
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

int64_t param_count(const ParamMap& tensors) {
    int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
}

} // namespace dvp
