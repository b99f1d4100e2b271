// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dvp/tensor.hpp"

namespace dvp {

// Ordered name -> tensor view of a model's parameters.
using ParamMap = std::vector<std::pair<std::string, Tensor>>;

// Weight file layout (all multi-byte data little-endian):
//   line   "DVP1 <tensor-count>\n"
//   per tensor:
//     line "<name> <rank> <dim0> ... <dimN-1>\n"   (name has no spaces)
//     raw float32 payload, prod(dims) * 4 bytes
void save_checkpoint(const std::string& path, const ParamMap& tensors);

// loads every tensor in the file
ParamMap load_checkpoint(const std::string& path);

// loads into an existing parameter map; every name must match an entry
// with identical shape, and every entry must be present in the file
void load_checkpoint_into(const std::string& path, ParamMap& params);

// FNV-1a over the raw float bytes of all tensors, in map order;
// used by the freeze audits
std::string checksum(const ParamMap& tensors);

int64_t param_count(const ParamMap& tensors);

} // namespace dvp
