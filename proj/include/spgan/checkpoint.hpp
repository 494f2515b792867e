#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spgan/tensor.hpp"

namespace spgan {

inline constexpr uint32_t kCheckpointVersion = 1;

// Layout (little-endian), see docs/checkpoint-format.md:
//   "SPG1" | u32 version | u64 config digest | u32 len + config text | u64 step
//   | u64 projection seed | u32 array count | arrays...
// array: u32 len + name | u32 ndim | ndim x i64 dims | numel x f32
struct Checkpoint {
    std::string config_text;
    uint64_t config_digest = 0;
    uint64_t step = 0;
    uint64_t projection_seed = 0;
    std::vector<std::pair<std::string, Tensor>> arrays;

    const Tensor* find(const std::string& name) const;
    const Tensor& at(const std::string& name) const;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
// Throws IoError on bad magic, unsupported version, digest mismatch or truncation.
Checkpoint decode_checkpoint(std::vector<unsigned char> bytes, const std::string& source);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace spgan
