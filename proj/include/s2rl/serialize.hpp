#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "s2rl/array.hpp"

namespace s2rl::datastore {

using numgrad::Array;

// On-disk container used for datasets and checkpoints:
//   "S2RL" | u32 version | u64 manifest length | manifest JSON |
//   concatenated f64 little-endian payload | u64 FNV-1a checksum
// The checksum covers every byte before it. The manifest carries a
// directory of array names and shapes plus free-form metadata.
inline constexpr std::uint32_t kFormatVersion = 1;

struct Blob {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Array>> arrays;

    const Array& get(const std::string& name) const;
};

void write_container(const std::string& path, const Blob& blob);
Blob read_container(const std::string& path);

std::uint64_t fnv1a(const unsigned char* data, std::size_t len);

}  // namespace s2rl::datastore
