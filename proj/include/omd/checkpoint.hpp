#pragma once

#include <cstdint>
#include <string>

#include "omd/param_vector.hpp"

namespace omd {

// Checkpoint file: magic "OMD1", version u32, epoch u32, config digest u64,
// layout table, f64 payload. Little-endian throughout; round-trips bitwise.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint32_t epoch = 0;
    std::uint64_t config_digest = 0;
};

struct Checkpoint {
    ParamVector theta;
    CheckpointMeta meta;
};

void save_checkpoint(const std::string& path, const ParamVector& theta, const CheckpointMeta& meta);

// Loads and validates the container. When expected_layout/expected_digest
// are given, mismatches are rejected.
Checkpoint load_checkpoint(const std::string& path, const Layout* expected_layout = nullptr,
                           const std::uint64_t* expected_digest = nullptr);

// FNV-1a over a byte string; used for config digests.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace omd
