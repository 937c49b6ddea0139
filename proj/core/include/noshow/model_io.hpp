#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "noshow/model.hpp"

namespace noshow {

/// Model file layout (all integers little-endian):
///
///   [0,4)     magic "NSRF"
///   [4,8)     format version, u32
///   [8,16)    payload length N, u64
///   [16,16+N) payload
///   then      SHA-256 of the payload, 32 bytes
///
/// Payload: u32 length + metadata JSON, u32 tree count, then per tree a u32
/// node count followed by nodes as (i32 feature, f64 threshold, i32 left,
/// i32 right, f64 value). Doubles are stored as raw IEEE-754 bits.
std::string serialize_model(const FrozenForestModel& model);

/// Throws VersionMismatch for an unknown version, CorruptFile for a bad
/// magic, truncation, checksum failure or malformed payload.
FrozenForestModel deserialize_model(std::string_view bytes);

void save_model(const FrozenForestModel& model, const std::filesystem::path& path);
FrozenForestModel load_model(const std::filesystem::path& path);

/// SHA-256 hex of the serialized form.
std::string model_digest(const FrozenForestModel& model);

}  // namespace noshow
