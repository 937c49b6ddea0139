#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace noshow {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::string_view bytes);
std::string sha256_hex(std::string_view bytes);
std::string to_hex(const Sha256Digest& digest);

/// Hex digest of a file's contents. Throws Error(Io) if unreadable.
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace noshow
