#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace deepgap {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Hex SHA-256 over the given files, in the order supplied. Each file
/// contributes its path relative to `root` followed by its contents.
std::string digest_files(const std::filesystem::path& root,
                         std::span<const std::filesystem::path> files);

}  // namespace deepgap
