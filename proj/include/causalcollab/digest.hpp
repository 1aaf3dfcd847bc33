#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace causalcollab {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

std::string file_digest(const std::filesystem::path& path);

}  // namespace causalcollab
