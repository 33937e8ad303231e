// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace gradekit {

/// Lossless decimal form of a double (17 significant digits).
std::string format_real(double value);

std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: creates parent directories,
/// truncates, throws DataError on I/O failure.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace gradekit
