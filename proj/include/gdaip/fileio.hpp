#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace gdaip {

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace gdaip
