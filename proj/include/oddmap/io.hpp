#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace oddmap::io {

/// Lower-case hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it over `path` once the
/// writer returns, so readers never observe a partial file.
void write_atomic(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);
void write_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_text(const std::filesystem::path& path);

/// Fixed-precision decimal formatting with trailing zeros trimmed ("1.5", "13").
std::string format_decimal(double value, int max_decimals);

}  // namespace oddmap::io
