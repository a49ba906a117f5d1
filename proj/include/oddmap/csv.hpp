#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oddmap::csv {

/// A parsed CSV table with a header row. Fields may be double-quoted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based source line of each row, for error messages.
  std::vector<std::size_t> lines;

  std::optional<std::size_t> column(std::string_view name) const;
  /// Column index or a Parse error naming the missing column.
  std::size_t require(std::string_view name, std::string_view source) const;
};

std::vector<std::string> split_line(std::string_view line);

/// Reads a CSV document. Lines starting with '#' before the header are skipped
/// and returned through `comments` when non-null.
Table read(std::istream& in, std::vector<std::string>* comments = nullptr);
Table read_file(const std::filesystem::path& path, std::vector<std::string>* comments = nullptr);

std::string escape(std::string_view field);

long long to_int(std::string_view text, std::string_view what);
double to_double(std::string_view text, std::string_view what);

}  // namespace oddmap::csv
