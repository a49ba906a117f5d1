#include "oddmap/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>

#include "oddmap/error.hpp"

namespace oddmap::csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::require(std::string_view name, std::string_view source) const {
  if (auto idx = column(name)) return *idx;
  fail(ErrorKind::Parse, std::string(source) + ": missing column '" + std::string(name) + "'");
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

Table read(std::istream& in, std::vector<std::string>* comments) {
  Table table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.empty()) continue;
      if (line.front() == '#') {
        if (comments) comments->push_back(line.substr(1));
        continue;
      }
      table.header = split_line(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(table.header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.lines.push_back(line_no);
  }
  if (!have_header) fail(ErrorKind::Parse, "empty CSV document (no header)");
  return table;
}

Table read_file(const std::filesystem::path& path, std::vector<std::string>* comments) {
  if (std::filesystem::is_directory(path)) fail(ErrorKind::Io, path.string() + " is a directory, not a file");
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read(in, comments);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

long long to_int(std::string_view text, std::string_view what) {
  long long value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    fail(ErrorKind::Parse, "invalid integer for " + std::string(what) + ": '" + std::string(text) + "'");
  }
  return value;
}

double to_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    fail(ErrorKind::Parse, "invalid number for " + std::string(what) + ": '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace oddmap::csv
