#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace oddmap {

/// Grid cell index. Row 0 is the northernmost row; columns grow eastward.
struct TileId {
  std::int64_t row = 0;
  std::int64_t col = 0;

  friend auto operator<=>(const TileId&, const TileId&) = default;
};

enum class Label : std::uint8_t { Background = 0, Waste = 1 };

std::string_view to_string(Label label) noexcept;

/// Parses "waste"/"background" case-insensitively, ignoring surrounding whitespace.
std::optional<Label> parse_label(std::string_view text);

/// Pixel rectangle in source raster coordinates.
struct PixelWindow {
  std::int64_t row_off = 0;
  std::int64_t col_off = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  bool empty() const noexcept { return height <= 0 || width <= 0; }
  std::int64_t pixel_count() const noexcept { return empty() ? 0 : height * width; }
  friend bool operator==(const PixelWindow&, const PixelWindow&) = default;
};

/// Axis-aligned rectangle in CRS units.
struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const noexcept { return max_x - min_x; }
  double height() const noexcept { return max_y - min_y; }
  bool empty() const noexcept { return !(max_x > min_x && max_y > min_y); }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

}  // namespace oddmap

template <>
struct std::hash<oddmap::TileId> {
  std::size_t operator()(const oddmap::TileId& id) const noexcept {
    const auto h = static_cast<std::uint64_t>(id.row) * 0x9E3779B97F4A7C15ULL ^
                   static_cast<std::uint64_t>(id.col);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};
