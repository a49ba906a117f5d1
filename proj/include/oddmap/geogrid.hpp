#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oddmap/crs.hpp"
#include "oddmap/raster.hpp"
#include "oddmap/types.hpp"

namespace oddmap {

struct GridSpec {
  double tile_size_m = 5.0;
  /// Projected CRS for gridding; chosen by choose_working_crs() when unset.
  std::optional<Crs> working_crs;
  /// Top-left grid anchor in working_crs. Defaults to the footprint's
  /// (min x, max y) corner snapped outward to a multiple of tile_size_m, so
  /// grids of overlapping rasters share one lattice.
  std::optional<Point> origin;
  bool include_partials = false;
};

struct TileRecord {
  TileId id;
  Rect bounds;
  PixelWindow pixel_window;
  /// Fraction of the tile covered by valid data. Geometric coverage after
  /// gridding; refined from the nodata mask during extraction.
  double valid_fraction = 1.0;
  std::optional<Label> label;
  std::optional<Label> prediction;
  std::optional<double> confidence;
};

/// Lattice definition shared by every tile of one grid.
struct GridFrame {
  Crs crs;
  double tile_size_m = 5.0;
  Point anchor;  // top-left corner of tile (0, 0)

  Rect bounds_of(TileId id) const;
  /// Tile containing a point; points on a shared edge belong to the tile to
  /// the east / south.
  TileId tile_at(Point p) const;
};

struct Grid {
  GridFrame frame;
  std::vector<TileRecord> tiles;  // row-major
};

/// Returns meta.crs when already metric, otherwise the UTM zone containing
/// the raster centroid.
Crs choose_working_crs(const RasterMeta& meta);

/// Footprint of the raster in `crs` as a closed-free polygon (edges densified
/// when reprojected).
std::vector<Point> footprint_in(const RasterMeta& meta, const Crs& crs);

Grid make_grid(const RasterMeta& meta, const GridSpec& spec = {});

/// Minimal pixel window covering every source pixel whose area intersects
/// `bounds` (given in `frame_crs`), clipped to the raster. Throws Geometry
/// when the tile and raster are disjoint.
PixelWindow tile_to_window(const Rect& bounds, const Crs& frame_crs, const RasterMeta& meta);

/// GeoJSON Polygon geometry object for a tile rectangle, serialized with
/// fixed precision (lon/lat at 7 decimals, or CRS units at 3 decimals when
/// the CRS has no WGS84 transform).
std::string geojson_polygon(const Rect& bounds, const Crs& crs);

/// GeoJSON FeatureCollection, one polygon per tile with `tile_id` and
/// `valid_fraction` properties. Coordinates are WGS84 lon/lat rounded to
/// 7 decimals when the frame CRS is transformable, else raw CRS units.
void write_grid_geojson(std::ostream& out, const Grid& grid);

/// Compact CSV manifest: '#'-prefixed frame lines, then one row per tile.
void write_grid_csv(std::ostream& out, const Grid& grid);
Grid read_grid_csv(const std::filesystem::path& path);

}  // namespace oddmap
