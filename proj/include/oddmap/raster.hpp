#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "oddmap/crs.hpp"
#include "oddmap/types.hpp"

namespace oddmap {

/// Pixel-to-CRS affine map in GDAL order:
///   x = c[0] + col * c[1] + row * c[2]
///   y = c[3] + col * c[4] + row * c[5]
/// where (col, row) address pixel corners; pixel centers sit at +0.5.
struct Affine {
  std::array<double, 6> c{0.0, 1.0, 0.0, 0.0, 0.0, -1.0};

  static Affine north_up(double origin_x, double origin_y, double pixel_w, double pixel_h) {
    return Affine{{origin_x, pixel_w, 0.0, origin_y, 0.0, -pixel_h}};
  }

  Point apply(double col, double row) const noexcept {
    return {c[0] + col * c[1] + row * c[2], c[3] + col * c[4] + row * c[5]};
  }
  double determinant() const noexcept { return c[1] * c[5] - c[2] * c[4]; }
  bool invertible() const noexcept;
  bool north_up() const noexcept { return c[2] == 0.0 && c[4] == 0.0 && c[1] > 0.0 && c[5] < 0.0; }
  /// Inverse map; throws Geometry when singular.
  Affine inverse() const;
  friend bool operator==(const Affine&, const Affine&) = default;
};

struct RasterMeta {
  std::int64_t width_px = 0;
  std::int64_t height_px = 0;
  Affine transform;
  Crs crs;
  double gsd_m = 0.0;
  int band_count = 0;
  int bits_per_sample = 8;
  std::optional<double> nodata;
  /// Index of a band flagged as alpha by the file, when present.
  std::optional<int> alpha_band;

  /// Footprint corners in raster CRS, clockwise from the top-left.
  std::array<Point, 4> footprint() const;
  Rect bounds() const;
};

/// Ground sampling distance in meters for a transform expressed in `crs`.
/// Geographic transforms are measured in the UTM zone of `center`.
double ground_sampling_distance(const Affine& transform, const Crs& crs, Point center);

/// Throws Validation when the metadata violates its invariants.
void validate(const RasterMeta& meta);

/// Block of source samples read from a pixel window. Samples are band-interleaved
/// (pixel-major) and widened to 16 bits regardless of source depth.
struct PixelBlock {
  PixelWindow window;
  std::int64_t height = 0;
  std::int64_t width = 0;
  int bands = 0;
  int bits_per_sample = 8;
  std::vector<std::uint16_t> samples;
  /// One byte per pixel, 1 where the pixel is nodata.
  std::vector<std::uint8_t> nodata_mask;

  std::uint16_t at(std::int64_t row, std::int64_t col, int band) const {
    return samples[static_cast<std::size_t>((row * width + col) * bands + band)];
  }
  std::int64_t valid_count() const;
};

/// Read-only GeoTIFF with windowed access. Decoded strips/tiles are kept in a
/// bounded LRU cache; reads are internally synchronized so one handle may be
/// shared across worker threads.
class RasterDataset {
 public:
  static RasterDataset open(const std::filesystem::path& path,
                            std::size_t cache_bytes = 64u << 20);

  RasterDataset(RasterDataset&&) noexcept;
  RasterDataset& operator=(RasterDataset&&) noexcept;
  ~RasterDataset();

  const RasterMeta& meta() const noexcept;
  const std::filesystem::path& path() const noexcept;

  /// Reads exactly the window's source pixels. Throws Geometry when the
  /// window is empty or leaves the raster extent and Io on decode failure.
  PixelBlock read_window(const PixelWindow& window) const;

 private:
  struct Impl;
  explicit RasterDataset(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

struct GeoTiffWriteOptions {
  /// Internal tile edge in pixels; 0 writes strips.
  int block_size = 256;
  bool deflate = false;
};

/// Writes a band-interleaved image. `samples8` is used for 8-bit metadata and
/// `samples16` for 16-bit; the other must be empty.
void write_geotiff(const std::filesystem::path& path, const RasterMeta& meta,
                   std::span<const std::uint8_t> samples8,
                   std::span<const std::uint16_t> samples16,
                   const GeoTiffWriteOptions& options = {});

/// Single-band numeric grid, e.g. an indicator layer. Any integer or float
/// sample type is widened to double.
struct ScalarGrid {
  std::int64_t width = 0;
  std::int64_t height = 0;
  Affine transform;
  Crs crs = Crs::wgs84();
  std::vector<double> values;  // row-major
  std::optional<double> nodata;

  double at(std::int64_t row, std::int64_t col) const {
    return values[static_cast<std::size_t>(row * width + col)];
  }
};

/// Reads band 1 of a GeoTIFF.
ScalarGrid read_scalar_geotiff(const std::filesystem::path& path);
/// Writes a float32 GeoTIFF in strips.
void write_scalar_geotiff(const std::filesystem::path& path, const ScalarGrid& grid);

}  // namespace oddmap
