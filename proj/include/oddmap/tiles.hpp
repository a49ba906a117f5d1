#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oddmap/geogrid.hpp"
#include "oddmap/raster.hpp"

namespace oddmap {

inline constexpr int kTensorSize = 128;
inline constexpr int kTensorChannels = 3;

/// Classifier input: size x size x 3, HWC interleaved, values 0..255.
struct TileTensor {
  TileId tile_id;
  PixelWindow source_window;
  int size = kTensorSize;
  std::vector<std::uint8_t> data;
  /// Fraction of non-nodata pixels in the source window.
  double valid_fraction = 1.0;
  /// Position of the tile in the list passed to extraction.
  std::size_t index = 0;

  std::span<const std::uint8_t> pixels() const { return data; }
};

/// Reads the tile's pixel window. Throws Geometry for windows outside the
/// raster and Io (naming the window) on read failure.
PixelBlock extract_tile(const RasterDataset& raster, const TileRecord& tile);

/// Nodata pixels are zero-filled; >8-bit sources are min-max scaled per
/// channel over valid pixels; the result is bilinearly resized to size x size.
/// Blocks with one band are replicated to RGB; bands past the third are dropped.
/// Throws EmptyTile when no pixel is valid.
TileTensor to_tensor(const PixelBlock& block, int size = kTensorSize);

struct SkippedTile {
  TileId tile_id;
  std::size_t index = 0;
  double valid_fraction = 0.0;
  std::string reason;  // "no_valid_pixels" | "low_valid_fraction"
};

struct TileBatch {
  std::size_t sequence = 0;
  std::vector<TileTensor> tensors;
  std::vector<SkippedTile> skipped;
  /// Input tile index range [first, last) this batch covers.
  std::size_t first_index = 0;
  std::size_t last_index = 0;
};

struct ExtractOptions {
  int size = kTensorSize;
  std::size_t batch_size = 64;
  std::size_t workers = 1;
  /// Tiles whose nodata-derived valid fraction is below this are skipped.
  /// All-nodata tiles are always skipped.
  double min_valid_fraction = 0.0;
  /// Batches buffered ahead of the consumer.
  std::size_t queue_depth = 2;
  /// First input index to process (resuming).
  std::size_t start_index = 0;
};

/// Streams tensors in input order, grouped so that each batch holds
/// `batch_size` tensors (the last may be short). Extraction runs ahead on a
/// background thread by at most `queue_depth` batches.
class BatchExtractor {
 public:
  BatchExtractor(const RasterDataset& raster, std::span<const TileRecord> tiles,
                 ExtractOptions options);
  ~BatchExtractor();
  BatchExtractor(const BatchExtractor&) = delete;
  BatchExtractor& operator=(const BatchExtractor&) = delete;

  /// Next batch, or nullopt when exhausted. Extraction errors are rethrown
  /// here with the tile id attached.
  std::optional<TileBatch> next();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience: drains a BatchExtractor.
std::vector<TileBatch> extract_batches(const RasterDataset& raster,
                                       std::span<const TileRecord> tiles,
                                       const ExtractOptions& options);

/// Writes `<region>_<row>_<col>.png` per tile and an `index.csv`
/// (region_id,row,col,file). Returns the number of images written.
std::size_t dump_tiles_png(const RasterDataset& raster, std::span<const TileRecord> tiles,
                           const std::string& region_id, const std::filesystem::path& out_dir,
                           int size = kTensorSize);

void write_png_rgb(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width,
                   int height);

}  // namespace oddmap
