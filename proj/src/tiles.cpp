#include "oddmap/tiles.hpp"

#include <png.h>

#include <algorithm>
#include <deque>
#include <exception>
#include <fstream>
#include <thread>
#include <variant>

#include "oddmap/error.hpp"
#include "oddmap/io.hpp"
#include "oddmap/kernels.hpp"
#include "oddmap/parallel.hpp"

namespace oddmap {
namespace {

std::string describe(TileId id) {
  return "tile (" + std::to_string(id.row) + "," + std::to_string(id.col) + ")";
}

std::string describe(const PixelWindow& w) {
  return "window (row_off=" + std::to_string(w.row_off) + ", col_off=" + std::to_string(w.col_off) +
         ", height=" + std::to_string(w.height) + ", width=" + std::to_string(w.width) + ")";
}

// Source pixels as interleaved u8 RGB with nodata zero-filled.
std::vector<std::uint8_t> to_rgb8(const PixelBlock& block) {
  const auto pixels = static_cast<std::size_t>(block.height * block.width);
  const int bands = block.bands;
  const int channel_band[3] = {0, bands >= 3 ? 1 : 0, bands >= 3 ? 2 : 0};
  std::vector<std::uint8_t> rgb(pixels * 3, 0);

  if (block.bits_per_sample <= 8 && bands == 3) {
    const std::uint16_t* src = block.samples.data();
    const std::uint8_t* mask = block.nodata_mask.data();
    for (std::size_t p = 0; p < pixels; ++p) {
      const std::uint8_t keep = mask[p] ? 0 : 0xFF;
      rgb[p * 3 + 0] = static_cast<std::uint8_t>(src[p * 3 + 0]) & keep;
      rgb[p * 3 + 1] = static_cast<std::uint8_t>(src[p * 3 + 1]) & keep;
      rgb[p * 3 + 2] = static_cast<std::uint8_t>(src[p * 3 + 2]) & keep;
    }
    return rgb;
  }
  if (block.bits_per_sample <= 8) {
    for (std::size_t p = 0; p < pixels; ++p) {
      if (block.nodata_mask[p]) continue;
      const std::uint16_t* px = block.samples.data() + p * bands;
      for (int c = 0; c < 3; ++c) rgb[p * 3 + c] = static_cast<std::uint8_t>(std::min<std::uint16_t>(px[channel_band[c]], 255));
    }
    return rgb;
  }

  // Deeper sources: per-channel min-max over valid pixels of this tile.
  for (int c = 0; c < 3; ++c) {
    std::uint32_t lo = 0xFFFF, hi = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (block.nodata_mask[p]) continue;
      const std::uint32_t v = block.samples[p * bands + channel_band[c]];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const std::uint32_t range = hi > lo ? hi - lo : 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (block.nodata_mask[p] || range == 0) continue;
      const std::uint32_t v = block.samples[p * bands + channel_band[c]] - lo;
      rgb[p * 3 + c] = static_cast<std::uint8_t>((v * 255u * 2u + range) / (2u * range));
    }
  }
  return rgb;
}

}  // namespace

PixelBlock extract_tile(const RasterDataset& raster, const TileRecord& tile) {
  try {
    return raster.read_window(tile.pixel_window);
  } catch (const Error& e) {
    throw Error(e.kind(), describe(tile.id) + " " + describe(tile.pixel_window) + ": " + e.what());
  }
}

TileTensor to_tensor(const PixelBlock& block, int size) {
  if (size < 1) fail(ErrorKind::Config, "tensor size must be positive");
  if (block.bands < 1) fail(ErrorKind::Validation, "pixel block has no bands");
  const auto pixels = static_cast<std::size_t>(block.height * block.width);
  if (pixels == 0 || block.nodata_mask.size() != pixels) fail(ErrorKind::Validation, "malformed pixel block");
  const auto& ks = kernels::active_kernels();
  const std::size_t valid = ks.count_zero(block.nodata_mask.data(), pixels);
  if (valid == 0) fail(ErrorKind::EmptyTile, "tile has no valid pixels");

  TileTensor t;
  t.source_window = block.window;
  t.size = size;
  t.valid_fraction = static_cast<double>(valid) / static_cast<double>(pixels);
  const auto rgb = to_rgb8(block);
  t.data.resize(static_cast<std::size_t>(size) * size * kTensorChannels);
  kernels::resize_bilinear(ks, rgb, block.height, block.width, kTensorChannels, t.data, size, size);
  return t;
}

struct BatchExtractor::Impl {
  using Item = std::variant<TileBatch, std::exception_ptr>;

  const RasterDataset& raster;
  std::span<const TileRecord> tiles;
  ExtractOptions options;
  BoundedQueue<Item> queue;
  std::thread producer;
  bool done = false;

  Impl(const RasterDataset& r, std::span<const TileRecord> t, ExtractOptions o)
      : raster(r), tiles(t), options(o), queue(o.queue_depth) {}

  struct Slot {
    std::optional<TileTensor> tensor;
    std::optional<SkippedTile> skipped;
  };

  Slot extract_one(std::size_t index) const {
    const TileRecord& tile = tiles[index];
    Slot slot;
    const PixelBlock block = extract_tile(raster, tile);
    const auto pixels = static_cast<double>(block.height * block.width);
    const double window_valid = static_cast<double>(block.valid_count()) / pixels;
    const double valid_fraction = tile.valid_fraction * window_valid;
    if (window_valid == 0.0) {
      slot.skipped = SkippedTile{tile.id, index, 0.0, "no_valid_pixels"};
      return slot;
    }
    if (valid_fraction < options.min_valid_fraction) {
      slot.skipped = SkippedTile{tile.id, index, valid_fraction, "low_valid_fraction"};
      return slot;
    }
    try {
      TileTensor tensor = to_tensor(block, options.size);
      tensor.tile_id = tile.id;
      tensor.index = index;
      tensor.valid_fraction = valid_fraction;
      slot.tensor = std::move(tensor);
    } catch (const Error& e) {
      throw Error(e.kind(), describe(tile.id) + ": " + e.what());
    }
    return slot;
  }

  void run() {
    try {
      std::deque<Slot> pending;
      std::size_t pending_tensors = 0;
      std::size_t next = options.start_index;
      std::size_t batch_first = options.start_index;
      std::size_t sequence = 0;
      const std::size_t chunk = std::max(options.batch_size, options.workers);

      auto emit = [&](bool final) -> bool {
        while (pending_tensors >= options.batch_size || (final && !pending.empty())) {
          TileBatch batch;
          batch.sequence = sequence++;
          batch.first_index = batch_first;
          while (!pending.empty() && batch.tensors.size() < options.batch_size) {
            Slot s = std::move(pending.front());
            pending.pop_front();
            if (s.tensor) {
              batch.tensors.push_back(std::move(*s.tensor));
              --pending_tensors;
            } else {
              batch.skipped.push_back(*s.skipped);
            }
          }
          // Skipped tiles directly after a full batch stay with the next batch
          // unless the stream ends here.
          if (final && pending_tensors == 0) {
            while (!pending.empty()) {
              batch.skipped.push_back(*pending.front().skipped);
              pending.pop_front();
            }
          }
          batch.last_index = batch.first_index + batch.tensors.size() + batch.skipped.size();
          batch_first = batch.last_index;
          if (!queue.push(std::move(batch))) return false;
        }
        return true;
      };

      while (next < tiles.size()) {
        const std::size_t count = std::min(chunk, tiles.size() - next);
        std::vector<Slot> slots(count);
        parallel_for(count, options.workers, [&](std::size_t i) { slots[i] = extract_one(next + i); });
        for (auto& s : slots) {
          if (s.tensor) ++pending_tensors;
          pending.push_back(std::move(s));
        }
        next += count;
        if (!emit(false)) return;
      }
      emit(true);
    } catch (...) {
      queue.push(std::current_exception());
    }
    queue.close();
  }
};

BatchExtractor::BatchExtractor(const RasterDataset& raster, std::span<const TileRecord> tiles,
                               ExtractOptions options) {
  if (options.batch_size < 1) fail(ErrorKind::Config, "batch size must be at least 1");
  if (options.size < 1) fail(ErrorKind::Config, "tensor size must be positive");
  options.workers = std::max<std::size_t>(1, options.workers);
  impl_ = std::make_unique<Impl>(raster, tiles, options);
  impl_->producer = std::thread([this] { impl_->run(); });
}

BatchExtractor::~BatchExtractor() {
  impl_->queue.close();
  if (impl_->producer.joinable()) impl_->producer.join();
}

std::optional<TileBatch> BatchExtractor::next() {
  if (impl_->done) return std::nullopt;
  auto item = impl_->queue.pop();
  if (!item) {
    impl_->done = true;
    return std::nullopt;
  }
  if (auto* error = std::get_if<std::exception_ptr>(&*item)) {
    impl_->done = true;
    std::rethrow_exception(*error);
  }
  return std::get<TileBatch>(std::move(*item));
}

std::vector<TileBatch> extract_batches(const RasterDataset& raster, std::span<const TileRecord> tiles,
                                       const ExtractOptions& options) {
  BatchExtractor extractor(raster, tiles, options);
  std::vector<TileBatch> out;
  while (auto batch = extractor.next()) out.push_back(std::move(*batch));
  return out;
}

void write_png_rgb(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width, int height) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) fail(ErrorKind::Validation, "PNG buffer size mismatch");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::Io, "cannot write " + path.string() + ": " + msg);
  }
}

std::size_t dump_tiles_png(const RasterDataset& raster, std::span<const TileRecord> tiles,
                           const std::string& region_id, const std::filesystem::path& out_dir, int size) {
  std::filesystem::create_directories(out_dir);
  std::size_t written = 0;
  io::write_atomic(out_dir / "index.csv", [&](std::ostream& index) {
    index << "region_id,row,col,file\n";
    for (const auto& tile : tiles) {
      const PixelBlock block = extract_tile(raster, tile);
      if (block.valid_count() == 0) continue;
      const TileTensor tensor = to_tensor(block, size);
      const std::string file =
          region_id + "_" + std::to_string(tile.id.row) + "_" + std::to_string(tile.id.col) + ".png";
      write_png_rgb(out_dir / file, tensor.data, size, size);
      index << region_id << ',' << tile.id.row << ',' << tile.id.col << ',' << file << '\n';
      ++written;
    }
  });
  return written;
}

}  // namespace oddmap
