#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>

#include "oddmap/raster.hpp"

namespace oddmap::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("oddmap-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// North-up 8-bit RGB raster in UTM 37S with the given pixel size.
inline RasterMeta utm_meta(std::int64_t width, std::int64_t height, double gsd, int bands = 3,
                           Point origin = {530000.0, 9240000.0}) {
  RasterMeta m;
  m.width_px = width;
  m.height_px = height;
  m.transform = Affine::north_up(origin.x, origin.y, gsd, gsd);
  m.crs = Crs::utm(37, true);
  m.gsd_m = gsd;
  m.band_count = bands;
  m.bits_per_sample = 8;
  return m;
}

inline std::vector<std::uint8_t> noise(std::size_t n, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(gen() & 0xFF);
  return v;
}

}  // namespace oddmap::test
