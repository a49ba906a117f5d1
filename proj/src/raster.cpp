#include "oddmap/raster.hpp"

#include <tiffio.h>

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <list>
#include <mutex>
#include <string>
#include <unordered_map>

#include "oddmap/error.hpp"

namespace oddmap {
namespace {

constexpr ttag_t kTagPixelScale = 33550;
constexpr ttag_t kTagTiepoint = 33922;
constexpr ttag_t kTagTransformation = 34264;
constexpr ttag_t kTagGeoKeys = 34735;
constexpr ttag_t kTagGeoDoubles = 34736;
constexpr ttag_t kTagGeoAscii = 34737;
constexpr ttag_t kTagGdalNodata = 42113;

constexpr unsigned short kKeyModelType = 1024;
constexpr unsigned short kKeyRasterType = 1025;
constexpr unsigned short kKeyGeographicType = 2048;
constexpr unsigned short kKeyProjectedType = 3072;
constexpr unsigned short kKeyProjLinearUnits = 3076;
constexpr unsigned short kLinearMeter = 9001;

// TIFFFieldInfo's name member is non-const char* in libtiff's API.
char kNamePixelScale[] = "ModelPixelScaleTag";
char kNameTiepoint[] = "ModelTiepointTag";
char kNameTransformation[] = "ModelTransformationTag";
char kNameGeoKeys[] = "GeoKeyDirectoryTag";
char kNameGeoDoubles[] = "GeoDoubleParamsTag";
char kNameGeoAscii[] = "GeoAsciiParamsTag";
char kNameGdalNodata[] = "GDALNoDataValue";

const TIFFFieldInfo kGeoFields[] = {
    {kTagPixelScale, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, kNamePixelScale},
    {kTagTiepoint, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, kNameTiepoint},
    {kTagTransformation, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, kNameTransformation},
    {kTagGeoKeys, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, kNameGeoKeys},
    {kTagGeoDoubles, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, kNameGeoDoubles},
    {kTagGeoAscii, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, kNameGeoAscii},
    {kTagGdalNodata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, kNameGdalNodata},
};

TIFFExtendProc g_parent_extender = nullptr;

void geotiff_extender(TIFF* tif) {
  TIFFMergeFieldInfo(tif, kGeoFields, sizeof(kGeoFields) / sizeof(kGeoFields[0]));
  if (g_parent_extender) g_parent_extender(tif);
}

thread_local std::string t_last_tiff_error;

void tiff_error_handler(const char* module, const char* fmt, va_list ap) {
  char buf[512];
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  t_last_tiff_error = std::string(module ? module : "libtiff") + ": " + buf;
}

void tiff_warning_handler(const char*, const char*, va_list) {}

void install_tiff_hooks() {
  static std::once_flag once;
  std::call_once(once, [] {
    g_parent_extender = TIFFSetTagExtender(geotiff_extender);
    TIFFSetErrorHandler(tiff_error_handler);
    TIFFSetWarningHandler(tiff_warning_handler);
  });
}

struct TiffCloser {
  void operator()(TIFF* t) const {
    if (t) TIFFClose(t);
  }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

std::string tiff_error(const std::string& context) {
  std::string msg = context;
  if (!t_last_tiff_error.empty()) msg += " (" + t_last_tiff_error + ")";
  t_last_tiff_error.clear();
  return msg;
}

struct GeoKey {
  unsigned short id = 0;
  unsigned short value = 0;
};

std::vector<GeoKey> read_geokeys(TIFF* tif) {
  std::uint16_t count = 0;
  std::uint16_t* data = nullptr;
  std::vector<GeoKey> keys;
  if (!TIFFGetField(tif, kTagGeoKeys, &count, &data) || count < 4) return keys;
  const std::size_t n = data[3];
  for (std::size_t k = 0; k < n && 4 + 4 * k + 3 < count; ++k) {
    const auto* entry = data + 4 + 4 * k;
    // Only inline SHORT values are needed for the keys consumed here.
    if (entry[1] == 0) keys.push_back({entry[0], entry[3]});
  }
  return keys;
}

std::optional<unsigned short> find_key(const std::vector<GeoKey>& keys, unsigned short id) {
  for (const auto& k : keys)
    if (k.id == id) return k.value;
  return std::nullopt;
}

void read_georeferencing(TIFF* tif, const std::string& where, Crs& crs, Affine& transform) {
  const auto keys = read_geokeys(tif);
  const auto model = find_key(keys, kKeyModelType);
  if (!model) fail(ErrorKind::Validation, where + "missing GeoTIFF georeferencing keys");
  if (*model == 2) {
    const auto code = find_key(keys, kKeyGeographicType).value_or(4326);
    if (code != 4326) fail(ErrorKind::Validation, where + "unsupported geographic CRS EPSG:" + std::to_string(code));
    crs = Crs::wgs84();
  } else if (*model == 1) {
    const auto code = find_key(keys, kKeyProjectedType);
    if (!code || *code == 32767) fail(ErrorKind::Validation, where + "user-defined projections are not supported");
    const auto units = find_key(keys, kKeyProjLinearUnits);
    crs = Crs::projected(*code, !units || *units == kLinearMeter);
  } else {
    fail(ErrorKind::Validation, where + "unsupported GeoTIFF model type " + std::to_string(*model));
  }
  const bool pixel_is_point = find_key(keys, kKeyRasterType).value_or(1) == 2;

  std::uint16_t n = 0;
  double* values = nullptr;
  if (TIFFGetField(tif, kTagTransformation, &n, &values) && n >= 16) {
    transform = Affine{{values[3], values[0], values[1], values[7], values[4], values[5]}};
  } else {
    std::uint16_t ns = 0, nt = 0;
    double* scale = nullptr;
    double* tie = nullptr;
    if (!TIFFGetField(tif, kTagPixelScale, &ns, &scale) || ns < 2 ||
        !TIFFGetField(tif, kTagTiepoint, &nt, &tie) || nt < 6) {
      fail(ErrorKind::Validation, where + "missing pixel scale / tiepoint tags");
    }
    transform = Affine{{tie[3] - tie[0] * scale[0], scale[0], 0.0, tie[4] + tie[1] * scale[1], 0.0, -scale[1]}};
  }
  if (pixel_is_point) {
    transform.c[0] -= 0.5 * (transform.c[1] + transform.c[2]);
    transform.c[3] -= 0.5 * (transform.c[4] + transform.c[5]);
  }
}

void write_georeferencing(TIFF* t, const Crs& crs, const Affine& transform) {
  const auto& c = transform.c;
  if (transform.north_up()) {
    double scale[3] = {c[1], -c[5], 0.0};
    double tie[6] = {0.0, 0.0, 0.0, c[0], c[3], 0.0};
    TIFFSetField(t, kTagPixelScale, 3, scale);
    TIFFSetField(t, kTagTiepoint, 6, tie);
  } else {
    double m[16] = {c[1], c[2], 0, c[0], c[4], c[5], 0, c[3], 0, 0, 0, 0, 0, 0, 0, 1};
    TIFFSetField(t, kTagTransformation, 16, m);
  }
  std::vector<std::uint16_t> keys = {1, 1, 0, 0};
  auto add_key = [&](std::uint16_t id, std::uint16_t value) {
    keys.insert(keys.end(), {id, 0, 1, value});
    ++keys[3];
  };
  add_key(kKeyModelType, crs.geographic() ? 2 : 1);
  add_key(kKeyRasterType, 1);
  if (crs.geographic()) {
    add_key(kKeyGeographicType, static_cast<std::uint16_t>(crs.epsg));
  } else {
    add_key(kKeyProjectedType, static_cast<std::uint16_t>(crs.epsg));
    if (crs.metric) add_key(kKeyProjLinearUnits, kLinearMeter);
  }
  TIFFSetField(t, kTagGeoKeys, static_cast<int>(keys.size()), keys.data());
}

}  // namespace

bool Affine::invertible() const noexcept {
  const double det = determinant();
  return std::isfinite(det) && std::abs(det) > 1e-300;
}

Affine Affine::inverse() const {
  if (!invertible()) fail(ErrorKind::Geometry, "singular raster transform");
  const double det = determinant();
  const double a = c[1], b = c[2], d = c[4], e = c[5];
  Affine inv;
  inv.c[1] = e / det;
  inv.c[2] = -b / det;
  inv.c[4] = -d / det;
  inv.c[5] = a / det;
  inv.c[0] = -(inv.c[1] * c[0] + inv.c[2] * c[3]);
  inv.c[3] = -(inv.c[4] * c[0] + inv.c[5] * c[3]);
  return inv;
}

std::array<Point, 4> RasterMeta::footprint() const {
  const auto w = static_cast<double>(width_px);
  const auto h = static_cast<double>(height_px);
  return {transform.apply(0, 0), transform.apply(w, 0), transform.apply(w, h), transform.apply(0, h)};
}

Rect RasterMeta::bounds() const {
  const auto fp = footprint();
  Rect r{fp[0].x, fp[0].y, fp[0].x, fp[0].y};
  for (const auto& p : fp) {
    r.min_x = std::min(r.min_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_x = std::max(r.max_x, p.x);
    r.max_y = std::max(r.max_y, p.y);
  }
  return r;
}

double ground_sampling_distance(const Affine& t, const Crs& crs, Point center) {
  if (!crs.geographic()) {
    return std::sqrt(std::abs(t.determinant()));
  }
  const Crs utm = utm_crs_for(center.x, center.y);
  const Point o = geographic_to_utm(center, utm);
  const Point px = geographic_to_utm({center.x + t.c[1], center.y + t.c[4]}, utm);
  const Point py = geographic_to_utm({center.x + t.c[2], center.y + t.c[5]}, utm);
  const double ux = px.x - o.x, uy = px.y - o.y;
  const double vx = py.x - o.x, vy = py.y - o.y;
  return std::sqrt(std::abs(ux * vy - uy * vx));
}

void validate(const RasterMeta& meta) {
  if (meta.width_px < 1 || meta.height_px < 1) fail(ErrorKind::Validation, "raster has no pixels");
  if (!meta.transform.invertible()) fail(ErrorKind::Validation, "raster transform is not invertible");
  if (!(meta.gsd_m > 0.0)) fail(ErrorKind::Validation, "raster GSD must be positive");
  if (meta.band_count < 1) fail(ErrorKind::Validation, "raster has no bands");
  if (meta.bits_per_sample != 8 && meta.bits_per_sample != 16) {
    fail(ErrorKind::Validation, "unsupported bit depth " + std::to_string(meta.bits_per_sample));
  }
}

std::int64_t PixelBlock::valid_count() const {
  return static_cast<std::int64_t>(std::count(nodata_mask.begin(), nodata_mask.end(), std::uint8_t{0}));
}

struct RasterDataset::Impl {
  std::filesystem::path path;
  RasterMeta meta;
  TiffHandle tif;
  bool tiled = false;
  std::uint32_t chunk_w = 0;  // pixels
  std::uint32_t chunk_h = 0;
  std::uint32_t chunks_across = 1;
  std::size_t chunk_bytes = 0;
  std::size_t cache_capacity = 0;  // chunks

  mutable std::mutex mutex;
  using Chunk = std::shared_ptr<const std::vector<std::uint8_t>>;
  mutable std::list<std::uint32_t> lru;
  mutable std::unordered_map<std::uint32_t, std::pair<Chunk, std::list<std::uint32_t>::iterator>> cache;

  Chunk chunk(std::uint32_t index) const {
    if (auto it = cache.find(index); it != cache.end()) {
      lru.splice(lru.begin(), lru, it->second.second);
      return it->second.first;
    }
    auto buf = std::make_shared<std::vector<std::uint8_t>>(chunk_bytes);
    const tmsize_t got = tiled ? TIFFReadEncodedTile(tif.get(), index, buf->data(), static_cast<tmsize_t>(chunk_bytes))
                               : TIFFReadEncodedStrip(tif.get(), index, buf->data(), static_cast<tmsize_t>(chunk_bytes));
    if (got < 0) {
      fail(ErrorKind::Io, tiff_error("decode failed for " + std::string(tiled ? "tile " : "strip ") +
                                     std::to_string(index) + " of " + path.string()));
    }
    lru.push_front(index);
    cache.emplace(index, std::make_pair(Chunk(buf), lru.begin()));
    while (cache.size() > cache_capacity) {
      cache.erase(lru.back());
      lru.pop_back();
    }
    return buf;
  }
};

RasterDataset::RasterDataset(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
RasterDataset::RasterDataset(RasterDataset&&) noexcept = default;
RasterDataset& RasterDataset::operator=(RasterDataset&&) noexcept = default;
RasterDataset::~RasterDataset() = default;

const RasterMeta& RasterDataset::meta() const noexcept { return impl_->meta; }
const std::filesystem::path& RasterDataset::path() const noexcept { return impl_->path; }

RasterDataset RasterDataset::open(const std::filesystem::path& path, std::size_t cache_bytes) {
  install_tiff_hooks();
  TiffHandle tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) fail(ErrorKind::Io, tiff_error("cannot open GeoTIFF " + path.string()));

  auto impl = std::make_unique<Impl>();
  impl->path = path;
  auto& meta = impl->meta;

  std::uint32_t width = 0, height = 0;
  std::uint16_t spp = 1, bps = 8, planar = PLANARCONFIG_CONTIG, sample_format = SAMPLEFORMAT_UINT;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &sample_format);
  const std::string where = path.string() + ": ";
  if (planar != PLANARCONFIG_CONTIG) fail(ErrorKind::Validation, where + "band-separate layout is not supported");
  if (sample_format != SAMPLEFORMAT_UINT) fail(ErrorKind::Validation, where + "only unsigned integer samples are supported");
  if (bps != 8 && bps != 16) fail(ErrorKind::Validation, where + "unsupported bit depth " + std::to_string(bps));
  if (spp < 1 || spp > 4) fail(ErrorKind::Validation, where + "expected 1-4 bands, found " + std::to_string(spp));

  meta.width_px = width;
  meta.height_px = height;
  meta.band_count = spp;
  meta.bits_per_sample = bps;

  std::uint16_t extra_count = 0;
  std::uint16_t* extra = nullptr;
  if (TIFFGetField(tif.get(), TIFFTAG_EXTRASAMPLES, &extra_count, &extra)) {
    for (std::uint16_t i = 0; i < extra_count; ++i) {
      if (extra[i] == EXTRASAMPLE_ASSOCALPHA || extra[i] == EXTRASAMPLE_UNASSALPHA) {
        meta.alpha_band = spp - extra_count + i;
        break;
      }
    }
  }

  char* nodata_text = nullptr;
  if (TIFFGetField(tif.get(), kTagGdalNodata, &nodata_text) && nodata_text) {
    try {
      meta.nodata = std::stod(nodata_text);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, where + "unreadable nodata value '" + std::string(nodata_text) + "'");
    }
  }

  read_georeferencing(tif.get(), where, meta.crs, meta.transform);
  const Point center = meta.transform.apply(width / 2.0, height / 2.0);
  if (!meta.transform.invertible()) fail(ErrorKind::Validation, where + "raster transform is not invertible");
  meta.gsd_m = ground_sampling_distance(meta.transform, meta.crs, center);
  validate(meta);

  impl->tiled = TIFFIsTiled(tif.get()) != 0;
  if (impl->tiled) {
    TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &impl->chunk_w);
    TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &impl->chunk_h);
    impl->chunk_bytes = static_cast<std::size_t>(TIFFTileSize(tif.get()));
    impl->chunks_across = (width + impl->chunk_w - 1) / impl->chunk_w;
  } else {
    std::uint32_t rows_per_strip = height;
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_ROWSPERSTRIP, &rows_per_strip);
    impl->chunk_w = width;
    impl->chunk_h = std::min(rows_per_strip, height);
    impl->chunk_bytes = static_cast<std::size_t>(TIFFStripSize(tif.get()));
    impl->chunks_across = 1;
  }
  if (impl->chunk_w == 0 || impl->chunk_h == 0 || impl->chunk_bytes == 0) {
    fail(ErrorKind::Validation, where + "invalid strip/tile layout");
  }
  impl->cache_capacity = std::max<std::size_t>(4, cache_bytes / impl->chunk_bytes);
  impl->tif = std::move(tif);
  return RasterDataset(std::move(impl));
}

PixelBlock RasterDataset::read_window(const PixelWindow& w) const {
  const auto& meta = impl_->meta;
  if (w.empty()) fail(ErrorKind::Geometry, "empty pixel window");
  if (w.row_off < 0 || w.col_off < 0 || w.row_off + w.height > meta.height_px ||
      w.col_off + w.width > meta.width_px) {
    fail(ErrorKind::Geometry, "window (" + std::to_string(w.row_off) + "," + std::to_string(w.col_off) + "," +
                                  std::to_string(w.height) + "," + std::to_string(w.width) +
                                  ") exceeds raster extent " + std::to_string(meta.height_px) + "x" +
                                  std::to_string(meta.width_px));
  }
  PixelBlock block;
  block.window = w;
  block.height = w.height;
  block.width = w.width;
  block.bands = meta.band_count;
  block.bits_per_sample = meta.bits_per_sample;
  const int bands = meta.band_count;
  const std::size_t bytes_per_sample = meta.bits_per_sample / 8;
  block.samples.resize(static_cast<std::size_t>(w.height * w.width * bands));

  const auto cw = static_cast<std::int64_t>(impl_->chunk_w);
  const auto ch = static_cast<std::int64_t>(impl_->chunk_h);
  const std::size_t chunk_row_bytes = static_cast<std::size_t>(cw) * bands * bytes_per_sample;

  std::lock_guard lock(impl_->mutex);
  for (std::int64_t cy = w.row_off / ch; cy * ch < w.row_off + w.height; ++cy) {
    for (std::int64_t cx = w.col_off / cw; cx * cw < w.col_off + w.width; ++cx) {
      const auto index = static_cast<std::uint32_t>(cy * impl_->chunks_across + cx);
      const auto chunk = impl_->chunk(index);
      const std::int64_t r0 = std::max(w.row_off, cy * ch);
      const std::int64_t r1 = std::min(w.row_off + w.height, (cy + 1) * ch);
      const std::int64_t c0 = std::max(w.col_off, cx * cw);
      const std::int64_t c1 = std::min(w.col_off + w.width, (cx + 1) * cw);
      for (std::int64_t r = r0; r < r1; ++r) {
        const std::uint8_t* src = chunk->data() + static_cast<std::size_t>(r - cy * ch) * chunk_row_bytes +
                                  static_cast<std::size_t>(c0 - cx * cw) * bands * bytes_per_sample;
        std::uint16_t* dst = block.samples.data() +
                             static_cast<std::size_t>(((r - w.row_off) * w.width + (c0 - w.col_off)) * bands);
        const std::size_t n = static_cast<std::size_t>((c1 - c0) * bands);
        if (bytes_per_sample == 1) {
          for (std::size_t i = 0; i < n; ++i) dst[i] = src[i];
        } else {
          std::memcpy(dst, src, n * 2);  // libtiff delivers host byte order
        }
      }
    }
  }

  const auto pixels = static_cast<std::size_t>(w.height * w.width);
  block.nodata_mask.assign(pixels, 0);
  if (!meta.alpha_band && !meta.nodata) return block;
  const int color_bands = std::min(bands, meta.alpha_band ? *meta.alpha_band : bands);
  const bool have_nodata = meta.nodata.has_value();
  const double nodata = meta.nodata.value_or(0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::uint16_t* px = block.samples.data() + p * bands;
    bool masked = false;
    if (meta.alpha_band && px[*meta.alpha_band] == 0) masked = true;
    if (!masked && have_nodata && color_bands > 0) {
      masked = true;
      for (int b = 0; b < color_bands; ++b) {
        if (static_cast<double>(px[b]) != nodata) {
          masked = false;
          break;
        }
      }
    }
    block.nodata_mask[p] = masked ? 1 : 0;
  }
  return block;
}

void write_geotiff(const std::filesystem::path& path, const RasterMeta& meta,
                   std::span<const std::uint8_t> samples8, std::span<const std::uint16_t> samples16,
                   const GeoTiffWriteOptions& options) {
  install_tiff_hooks();
  if (meta.width_px < 1 || meta.height_px < 1 || meta.band_count < 1 || meta.band_count > 4) {
    fail(ErrorKind::Validation, "invalid raster dimensions for " + path.string());
  }
  const bool eight = meta.bits_per_sample == 8;
  if (!eight && meta.bits_per_sample != 16) fail(ErrorKind::Validation, "unsupported bit depth");
  const auto expected = static_cast<std::size_t>(meta.width_px * meta.height_px * meta.band_count);
  if ((eight ? samples8.size() : samples16.size()) != expected) {
    fail(ErrorKind::Validation, "sample buffer does not match raster dimensions");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  TiffHandle tif(TIFFOpen(path.c_str(), "w"));
  if (!tif) fail(ErrorKind::Io, tiff_error("cannot create " + path.string()));
  TIFF* t = tif.get();
  const auto width = static_cast<std::uint32_t>(meta.width_px);
  const auto height = static_cast<std::uint32_t>(meta.height_px);
  const auto bands = static_cast<std::uint16_t>(meta.band_count);
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, width);
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, height);
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, bands);
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, static_cast<std::uint16_t>(meta.bits_per_sample));
  TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_UINT);
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, bands >= 3 ? PHOTOMETRIC_RGB : PHOTOMETRIC_MINISBLACK);
  TIFFSetField(t, TIFFTAG_COMPRESSION, options.deflate ? COMPRESSION_ADOBE_DEFLATE : COMPRESSION_NONE);
  const int base_bands = bands >= 3 ? 3 : 1;
  if (bands > base_bands) {
    std::vector<std::uint16_t> extra(bands - base_bands, EXTRASAMPLE_UNSPECIFIED);
    if (meta.alpha_band && *meta.alpha_band >= base_bands) {
      extra[*meta.alpha_band - base_bands] = EXTRASAMPLE_UNASSALPHA;
    }
    TIFFSetField(t, TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()), extra.data());
  }

  write_georeferencing(t, meta.crs, meta.transform);
  std::string nodata_text;
  if (meta.nodata) {
    nodata_text = std::to_string(static_cast<long long>(*meta.nodata));
    if (static_cast<double>(static_cast<long long>(*meta.nodata)) != *meta.nodata) {
      nodata_text = std::to_string(*meta.nodata);
    }
    TIFFSetField(t, kTagGdalNodata, nodata_text.c_str());
  }

  const std::size_t bps = eight ? 1 : 2;
  const std::size_t row_bytes = static_cast<std::size_t>(width) * bands * bps;
  const auto* base = eight ? static_cast<const std::uint8_t*>(samples8.data())
                           : reinterpret_cast<const std::uint8_t*>(samples16.data());

  if (options.block_size > 0) {
    const auto tile = static_cast<std::uint32_t>((options.block_size + 15) / 16 * 16);
    TIFFSetField(t, TIFFTAG_TILEWIDTH, tile);
    TIFFSetField(t, TIFFTAG_TILELENGTH, tile);
    const std::size_t tile_row_bytes = static_cast<std::size_t>(tile) * bands * bps;
    std::vector<std::uint8_t> buf(tile_row_bytes * tile);
    for (std::uint32_t ty = 0; ty < height; ty += tile) {
      for (std::uint32_t tx = 0; tx < width; tx += tile) {
        std::fill(buf.begin(), buf.end(), 0);
        const std::uint32_t rows = std::min(tile, height - ty);
        const std::uint32_t cols = std::min(tile, width - tx);
        for (std::uint32_t r = 0; r < rows; ++r) {
          std::memcpy(buf.data() + r * tile_row_bytes, base + (ty + r) * row_bytes + tx * bands * bps,
                      static_cast<std::size_t>(cols) * bands * bps);
        }
        const auto index = TIFFComputeTile(t, tx, ty, 0, 0);
        if (TIFFWriteEncodedTile(t, index, buf.data(), static_cast<tmsize_t>(buf.size())) < 0) {
          fail(ErrorKind::Io, tiff_error("tile write failed for " + path.string()));
        }
      }
    }
  } else {
    const std::uint32_t rows_per_strip =
        std::max<std::uint32_t>(1, static_cast<std::uint32_t>((1u << 16) / std::max<std::size_t>(1, row_bytes)));
    TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, rows_per_strip);
    for (std::uint32_t y = 0, strip = 0; y < height; y += rows_per_strip, ++strip) {
      const std::uint32_t rows = std::min(rows_per_strip, height - y);
      if (TIFFWriteEncodedStrip(t, strip, const_cast<std::uint8_t*>(base + y * row_bytes),
                                static_cast<tmsize_t>(rows * row_bytes)) < 0) {
        fail(ErrorKind::Io, tiff_error("strip write failed for " + path.string()));
      }
    }
  }
  if (!TIFFWriteDirectory(t)) fail(ErrorKind::Io, tiff_error("directory write failed for " + path.string()));
}

}  // namespace oddmap

namespace oddmap {
namespace {

double sample_at(const std::uint8_t* p, std::uint16_t format, std::uint16_t bps) {
  switch (format) {
    case SAMPLEFORMAT_IEEEFP:
      if (bps == 32) {
        float v;
        std::memcpy(&v, p, 4);
        return v;
      } else {
        double v;
        std::memcpy(&v, p, 8);
        return v;
      }
    case SAMPLEFORMAT_INT:
      if (bps == 8) return static_cast<std::int8_t>(*p);
      if (bps == 16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        return v;
      } else {
        std::int32_t v;
        std::memcpy(&v, p, 4);
        return v;
      }
    default:
      if (bps == 8) return *p;
      if (bps == 16) {
        std::uint16_t v;
        std::memcpy(&v, p, 2);
        return v;
      } else {
        std::uint32_t v;
        std::memcpy(&v, p, 4);
        return v;
      }
  }
}

}  // namespace

ScalarGrid read_scalar_geotiff(const std::filesystem::path& path) {
  install_tiff_hooks();
  TiffHandle tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) fail(ErrorKind::Io, tiff_error("cannot open GeoTIFF " + path.string()));
  TIFF* t = tif.get();
  const std::string where = path.string() + ": ";
  std::uint32_t width = 0, height = 0;
  std::uint16_t spp = 1, bps = 8, planar = PLANARCONFIG_CONTIG, format = SAMPLEFORMAT_UINT;
  TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(t, TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &planar);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &format);
  const bool float_ok = format == SAMPLEFORMAT_IEEEFP && (bps == 32 || bps == 64);
  const bool int_ok = (format == SAMPLEFORMAT_UINT || format == SAMPLEFORMAT_INT) && (bps == 8 || bps == 16 || bps == 32);
  if (!float_ok && !int_ok) fail(ErrorKind::Validation, where + "unsupported sample type");
  if (planar != PLANARCONFIG_CONTIG && spp > 1) fail(ErrorKind::Validation, where + "band-separate layout is not supported");
  if (width == 0 || height == 0) fail(ErrorKind::Validation, where + "empty raster");

  ScalarGrid grid;
  grid.width = width;
  grid.height = height;
  read_georeferencing(t, where, grid.crs, grid.transform);
  char* nodata_text = nullptr;
  if (TIFFGetField(t, kTagGdalNodata, &nodata_text) && nodata_text) {
    try {
      grid.nodata = std::stod(nodata_text);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, where + "unreadable nodata value '" + std::string(nodata_text) + "'");
    }
  }

  grid.values.assign(static_cast<std::size_t>(width) * height, 0.0);
  const std::size_t sample_bytes = bps / 8;
  const std::size_t pixel_bytes = sample_bytes * spp;
  if (TIFFIsTiled(t)) {
    std::uint32_t tw = 0, th = 0;
    TIFFGetField(t, TIFFTAG_TILEWIDTH, &tw);
    TIFFGetField(t, TIFFTAG_TILELENGTH, &th);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(TIFFTileSize(t)));
    for (std::uint32_t ty = 0; ty < height; ty += th) {
      for (std::uint32_t tx = 0; tx < width; tx += tw) {
        if (TIFFReadTile(t, buf.data(), tx, ty, 0, 0) < 0) fail(ErrorKind::Io, tiff_error(where + "tile decode failed"));
        for (std::uint32_t r = 0; r < th && ty + r < height; ++r) {
          for (std::uint32_t c = 0; c < tw && tx + c < width; ++c) {
            grid.values[static_cast<std::size_t>(ty + r) * width + tx + c] =
                sample_at(buf.data() + (static_cast<std::size_t>(r) * tw + c) * pixel_bytes, format, bps);
          }
        }
      }
    }
  } else {
    std::uint32_t rows_per_strip = height;
    TIFFGetFieldDefaulted(t, TIFFTAG_ROWSPERSTRIP, &rows_per_strip);
    rows_per_strip = std::min(rows_per_strip, height);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(TIFFStripSize(t)));
    for (std::uint32_t y = 0, strip = 0; y < height; y += rows_per_strip, ++strip) {
      if (TIFFReadEncodedStrip(t, strip, buf.data(), static_cast<tmsize_t>(buf.size())) < 0) {
        fail(ErrorKind::Io, tiff_error(where + "strip decode failed"));
      }
      for (std::uint32_t r = 0; r < rows_per_strip && y + r < height; ++r) {
        for (std::uint32_t c = 0; c < width; ++c) {
          grid.values[static_cast<std::size_t>(y + r) * width + c] =
              sample_at(buf.data() + (static_cast<std::size_t>(r) * width + c) * pixel_bytes, format, bps);
        }
      }
    }
  }
  return grid;
}

void write_scalar_geotiff(const std::filesystem::path& path, const ScalarGrid& grid) {
  install_tiff_hooks();
  if (grid.width < 1 || grid.height < 1 || grid.values.size() != static_cast<std::size_t>(grid.width * grid.height)) {
    fail(ErrorKind::Validation, "invalid grid dimensions for " + path.string());
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  TiffHandle tif(TIFFOpen(path.c_str(), "w"));
  if (!tif) fail(ErrorKind::Io, tiff_error("cannot create " + path.string()));
  TIFF* t = tif.get();
  const auto width = static_cast<std::uint32_t>(grid.width);
  const auto height = static_cast<std::uint32_t>(grid.height);
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, width);
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, height);
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, static_cast<std::uint16_t>(1));
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, static_cast<std::uint16_t>(32));
  TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, static_cast<std::uint32_t>(1));
  write_georeferencing(t, grid.crs, grid.transform);
  std::string nodata_text;
  if (grid.nodata) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *grid.nodata);
    nodata_text = buf;
    TIFFSetField(t, kTagGdalNodata, nodata_text.c_str());
  }
  std::vector<float> row(width);
  for (std::uint32_t y = 0; y < height; ++y) {
    for (std::uint32_t x = 0; x < width; ++x) row[x] = static_cast<float>(grid.values[static_cast<std::size_t>(y) * width + x]);
    if (TIFFWriteEncodedStrip(t, y, row.data(), static_cast<tmsize_t>(width * sizeof(float))) < 0) {
      fail(ErrorKind::Io, tiff_error("strip write failed for " + path.string()));
    }
  }
  if (!TIFFWriteDirectory(t)) fail(ErrorKind::Io, tiff_error("directory write failed for " + path.string()));
}

}  // namespace oddmap
