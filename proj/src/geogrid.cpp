#include "oddmap/geogrid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>

#include "oddmap/csv.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"

namespace oddmap {
namespace {

// Shortest text that parses back to the same double; the frame is rebuilt
// from these lines, so fixed decimals would shift every tile edge.
std::string exact(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

constexpr int kEdgeDensify = 32;

double polygon_area(const std::vector<Point>& poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

// Sutherland-Hodgman clip of `poly` against one half-plane.
template <typename Inside, typename Cross>
std::vector<Point> clip_edge(const std::vector<Point>& poly, Inside inside, Cross cross) {
  std::vector<Point> out;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point& cur = poly[i];
    const Point& prev = poly[(i + n - 1) % n];
    const bool in_cur = inside(cur);
    const bool in_prev = inside(prev);
    if (in_cur) {
      if (!in_prev) out.push_back(cross(prev, cur));
      out.push_back(cur);
    } else if (in_prev) {
      out.push_back(cross(prev, cur));
    }
  }
  return out;
}

double clipped_area(const std::vector<Point>& poly, const Rect& r) {
  auto at_x = [](double x) {
    return [x](const Point& a, const Point& b) {
      const double t = (x - a.x) / (b.x - a.x);
      return Point{x, a.y + t * (b.y - a.y)};
    };
  };
  auto at_y = [](double y) {
    return [y](const Point& a, const Point& b) {
      const double t = (y - a.y) / (b.y - a.y);
      return Point{a.x + t * (b.x - a.x), y};
    };
  };
  auto p = clip_edge(poly, [&](const Point& q) { return q.x >= r.min_x; }, at_x(r.min_x));
  p = clip_edge(p, [&](const Point& q) { return q.x <= r.max_x; }, at_x(r.max_x));
  p = clip_edge(p, [&](const Point& q) { return q.y >= r.min_y; }, at_y(r.min_y));
  p = clip_edge(p, [&](const Point& q) { return q.y <= r.max_y; }, at_y(r.max_y));
  return p.size() < 3 ? 0.0 : polygon_area(p);
}

double distance_to_segment(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

// Even-odd containment with boundary points (within tol) counted inside.
bool inside_or_on(const std::vector<Point>& poly, Point p, double tol) {
  bool in = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if (distance_to_segment(p, a, b) <= tol) return true;
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

bool is_axis_rect(const std::vector<Point>& poly, Rect& out) {
  if (poly.size() != 4) return false;
  Rect r{poly[0].x, poly[0].y, poly[0].x, poly[0].y};
  for (const auto& p : poly) {
    r.min_x = std::min(r.min_x, p.x);
    r.max_x = std::max(r.max_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_y = std::max(r.max_y, p.y);
  }
  for (const auto& p : poly) {
    if ((p.x != r.min_x && p.x != r.max_x) || (p.y != r.min_y && p.y != r.max_y)) return false;
  }
  out = r;
  return true;
}

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-6 ? r : v;
}

bool wgs84_transformable(const Crs& crs) { return crs.geographic() || crs.is_utm(); }

}  // namespace

Rect GridFrame::bounds_of(TileId id) const {
  // Edges come from the lattice index so neighbours share them bit-exactly.
  auto x = [&](std::int64_t c) { return anchor.x + static_cast<double>(c) * tile_size_m; };
  auto y = [&](std::int64_t r) { return anchor.y - static_cast<double>(r) * tile_size_m; };
  return {x(id.col), y(id.row + 1), x(id.col + 1), y(id.row)};
}

TileId GridFrame::tile_at(Point p) const {
  return {static_cast<std::int64_t>(std::floor((anchor.y - p.y) / tile_size_m)),
          static_cast<std::int64_t>(std::floor((p.x - anchor.x) / tile_size_m))};
}

Crs choose_working_crs(const RasterMeta& meta) {
  if (!meta.crs.geographic()) {
    if (!meta.crs.metric) fail(ErrorKind::Config, meta.crs.name() + " is projected but not metric");
    return meta.crs;
  }
  if (meta.width_px < 1 || meta.height_px < 1 || !meta.transform.invertible()) {
    fail(ErrorKind::Geometry, "raster extent is degenerate; centroid undefined");
  }
  const Point c = meta.transform.apply(meta.width_px / 2.0, meta.height_px / 2.0);
  if (!std::isfinite(c.x) || !std::isfinite(c.y)) fail(ErrorKind::Geometry, "raster centroid undefined");
  return utm_crs_for(c.x, c.y);
}

std::vector<Point> footprint_in(const RasterMeta& meta, const Crs& crs) {
  const auto corners = meta.footprint();
  if (meta.crs == crs) return {corners.begin(), corners.end()};
  std::vector<Point> poly;
  poly.reserve(4 * kEdgeDensify);
  for (int e = 0; e < 4; ++e) {
    const Point a = corners[e];
    const Point b = corners[(e + 1) % 4];
    for (int k = 0; k < kEdgeDensify; ++k) {
      const double t = static_cast<double>(k) / kEdgeDensify;
      poly.push_back(transform({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}, meta.crs, crs));
    }
  }
  return poly;
}

PixelWindow tile_to_window(const Rect& b, const Crs& frame_crs, const RasterMeta& meta) {
  const Affine inv = meta.transform.inverse();
  std::vector<Point> probe = {{b.min_x, b.max_y}, {b.max_x, b.max_y}, {b.max_x, b.min_y}, {b.min_x, b.min_y}};
  if (!(frame_crs == meta.crs)) {
    const double mx = 0.5 * (b.min_x + b.max_x), my = 0.5 * (b.min_y + b.max_y);
    probe.insert(probe.end(), {{mx, b.max_y}, {b.max_x, my}, {mx, b.min_y}, {b.min_x, my}});
    for (auto& p : probe) p = transform(p, frame_crs, meta.crs);
  }
  double c0 = INFINITY, c1 = -INFINITY, r0 = INFINITY, r1 = -INFINITY;
  for (const auto& p : probe) {
    const Point px = inv.apply(p.x, p.y);
    c0 = std::min(c0, snap(px.x));
    c1 = std::max(c1, snap(px.x));
    r0 = std::min(r0, snap(px.y));
    r1 = std::max(r1, snap(px.y));
  }
  const auto col0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c0)));
  const auto col1 = std::min<std::int64_t>(meta.width_px, static_cast<std::int64_t>(std::ceil(c1)));
  const auto row0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(r0)));
  const auto row1 = std::min<std::int64_t>(meta.height_px, static_cast<std::int64_t>(std::ceil(r1)));
  if (col1 <= col0 || row1 <= row0) {
    fail(ErrorKind::Geometry, "tile does not intersect the raster footprint (empty window)");
  }
  return {row0, col0, row1 - row0, col1 - col0};
}

Grid make_grid(const RasterMeta& meta, const GridSpec& spec) {
  if (!(spec.tile_size_m > 0.0) || !std::isfinite(spec.tile_size_m)) {
    fail(ErrorKind::Config, "tile size must be positive");
  }
  const Crs working = spec.working_crs ? *spec.working_crs : choose_working_crs(meta);
  if (working.geographic() || !working.metric) {
    fail(ErrorKind::Config, "working CRS " + working.name() + " is not metric");
  }
  const double ts = spec.tile_size_m;
  const auto footprint = footprint_in(meta, working);
  Rect fp{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const auto& p : footprint) {
    fp.min_x = std::min(fp.min_x, p.x);
    fp.max_x = std::max(fp.max_x, p.x);
    fp.min_y = std::min(fp.min_y, p.y);
    fp.max_y = std::max(fp.max_y, p.y);
  }
  if (fp.empty()) fail(ErrorKind::Geometry, "raster footprint is empty");

  Grid grid;
  grid.frame.crs = working;
  grid.frame.tile_size_m = ts;
  grid.frame.anchor = spec.origin ? *spec.origin
                                  : Point{std::floor(fp.min_x / ts) * ts, std::ceil(fp.max_y / ts) * ts};
  const auto& frame = grid.frame;

  Rect rect;
  const bool axis_rect = is_axis_rect(footprint, rect);
  // Absorbs rounding in footprint corners (about 1e-7 m at UTM northings).
  const double tol = 1e-14 * std::max({1.0, std::abs(fp.max_x), std::abs(fp.max_y)}) + 1e-9;
  const double tile_area = ts * ts;

  const auto col_begin = static_cast<std::int64_t>(std::floor((fp.min_x - frame.anchor.x) / ts));
  const auto col_end = static_cast<std::int64_t>(std::ceil((fp.max_x - frame.anchor.x) / ts));
  const auto row_begin = static_cast<std::int64_t>(std::floor((frame.anchor.y - fp.max_y) / ts));
  const auto row_end = static_cast<std::int64_t>(std::ceil((frame.anchor.y - fp.min_y) / ts));

  for (auto row = row_begin; row < row_end; ++row) {
    for (auto col = col_begin; col < col_end; ++col) {
      const TileId id{row, col};
      const Rect b = frame.bounds_of(id);
      bool full = false;
      double coverage = 0.0;
      if (axis_rect) {
        full = b.min_x >= rect.min_x - tol && b.max_x <= rect.max_x + tol && b.min_y >= rect.min_y - tol &&
               b.max_y <= rect.max_y + tol;
        if (!full) {
          const double w = std::min(b.max_x, rect.max_x) - std::max(b.min_x, rect.min_x);
          const double h = std::min(b.max_y, rect.max_y) - std::max(b.min_y, rect.min_y);
          coverage = (w > tol && h > tol) ? (w * h) / tile_area : 0.0;
        }
      } else {
        full = inside_or_on(footprint, {b.min_x, b.min_y}, tol) && inside_or_on(footprint, {b.max_x, b.min_y}, tol) &&
               inside_or_on(footprint, {b.max_x, b.max_y}, tol) && inside_or_on(footprint, {b.min_x, b.max_y}, tol);
        if (full) {
          for (const auto& v : footprint) {
            if (v.x > b.min_x + tol && v.x < b.max_x - tol && v.y > b.min_y + tol && v.y < b.max_y - tol) {
              full = false;
              break;
            }
          }
        }
        if (!full) coverage = clipped_area(footprint, b) / tile_area;
      }
      if (full) coverage = 1.0;
      if (!full && !(spec.include_partials && coverage > 1e-12)) continue;
      TileRecord tile;
      tile.id = id;
      tile.bounds = b;
      tile.valid_fraction = std::min(1.0, coverage);
      tile.pixel_window = tile_to_window(b, working, meta);
      grid.tiles.push_back(tile);
    }
  }
  return grid;
}

std::string geojson_polygon(const Rect& b, const Crs& crs) {
  const bool to_wgs84 = wgs84_transformable(crs);
  const int decimals = to_wgs84 ? 7 : 3;
  const Point corners[5] = {{b.min_x, b.min_y}, {b.max_x, b.min_y}, {b.max_x, b.max_y}, {b.min_x, b.max_y}, {b.min_x, b.min_y}};
  std::string s = R"({"type":"Polygon","coordinates":[[)";
  for (int i = 0; i < 5; ++i) {
    const Point p = to_wgs84 ? transform(corners[i], crs, Crs::wgs84()) : corners[i];
    if (i) s += ',';
    s += '[' + io::format_decimal(p.x, decimals) + ',' + io::format_decimal(p.y, decimals) + ']';
  }
  s += "]]}";
  return s;
}

void write_grid_geojson(std::ostream& out, const Grid& grid) {
  out << R"({"type":"FeatureCollection",)";
  if (!wgs84_transformable(grid.frame.crs)) {
    out << R"("crs":{"type":"name","properties":{"name":")" << grid.frame.crs.name() << R"("}},)";
  }
  out << R"("features":[)";
  bool first = true;
  for (const auto& t : grid.tiles) {
    if (!first) out << ',';
    first = false;
    out << "\n" << R"({"type":"Feature","properties":{"tile_id":[)" << t.id.row << ',' << t.id.col
        << R"(],"valid_fraction":)" << io::format_decimal(t.valid_fraction, 6)
        << R"(},"geometry":)" << geojson_polygon(t.bounds, grid.frame.crs) << '}';
  }
  out << "\n]}\n";
}

void write_grid_csv(std::ostream& out, const Grid& grid) {
  const auto& f = grid.frame;
  out << "# crs=" << f.crs.name() << (f.crs.metric ? "" : ";nonmetric") << "\n";
  out << "# tile_size_m=" << exact(f.tile_size_m) << "\n";
  out << "# anchor=" << exact(f.anchor.x) << ',' << exact(f.anchor.y) << "\n";
  out << "row,col,min_x,min_y,max_x,max_y,row_off,col_off,height,width,valid_fraction\n";
  for (const auto& t : grid.tiles) {
    out << t.id.row << ',' << t.id.col << ',' << io::format_decimal(t.bounds.min_x, 6) << ','
        << io::format_decimal(t.bounds.min_y, 6) << ',' << io::format_decimal(t.bounds.max_x, 6) << ','
        << io::format_decimal(t.bounds.max_y, 6) << ',' << t.pixel_window.row_off << ','
        << t.pixel_window.col_off << ',' << t.pixel_window.height << ',' << t.pixel_window.width << ','
        << io::format_decimal(t.valid_fraction, 9) << "\n";
  }
}

Grid read_grid_csv(const std::filesystem::path& path) {
  std::vector<std::string> comments;
  const auto table = csv::read_file(path, &comments);
  Grid grid;
  bool have_crs = false, have_size = false, have_anchor = false;
  for (auto line : comments) {
    while (!line.empty() && line.front() == ' ') line.erase(line.begin());
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "crs") {
      const auto semi = value.find(';');
      grid.frame.crs = parse_crs(value.substr(0, semi));
      if (semi != std::string::npos) grid.frame.crs.metric = false;
      have_crs = true;
    } else if (key == "tile_size_m") {
      grid.frame.tile_size_m = csv::to_double(value, "tile_size_m");
      have_size = true;
    } else if (key == "anchor") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) fail(ErrorKind::Parse, path.string() + ": malformed anchor");
      grid.frame.anchor = {csv::to_double(value.substr(0, comma), "anchor x"),
                           csv::to_double(value.substr(comma + 1), "anchor y")};
      have_anchor = true;
    }
  }
  if (!have_crs || !have_size || !have_anchor) {
    fail(ErrorKind::Parse, path.string() + ": grid manifest lacks crs/tile_size_m/anchor header lines");
  }
  const auto src = path.string();
  const auto c_row = table.require("row", src), c_col = table.require("col", src);
  const auto c_ro = table.require("row_off", src), c_co = table.require("col_off", src);
  const auto c_h = table.require("height", src), c_w = table.require("width", src);
  const auto c_vf = table.require("valid_fraction", src);
  grid.tiles.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    TileRecord t;
    t.id = {csv::to_int(r[c_row], "row"), csv::to_int(r[c_col], "col")};
    t.bounds = grid.frame.bounds_of(t.id);
    t.pixel_window = {csv::to_int(r[c_ro], "row_off"), csv::to_int(r[c_co], "col_off"),
                      csv::to_int(r[c_h], "height"), csv::to_int(r[c_w], "width")};
    t.valid_fraction = csv::to_double(r[c_vf], "valid_fraction");
    grid.tiles.push_back(t);
  }
  return grid;
}

}  // namespace oddmap
