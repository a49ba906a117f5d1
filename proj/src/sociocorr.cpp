#include "oddmap/sociocorr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "oddmap/csv.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"

namespace oddmap {
namespace {

using nlohmann::json;

bool ring_contains(const std::vector<Point>& ring, Point p) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = ring[i], b = ring[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

double planar_ring_area(const std::vector<Point>& ring) {
  double twice = 0.0;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    twice += ring[j].x * ring[i].y - ring[i].x * ring[j].y;
  }
  return std::abs(twice) / 2.0;
}

Polygon read_polygon(const json& rings) {
  Polygon poly;
  for (const auto& ring : rings) {
    std::vector<Point> pts;
    for (const auto& c : ring) pts.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    if (pts.size() > 1 && pts.front() == pts.back()) pts.pop_back();
    if (pts.size() < 3) fail(ErrorKind::Parse, "polygon ring with fewer than 3 vertices");
    poly.rings.push_back(std::move(pts));
  }
  if (poly.rings.empty()) fail(ErrorKind::Parse, "polygon without rings");
  return poly;
}

Rect bbox(const RegionExtent& e) {
  Rect r{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const auto& part : e.parts) {
    for (const auto& p : part.rings.front()) {
      r.min_x = std::min(r.min_x, p.x);
      r.min_y = std::min(r.min_y, p.y);
      r.max_x = std::max(r.max_x, p.x);
      r.max_y = std::max(r.max_y, p.y);
    }
  }
  return r;
}

const RegionExtent* find_extent(const std::vector<RegionExtent>& extents, const std::string& id) {
  for (const auto& e : extents) {
    if (e.region_id == id) return &e;
  }
  return nullptr;
}

CorrelationResult correlate(const std::string& x, const std::string& y, const std::vector<std::string>& regions,
                            const std::map<std::string, std::map<std::string, double>>& values,
                            const std::vector<std::string>& exclude) {
  CorrelationResult r;
  r.x_name = x;
  r.y_name = y;
  r.excluded_regions = exclude;
  std::vector<double> xs, ys;
  for (const auto& region : regions) {
    const auto& v = values.at(region);
    const auto xi = v.find(x);
    const auto yi = v.find(y);
    if (xi == v.end() || yi == v.end()) {
      r.missing_regions.push_back(region);
      continue;
    }
    r.regions.push_back(region);
    xs.push_back(xi->second);
    ys.push_back(yi->second);
  }
  r.n = xs.size();
  try {
    r.rho = spearman(xs, ys);
  } catch (const Error& e) {
    throw Error(e.kind(), x + " vs " + y + ": " + e.what());
  }
  return r;
}

json result_json(const CorrelationResult& r) {
  return {{"x", r.x_name},
          {"y", r.y_name},
          {"rho", r.rho},
          {"n", r.n},
          {"regions", r.regions},
          {"excluded_regions", r.excluded_regions},
          {"missing_regions", r.missing_regions}};
}

}  // namespace

bool contains(const Polygon& polygon, Point p) {
  if (polygon.rings.empty() || !ring_contains(polygon.rings.front(), p)) return false;
  for (std::size_t i = 1; i < polygon.rings.size(); ++i) {
    if (ring_contains(polygon.rings[i], p)) return false;
  }
  return true;
}

bool contains(const RegionExtent& extent, Point p) {
  return std::any_of(extent.parts.begin(), extent.parts.end(), [&](const Polygon& poly) { return contains(poly, p); });
}

double area_km2(const RegionExtent& extent) {
  double total = 0.0;
  for (const auto& part : extent.parts) {
    for (std::size_t i = 0; i < part.rings.size(); ++i) {
      const double a = extent.crs.geographic() ? geodesic_ring_area_km2(part.rings[i])
                                               : planar_ring_area(part.rings[i]) / 1e6;
      total += i == 0 ? a : -a;
    }
  }
  return total;
}

std::vector<RegionExtent> read_region_extents(const std::filesystem::path& path, const Crs& crs) {
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  std::map<std::string, RegionExtent> by_id;
  try {
    for (const auto& f : doc.at("features")) {
      const auto id = f.at("properties").at("region_id").get<std::string>();
      auto& extent = by_id[id];
      extent.region_id = id;
      extent.crs = crs;
      const auto& geom = f.at("geometry");
      const auto type = geom.at("type").get<std::string>();
      if (type == "Polygon") {
        extent.parts.push_back(read_polygon(geom.at("coordinates")));
      } else if (type == "MultiPolygon") {
        for (const auto& p : geom.at("coordinates")) extent.parts.push_back(read_polygon(p));
      } else {
        fail(ErrorKind::Parse, path.string() + ": region " + id + " has unsupported geometry " + type);
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  std::vector<RegionExtent> out;
  for (auto& [_, e] : by_id) out.push_back(std::move(e));
  return out;
}

IndicatorRaster load_indicator_raster(const std::filesystem::path& path) { return read_scalar_geotiff(path); }

IndicatorLayer make_layer(const std::string& name) {
  IndicatorLayer layer;
  if (name == "shdi") {
    layer.name = "shdi";
    layer.units = "index";
  } else if (name == "infrastructure_deficit" || name == "infra") {
    layer.name = "infrastructure_deficit";
    layer.units = "index";
  } else if (name == "population_density" || name == "pop") {
    layer.name = "population_density";
    layer.units = "people/km2";
    layer.aggregation = Aggregation::Sum;
    layer.per_km2 = true;
  } else {
    layer.name = name;
  }
  return layer;
}

std::map<std::string, double> read_indicator_table(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  const auto c_region = table.require("region_id", src);
  const auto c_value = table.require("value", src);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const double v = csv::to_double(row.at(c_value), "value");
    if (!std::isfinite(v)) fail(ErrorKind::Validation, src + " line " + std::to_string(table.lines[i]) + ": non-finite value");
    if (!out.emplace(row.at(c_region), v).second) {
      fail(ErrorKind::Validation, src + ": duplicate region " + row.at(c_region));
    }
  }
  return out;
}

double zonal_aggregate(const IndicatorRaster& raster, const RegionExtent& extent, Aggregation aggregation) {
  const bool same_crs = raster.crs == extent.crs;
  if (!same_crs && !((raster.crs.geographic() || raster.crs.is_utm()) && (extent.crs.geographic() || extent.crs.is_utm()))) {
    fail(ErrorKind::Geometry, "cannot relate raster " + raster.crs.name() + " to extent " + extent.crs.name());
  }
  std::int64_t r0 = 0, r1 = raster.height, c0 = 0, c1 = raster.width;
  if (same_crs && raster.transform.invertible()) {
    // Only cells inside the extent's bounding box can qualify.
    const Rect b = bbox(extent);
    const Affine inv = raster.transform.inverse();
    double cmin = INFINITY, cmax = -INFINITY, rmin = INFINITY, rmax = -INFINITY;
    for (const Point p : {Point{b.min_x, b.min_y}, Point{b.min_x, b.max_y}, Point{b.max_x, b.min_y}, Point{b.max_x, b.max_y}}) {
      const Point q = inv.apply(p.x, p.y);
      cmin = std::min(cmin, q.x);
      cmax = std::max(cmax, q.x);
      rmin = std::min(rmin, q.y);
      rmax = std::max(rmax, q.y);
    }
    c0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(cmin)) - 1, 0, raster.width);
    c1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(cmax)) + 1, 0, raster.width);
    r0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(rmin)) - 1, 0, raster.height);
    r1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(rmax)) + 1, 0, raster.height);
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::int64_t r = r0; r < r1; ++r) {
    for (std::int64_t c = c0; c < c1; ++c) {
      const double v = raster.at(r, c);
      if (!std::isfinite(v) || (raster.nodata && v == *raster.nodata)) continue;
      Point center = raster.transform.apply(static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5);
      if (!same_crs) center = transform(center, raster.crs, extent.crs);
      if (!contains(extent, center)) continue;
      sum += v;
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::Undefined, "no valid indicator cell falls inside region " + extent.region_id);
  return aggregation == Aggregation::Sum ? sum : sum / static_cast<double>(count);
}

std::optional<double> layer_value(const IndicatorLayer& layer, const RegionExtent* extent, const std::string& region_id) {
  if (layer.raster) {
    if (!extent) return std::nullopt;
    try {
      double v = zonal_aggregate(*layer.raster, *extent, layer.aggregation);
      if (layer.per_km2) {
        const double area = area_km2(*extent);
        if (!(area > 0.0)) return std::nullopt;
        v /= area;
      }
      return v;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Undefined) return std::nullopt;
      throw;
    }
  }
  const auto it = layer.table.find(region_id);
  if (it == layer.table.end()) return std::nullopt;
  return it->second;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double avg = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::SampleSize, "Spearman inputs differ in length");
  if (x.size() < 3) fail(ErrorKind::SampleSize, "Spearman needs at least 3 samples, got " + std::to_string(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) fail(ErrorKind::Validation, "Spearman input is not finite");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::Undefined, "Spearman correlation is undefined for constant ranks");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport bivariate_report(const std::vector<RegionSummary>& summaries, const std::vector<IndicatorLayer>& layers,
                                   const std::vector<RegionExtent>& extents, const std::vector<std::string>& exclude) {
  std::set<std::string> known;
  for (const auto& s : summaries) known.insert(s.region_id);
  for (const auto& e : exclude) {
    if (!known.contains(e)) fail(ErrorKind::Validation, "excluded region " + e + " has no ODDMSWC summary");
  }
  std::set<std::string> names{"oddmswc"};
  for (const auto& l : layers) {
    if (!names.insert(l.name).second) fail(ErrorKind::Config, "duplicate indicator layer " + l.name);
  }
  const std::set<std::string> excluded(exclude.begin(), exclude.end());
  std::vector<std::string> sorted_exclude(excluded.begin(), excluded.end());

  CorrelationReport report;
  std::vector<std::string> regions;
  for (const auto& s : summaries) {
    if (excluded.contains(s.region_id)) continue;
    regions.push_back(s.region_id);
    auto& v = report.values[s.region_id];
    v["oddmswc"] = s.oddmswc;
    for (const auto& layer : layers) {
      if (auto x = layer_value(layer, find_extent(extents, s.region_id), s.region_id)) v[layer.name] = *x;
    }
  }
  std::sort(regions.begin(), regions.end());
  for (const auto& layer : layers) {
    report.target.push_back(correlate("oddmswc", layer.name, regions, report.values, sorted_exclude));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t j = i + 1; j < layers.size(); ++j) {
      report.predictors.push_back(correlate(layers[i].name, layers[j].name, regions, report.values, sorted_exclude));
    }
  }
  return report;
}

CorrelationResult sensitivity_exclude(const std::vector<RegionSummary>& summaries, const IndicatorLayer& layer,
                                      const std::vector<RegionExtent>& extents, const std::vector<std::string>& exclude) {
  return bivariate_report(summaries, {layer}, extents, exclude).target.front();
}

json to_json(const CorrelationReport& report) {
  json j;
  j["target"] = json::array();
  for (const auto& r : report.target) j["target"].push_back(result_json(r));
  j["predictors"] = json::array();
  for (const auto& r : report.predictors) j["predictors"].push_back(result_json(r));
  j["values"] = report.values;
  return j;
}

void write_scatter_csv(std::ostream& out, const CorrelationReport& report, const CorrelationResult& pair) {
  out << "region_id," << pair.x_name << ',' << pair.y_name << '\n';
  for (const auto& region : pair.regions) {
    const auto& v = report.values.at(region);
    out << csv::escape(region) << ',' << io::format_decimal(v.at(pair.x_name), 9) << ','
        << io::format_decimal(v.at(pair.y_name), 9) << '\n';
  }
}

}  // namespace oddmap
