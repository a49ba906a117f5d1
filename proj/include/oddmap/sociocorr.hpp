#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "oddmap/crs.hpp"
#include "oddmap/raster.hpp"
#include "oddmap/types.hpp"
#include "oddmap/wastemap.hpp"

namespace oddmap {

/// Polygon with optional holes; ring 0 is the outer boundary. Rings need not
/// be closed explicitly.
struct Polygon {
  std::vector<std::vector<Point>> rings;
};

/// One region extent, possibly multi-part.
struct RegionExtent {
  std::string region_id;
  std::vector<Polygon> parts;
  Crs crs = Crs::wgs84();
};

bool contains(const Polygon& polygon, Point p);
bool contains(const RegionExtent& extent, Point p);
/// Area in km^2: planar for metric CRSs, spherical for geographic ones.
double area_km2(const RegionExtent& extent);

/// Reads a GeoJSON FeatureCollection of (Multi)Polygons keyed by the
/// `region_id` property. Coordinates are taken in `crs`.
std::vector<RegionExtent> read_region_extents(const std::filesystem::path& path,
                                              const Crs& crs = Crs::wgs84());

enum class Aggregation { Mean, Sum };

/// Single-band indicator grid.
using IndicatorRaster = ScalarGrid;

IndicatorRaster load_indicator_raster(const std::filesystem::path& path);

struct IndicatorLayer {
  std::string name;  // shdi | infrastructure_deficit | population_density | custom
  std::string units;
  Aggregation aggregation = Aggregation::Mean;
  /// Divide a summed count by region area (km^2) to yield a density.
  bool per_km2 = false;
  /// Exactly one source is set.
  std::optional<IndicatorRaster> raster;
  std::map<std::string, double> table;
};

/// Layer with conventional aggregation for a known indicator name:
/// population sums counts per km^2; indices take the mean.
IndicatorLayer make_layer(const std::string& name);
/// CSV `region_id,value` table source.
std::map<std::string, double> read_indicator_table(const std::filesystem::path& path);

/// Mean or sum over raster cells whose centers fall inside the extent,
/// nodata and non-finite cells excluded. Throws Undefined when no cell qualifies.
double zonal_aggregate(const IndicatorRaster& raster, const RegionExtent& extent,
                       Aggregation aggregation);
/// Layer value for one region (table lookup or zonal statistics).
std::optional<double> layer_value(const IndicatorLayer& layer, const RegionExtent* extent,
                                  const std::string& region_id);

/// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws SampleSize for n < 3 or
/// unequal lengths and Undefined when either rank vector is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationResult {
  std::string x_name;
  std::string y_name;
  double rho = 0.0;
  std::size_t n = 0;
  std::vector<std::string> regions;         // regions used, sorted
  std::vector<std::string> excluded_regions;  // requested exclusions
  std::vector<std::string> missing_regions;   // lacked a value
};

struct CorrelationReport {
  std::vector<CorrelationResult> target;      // ODDMSWC vs each layer
  std::vector<CorrelationResult> predictors;  // layer vs layer
  /// Per-region values used: region -> (variable -> value).
  std::map<std::string, std::map<std::string, double>> values;
};

/// ODDMSWC against every layer plus every predictor pair. Regions missing a
/// value for a pair are listed and dropped from that pair only. Excluding a
/// region that has no summary throws Validation.
CorrelationReport bivariate_report(const std::vector<RegionSummary>& summaries,
                                   const std::vector<IndicatorLayer>& layers,
                                   const std::vector<RegionExtent>& extents,
                                   const std::vector<std::string>& exclude = {});

/// ODDMSWC vs one layer with `exclude` removed; throws SampleSize when
/// fewer than 3 regions remain.
CorrelationResult sensitivity_exclude(const std::vector<RegionSummary>& summaries,
                                      const IndicatorLayer& layer,
                                      const std::vector<RegionExtent>& extents,
                                      const std::vector<std::string>& exclude);

nlohmann::json to_json(const CorrelationReport& report);
/// `region_id,<x>,<y>` rows for one pair.
void write_scatter_csv(std::ostream& out, const CorrelationReport& report,
                       const CorrelationResult& pair);

}  // namespace oddmap
