#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "oddmap/geogrid.hpp"
#include "oddmap/predictions.hpp"

namespace oddmap {

struct RegionSummary {
  std::string region_id;
  std::size_t n_tiles_analyzed = 0;
  std::size_t n_waste = 0;
  /// 100 * n_waste / n_tiles_analyzed
  double oddmswc = 0.0;
  /// 1-based; 0 until ranked.
  std::size_t rank = 0;
};

/// Contamination score of one region. Every prediction counts as analyzed;
/// skipped tiles never reach the prediction list. Throws Undefined for an
/// empty list and Validation when predictions mix regions.
RegionSummary oddmswc(const std::vector<Prediction>& region_predictions);
RegionSummary oddmswc(const std::string& region_id, std::size_t n_analyzed, std::size_t n_waste);

/// Groups predictions by region and scores each region (sorted by id).
/// Regions listed in `declared` without predictions raise Undefined.
std::vector<RegionSummary> summarize_regions(const std::vector<Prediction>& predictions,
                                             const std::vector<std::string>& declared = {});

/// Descending ODDMSWC, ties by region id; assigns ranks 1..R.
std::vector<RegionSummary> rank_regions(std::vector<RegionSummary> summaries);

/// `region_id,n_tiles,n_waste,oddmswc,rank`
void write_summary_csv(std::ostream& out, const std::vector<RegionSummary>& summaries);
std::vector<RegionSummary> read_summary_csv(const std::filesystem::path& path);

struct MapExportOptions {
  bool waste_only = false;
};

/// GeoJSON FeatureCollection of predicted tiles with `region_id`, `tile_id`,
/// `predicted_class` and `confidence` properties, in grid order. Every
/// prediction must match a grid tile (Join otherwise). Coordinates follow
/// write_grid_geojson() (lon/lat, 7 decimals).
void export_map_geojson(std::ostream& out, const Grid& grid,
                        const std::vector<Prediction>& predictions,
                        const MapExportOptions& options = {});

}  // namespace oddmap
