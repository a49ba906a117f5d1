#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oddmap/geogrid.hpp"
#include "oddmap/types.hpp"

namespace oddmap {

struct AnnotationRecord {
  std::string region_id;
  TileId tile_id;
  Label label = Label::Background;
  std::optional<std::string> annotator;
  std::optional<std::string> timestamp;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view text);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  std::array<double, 3> as_array() const { return {train, val, test}; }
};

/// Throws Config unless every ratio is >= 0, at least one is positive and
/// they sum to 1 within 1e-9.
void validate(const SplitRatios& ratios);
SplitRatios parse_ratios(std::string_view text);

struct ManifestRecord {
  AnnotationRecord annotation;
  Split split = Split::Train;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  /// Non-fatal notes, e.g. strata too small to populate every split.
  std::vector<std::string> warnings;
};

struct RegionBalance {
  std::string region_id;
  std::size_t waste = 0;
  std::size_t background = 0;
  /// Majority count over minority count; 1.0 is perfectly balanced and
  /// infinity means one class is absent.
  double imbalance_ratio = 1.0;
};

struct AnnotationImport {
  std::vector<AnnotationRecord> records;  // sorted by (region, row, col)
  std::vector<RegionBalance> balance;     // sorted by region
  std::size_t duplicates_removed = 0;
};

/// Per-region class counts of a record set.
std::vector<RegionBalance> balance_report(const std::vector<AnnotationRecord>& records);

/// Deduplicates and validates records. Throws Validation for bad labels
/// (listing rows) and Conflict for one tile carrying two labels.
AnnotationImport normalize_annotations(std::vector<AnnotationRecord> records);

/// CSV (`region_id,row,col,label[,annotator,timestamp]`) or GeoJSON.
/// GeoJSON features carry `region_id` and `label` properties; points select
/// the containing tile of `grid`, polygons every tile whose center they
/// contain. Coordinates are WGS84 when the grid CRS is transformable.
/// When a grid is supplied, CSV tile ids must exist in it.
AnnotationImport import_annotations(const std::filesystem::path& path,
                                    const Grid* grid = nullptr);

/// Stratified by (region, label): each stratum is put in canonical tile
/// order, shuffled with a generator keyed by (seed, region, label), and cut
/// by largest-remainder quotas.
DatasetManifest make_splits(const std::vector<AnnotationRecord>& records,
                            const SplitRatios& ratios, std::uint64_t seed);

/// Largest-remainder split of n items over `ratios`; ties go to the earlier split.
std::array<std::size_t, 3> split_quotas(std::size_t n, const SplitRatios& ratios);

/// Header `region_id,row,col,label,split`, rows ordered by (region, row, col).
void write_manifest_csv(std::ostream& out, const DatasetManifest& manifest);
/// Writes the CSV and a `<path>.meta.json` sidecar carrying seed and ratios.
void export_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest import_manifest(const std::filesystem::path& path);

}  // namespace oddmap
