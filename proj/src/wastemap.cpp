#include "oddmap/wastemap.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>

#include "json.hpp"
#include "oddmap/csv.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"

namespace oddmap {
namespace {

// a.n_waste / a.n > b.n_waste / b.n, compared exactly.
bool scores_higher(const RegionSummary& a, const RegionSummary& b) {
  using u128 = unsigned __int128;
  return static_cast<u128>(a.n_waste) * b.n_tiles_analyzed > static_cast<u128>(b.n_waste) * a.n_tiles_analyzed;
}

bool scores_equal(const RegionSummary& a, const RegionSummary& b) {
  using u128 = unsigned __int128;
  return static_cast<u128>(a.n_waste) * b.n_tiles_analyzed == static_cast<u128>(b.n_waste) * a.n_tiles_analyzed;
}

}  // namespace

RegionSummary oddmswc(const std::string& region_id, std::size_t n_analyzed, std::size_t n_waste) {
  if (n_analyzed == 0) fail(ErrorKind::Undefined, "ODDMSWC of region " + region_id + " is undefined: no analyzed tiles");
  if (n_waste > n_analyzed) fail(ErrorKind::Validation, "region " + region_id + " has more waste tiles than tiles");
  RegionSummary s;
  s.region_id = region_id;
  s.n_tiles_analyzed = n_analyzed;
  s.n_waste = n_waste;
  s.oddmswc = 100.0 * static_cast<double>(n_waste) / static_cast<double>(n_analyzed);
  return s;
}

RegionSummary oddmswc(const std::vector<Prediction>& preds) {
  if (preds.empty()) fail(ErrorKind::Undefined, "ODDMSWC is undefined: no analyzed tiles");
  const std::string& region = preds.front().region_id;
  std::size_t waste = 0;
  for (const auto& p : preds) {
    if (p.region_id != region) fail(ErrorKind::Validation, "predictions mix regions " + region + " and " + p.region_id);
    if (p.predicted == Label::Waste) ++waste;
  }
  return oddmswc(region, preds.size(), waste);
}

std::vector<RegionSummary> summarize_regions(const std::vector<Prediction>& predictions,
                                             const std::vector<std::string>& declared) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& p : predictions) {
    auto& c = counts[p.region_id];
    ++c.first;
    if (p.predicted == Label::Waste) ++c.second;
  }
  for (const auto& d : declared) {
    if (!counts.contains(d)) fail(ErrorKind::Undefined, "ODDMSWC of region " + d + " is undefined: no analyzed tiles");
  }
  std::vector<RegionSummary> out;
  for (const auto& [region, c] : counts) out.push_back(oddmswc(region, c.first, c.second));
  return out;
}

std::vector<RegionSummary> rank_regions(std::vector<RegionSummary> summaries) {
  std::sort(summaries.begin(), summaries.end(), [](const RegionSummary& a, const RegionSummary& b) {
    if (!scores_equal(a, b)) return scores_higher(a, b);
    return a.region_id < b.region_id;
  });
  for (std::size_t i = 0; i < summaries.size(); ++i) summaries[i].rank = i + 1;
  return summaries;
}

void write_summary_csv(std::ostream& out, const std::vector<RegionSummary>& summaries) {
  out << "region_id,n_tiles,n_waste,oddmswc,rank\n";
  for (const auto& s : summaries) {
    out << csv::escape(s.region_id) << ',' << s.n_tiles_analyzed << ',' << s.n_waste << ','
        << io::format_decimal(s.oddmswc, 6) << ',' << s.rank << '\n';
  }
}

std::vector<RegionSummary> read_summary_csv(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  const auto c_region = table.require("region_id", src);
  const auto c_tiles = table.require("n_tiles", src);
  const auto c_waste = table.require("n_waste", src);
  const auto c_rank = table.column("rank");
  std::vector<RegionSummary> out;
  for (const auto& row : table.rows) {
    const auto n = csv::to_int(row.at(c_tiles), "n_tiles");
    const auto w = csv::to_int(row.at(c_waste), "n_waste");
    if (n < 0 || w < 0) fail(ErrorKind::Validation, src + ": negative tile count");
    auto s = oddmswc(row.at(c_region), static_cast<std::size_t>(n), static_cast<std::size_t>(w));
    if (c_rank && !row.at(*c_rank).empty()) s.rank = static_cast<std::size_t>(csv::to_int(row.at(*c_rank), "rank"));
    out.push_back(std::move(s));
  }
  return out;
}

void export_map_geojson(std::ostream& out, const Grid& grid, const std::vector<Prediction>& predictions,
                        const MapExportOptions& options) {
  std::map<TileId, const Prediction*> by_tile;
  std::set<TileId> grid_ids;
  for (const auto& t : grid.tiles) grid_ids.insert(t.id);
  for (const auto& p : predictions) {
    if (!grid_ids.contains(p.tile_id)) {
      fail(ErrorKind::Join, "prediction for " + p.region_id + " (" + std::to_string(p.tile_id.row) + "," +
                                std::to_string(p.tile_id.col) + ") has no grid tile");
    }
    if (!by_tile.emplace(p.tile_id, &p).second) {
      fail(ErrorKind::Join, "duplicate prediction for tile (" + std::to_string(p.tile_id.row) + "," +
                                std::to_string(p.tile_id.col) + ")");
    }
  }
  const Crs& crs = grid.frame.crs;
  out << R"({"type":"FeatureCollection",)";
  if (!(crs.is_utm() || crs.geographic())) {
    out << R"("crs":{"type":"name","properties":{"name":")" << crs.name() << R"("}},)";
  }
  out << R"("features":[)";
  bool first = true;
  for (const auto& t : grid.tiles) {
    const auto it = by_tile.find(t.id);
    if (it == by_tile.end()) continue;
    const Prediction& p = *it->second;
    if (options.waste_only && p.predicted != Label::Waste) continue;
    if (!first) out << ',';
    first = false;
    out << "\n"
        << R"({"type":"Feature","properties":{"region_id":)" << nlohmann::json(p.region_id).dump()
        << R"(,"tile_id":[)" << t.id.row << ',' << t.id.col << R"(],"predicted_class":")" << to_string(p.predicted)
        << R"(","confidence":)" << io::format_decimal(p.confidence, 6) << R"(},"geometry":)"
        << geojson_polygon(t.bounds, crs) << '}';
  }
  out << "\n]}\n";
}

}  // namespace oddmap
