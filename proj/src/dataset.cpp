#include "oddmap/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "json.hpp"
#include "oddmap/csv.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"
#include "oddmap/rng.hpp"

namespace oddmap {
namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool record_less(const AnnotationRecord& a, const AnnotationRecord& b) {
  if (a.region_id != b.region_id) return a.region_id < b.region_id;
  return a.tile_id < b.tile_id;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

bool ring_contains(const std::vector<Point>& ring, Point p) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Point a = ring[i], b = ring[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

std::vector<Point> read_ring(const json& coords) {
  std::vector<Point> ring;
  for (const auto& c : coords) ring.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  return ring;
}

std::vector<AnnotationRecord> read_annotation_csv(const std::filesystem::path& path, const Grid* grid) {
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  const auto c_region = table.require("region_id", src);
  const auto c_row = table.require("row", src);
  const auto c_col = table.require("col", src);
  const auto c_label = table.require("label", src);
  const auto c_annotator = table.column("annotator");
  const auto c_time = table.column("timestamp");

  std::set<TileId> known;
  if (grid) {
    for (const auto& t : grid->tiles) known.insert(t.id);
  }

  std::vector<AnnotationRecord> records;
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    AnnotationRecord r;
    r.region_id = trim(row.at(c_region));
    r.tile_id = {csv::to_int(row.at(c_row), "row"), csv::to_int(row.at(c_col), "col")};
    const auto label = parse_label(row.at(c_label));
    if (!label) {
      bad.push_back("line " + std::to_string(table.lines[i]) + " ('" + row.at(c_label) + "')");
      continue;
    }
    r.label = *label;
    if (c_annotator && !row.at(*c_annotator).empty()) r.annotator = row.at(*c_annotator);
    if (c_time && !row.at(*c_time).empty()) r.timestamp = row.at(*c_time);
    if (grid && !known.contains(r.tile_id)) {
      fail(ErrorKind::Validation, src + " line " + std::to_string(table.lines[i]) + ": tile (" +
                                      std::to_string(r.tile_id.row) + "," + std::to_string(r.tile_id.col) +
                                      ") is not in the grid");
    }
    records.push_back(std::move(r));
  }
  if (!bad.empty()) {
    std::string msg = src + ": unknown label at ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
    fail(ErrorKind::Validation, msg);
  }
  return records;
}

std::vector<AnnotationRecord> read_annotation_geojson(const std::filesystem::path& path, const Grid* grid) {
  if (!grid) fail(ErrorKind::Config, "GeoJSON annotations need a grid to snap to");
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  const GridFrame& frame = grid->frame;
  const bool lonlat = frame.crs.is_utm();
  auto to_frame = [&](Point p) { return lonlat ? transform(p, Crs::wgs84(), frame.crs) : p; };

  std::vector<AnnotationRecord> records;
  std::vector<std::string> bad;
  std::size_t index = 0;
  for (const auto& feature : doc.at("features")) {
    ++index;
    const auto& props = feature.at("properties");
    const std::string label_text = props.at("label").get<std::string>();
    const auto label = parse_label(label_text);
    if (!label) {
      bad.push_back("feature " + std::to_string(index) + " ('" + label_text + "')");
      continue;
    }
    const std::string region = trim(props.at("region_id").get<std::string>());
    const auto& geom = feature.at("geometry");
    const std::string type = geom.at("type").get<std::string>();
    std::vector<TileId> ids;
    if (type == "Point") {
      const auto& c = geom.at("coordinates");
      ids.push_back(frame.tile_at(to_frame({c.at(0).get<double>(), c.at(1).get<double>()})));
    } else if (type == "Polygon" || type == "MultiPolygon") {
      std::vector<std::vector<std::vector<Point>>> polys;
      auto add_poly = [&](const json& rings) {
        std::vector<std::vector<Point>> poly;
        for (const auto& ring : rings) {
          auto pts = read_ring(ring);
          for (auto& p : pts) p = to_frame(p);
          poly.push_back(std::move(pts));
        }
        polys.push_back(std::move(poly));
      };
      if (type == "Polygon") {
        add_poly(geom.at("coordinates"));
      } else {
        for (const auto& p : geom.at("coordinates")) add_poly(p);
      }
      for (const auto& tile : grid->tiles) {
        const Point c{(tile.bounds.min_x + tile.bounds.max_x) / 2, (tile.bounds.min_y + tile.bounds.max_y) / 2};
        for (const auto& poly : polys) {
          if (poly.empty() || !ring_contains(poly[0], c)) continue;
          bool in_hole = false;
          for (std::size_t h = 1; h < poly.size(); ++h) in_hole = in_hole || ring_contains(poly[h], c);
          if (!in_hole) {
            ids.push_back(tile.id);
            break;
          }
        }
      }
    } else {
      fail(ErrorKind::Parse, path.string() + ": unsupported geometry type " + type);
    }
    for (const auto& id : ids) {
      AnnotationRecord r;
      r.region_id = region;
      r.tile_id = id;
      r.label = *label;
      if (props.contains("annotator") && props["annotator"].is_string()) r.annotator = props["annotator"];
      if (props.contains("timestamp") && props["timestamp"].is_string()) r.timestamp = props["timestamp"];
      records.push_back(std::move(r));
    }
  }
  if (!bad.empty()) {
    std::string msg = path.string() + ": unknown label at ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
    fail(ErrorKind::Validation, msg);
  }
  return records;
}

}  // namespace

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) {
  const std::string t = trim(text);
  if (t == "train") return Split::Train;
  if (t == "val" || t == "validation") return Split::Val;
  if (t == "test") return Split::Test;
  return std::nullopt;
}

void validate(const SplitRatios& ratios) {
  const auto r = ratios.as_array();
  double sum = 0.0;
  bool positive = false;
  for (double v : r) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::Config, "split ratios must be non-negative");
    positive = positive || v > 0.0;
    sum += v;
  }
  if (!positive) fail(ErrorKind::Config, "at least one split ratio must be positive");
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::Config, "split ratios must sum to 1, got " + std::to_string(sum));
}

SplitRatios parse_ratios(std::string_view text) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const auto field = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    try {
      parts.push_back(csv::to_double(field, "split ratio"));
    } catch (const Error& e) {
      fail(ErrorKind::Config, e.what());
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 3) fail(ErrorKind::Config, "expected three split ratios (train,val,test)");
  SplitRatios r{parts[0], parts[1], parts[2]};
  validate(r);
  return r;
}

std::vector<RegionBalance> balance_report(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, RegionBalance> by_region;
  for (const auto& r : records) {
    auto& b = by_region[r.region_id];
    b.region_id = r.region_id;
    (r.label == Label::Waste ? b.waste : b.background) += 1;
  }
  std::vector<RegionBalance> out;
  for (auto& [_, b] : by_region) {
    const auto hi = std::max(b.waste, b.background);
    const auto lo = std::min(b.waste, b.background);
    b.imbalance_ratio = lo == 0 ? std::numeric_limits<double>::infinity()
                                : static_cast<double>(hi) / static_cast<double>(lo);
    out.push_back(b);
  }
  return out;
}

AnnotationImport normalize_annotations(std::vector<AnnotationRecord> records) {
  for (auto& r : records) {
    if (r.region_id.empty()) fail(ErrorKind::Validation, "annotation without region_id");
  }
  std::stable_sort(records.begin(), records.end(), record_less);
  AnnotationImport out;
  for (auto& r : records) {
    if (!out.records.empty()) {
      const auto& prev = out.records.back();
      if (prev.region_id == r.region_id && prev.tile_id == r.tile_id) {
        if (prev.label != r.label) {
          fail(ErrorKind::Conflict, "tile (" + std::to_string(r.tile_id.row) + "," + std::to_string(r.tile_id.col) +
                                        ") in region " + r.region_id + " is labeled both " +
                                        std::string(to_string(prev.label)) + " and " +
                                        std::string(to_string(r.label)));
        }
        ++out.duplicates_removed;
        continue;
      }
    }
    out.records.push_back(std::move(r));
  }
  out.balance = balance_report(out.records);
  return out;
}

AnnotationImport import_annotations(const std::filesystem::path& path, const Grid* grid) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "annotation file not found: " + path.string());
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const bool geo = ext == ".geojson" || ext == ".json";
  return normalize_annotations(geo ? read_annotation_geojson(path, grid) : read_annotation_csv(path, grid));
}

std::array<std::size_t, 3> split_quotas(std::size_t n, const SplitRatios& ratios) {
  const auto r = ratios.as_array();
  std::array<std::size_t, 3> q{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = r[i] * static_cast<double>(n);
    q[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(q[i]);
    assigned += q[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best] + 1e-12) best = i;
    }
    ++q[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return q;
}

DatasetManifest make_splits(const std::vector<AnnotationRecord>& records, const SplitRatios& ratios,
                            std::uint64_t seed) {
  validate(ratios);
  auto normalized = normalize_annotations(records);
  DatasetManifest m;
  m.seed = seed;
  m.ratios = ratios;

  std::map<std::pair<std::string, Label>, std::vector<AnnotationRecord>> strata;
  for (auto& r : normalized.records) strata[{r.region_id, r.label}].push_back(r);

  for (auto& [key, members] : strata) {
    Rng rng{seed, fnv1a(key.first), static_cast<std::uint64_t>(key.second)};
    rng.shuffle(std::span<AnnotationRecord>(members));
    if (members.size() < 3) {
      m.warnings.push_back("stratum " + key.first + "/" + std::string(to_string(key.second)) + " has " +
                           std::to_string(members.size()) + " records; not every split can be populated");
    }
    const auto q = split_quotas(members.size(), ratios);
    std::size_t k = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t i = 0; i < q[s]; ++i) m.records.push_back({members[k++], static_cast<Split>(s)});
    }
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const ManifestRecord& a, const ManifestRecord& b) { return record_less(a.annotation, b.annotation); });
  return m;
}

void write_manifest_csv(std::ostream& out, const DatasetManifest& manifest) {
  auto records = manifest.records;
  std::sort(records.begin(), records.end(),
            [](const ManifestRecord& a, const ManifestRecord& b) { return record_less(a.annotation, b.annotation); });
  out << "region_id,row,col,label,split\n";
  for (const auto& r : records) {
    out << csv::escape(r.annotation.region_id) << ',' << r.annotation.tile_id.row << ',' << r.annotation.tile_id.col
        << ',' << to_string(r.annotation.label) << ',' << to_string(r.split) << '\n';
  }
}

void export_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  io::write_atomic(path, [&](std::ostream& out) { write_manifest_csv(out, manifest); });
  json meta = {{"seed", manifest.seed},
               {"ratios", {manifest.ratios.train, manifest.ratios.val, manifest.ratios.test}},
               {"records", manifest.records.size()},
               {"warnings", manifest.warnings}};
  auto meta_path = path;
  meta_path += ".meta.json";
  io::write_atomic(meta_path, meta.dump(2) + "\n");
}

DatasetManifest import_manifest(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  const auto c_region = table.require("region_id", src);
  const auto c_row = table.require("row", src);
  const auto c_col = table.require("col", src);
  const auto c_label = table.require("label", src);
  const auto c_split = table.require("split", src);
  DatasetManifest m;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto label = parse_label(row.at(c_label));
    const auto split = parse_split(row.at(c_split));
    if (!label || !split) {
      fail(ErrorKind::Validation, src + " line " + std::to_string(table.lines[i]) + ": bad label or split");
    }
    ManifestRecord r;
    r.annotation.region_id = row.at(c_region);
    r.annotation.tile_id = {csv::to_int(row.at(c_row), "row"), csv::to_int(row.at(c_col), "col")};
    r.annotation.label = *label;
    r.split = *split;
    m.records.push_back(std::move(r));
  }
  auto meta_path = path;
  meta_path += ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = json::parse(io::read_text(meta_path));
      m.seed = meta.at("seed").get<std::uint64_t>();
      const auto& r = meta.at("ratios");
      m.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
      m.warnings = meta.value("warnings", std::vector<std::string>{});
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, meta_path.string() + ": " + e.what());
    }
  }
  return m;
}

}  // namespace oddmap
