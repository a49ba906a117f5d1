#include "oddmap/synthbench.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"
#include "oddmap/rng.hpp"

namespace oddmap {
namespace {

// Blob slots sit on a lattice with one pixel of spacing so blobs never touch
// and the planted density is exact.
std::size_t slots_per_axis(std::int64_t tile_px, int blob) { return static_cast<std::size_t>(tile_px / (blob + 1)); }

std::size_t blob_count(const PlantingPlan& plan) {
  const double tile_area = static_cast<double>(plan.tile_px() * plan.tile_px());
  const double blob_area = static_cast<double>(plan.marker.blob_px) * plan.marker.blob_px;
  return static_cast<std::size_t>(std::llround(plan.marker.density * tile_area / blob_area));
}

}  // namespace

std::int64_t PlantingPlan::tile_px() const { return std::llround(tile_size_m / gsd_m); }

void validate(const PlantingPlan& plan) {
  if (plan.rows < 1 || plan.cols < 1) fail(ErrorKind::Config, "fixture grid must have at least one tile");
  if (!(plan.gsd_m > 0.0) || !(plan.tile_size_m > 0.0)) fail(ErrorKind::Config, "gsd and tile size must be positive");
  const auto px = plan.tile_px();
  if (px < 1 || std::abs(static_cast<double>(px) * plan.gsd_m - plan.tile_size_m) > 1e-9 * plan.tile_size_m) {
    fail(ErrorKind::Config, "tile size must be a whole number of pixels");
  }
  if (!(plan.marker.density > 0.0 && plan.marker.density <= 1.0)) fail(ErrorKind::Config, "marker density must lie in (0, 1]");
  if (plan.marker.blob_px < 1) fail(ErrorKind::Config, "marker blob must be at least one pixel");
  const std::size_t slots = slots_per_axis(px, plan.marker.blob_px);
  if (blob_count(plan) > slots * slots) {
    fail(ErrorKind::Config, "marker density does not fit the tile at this blob size");
  }
  if (plan.marker.red < 200 || plan.marker.green > 60) {
    fail(ErrorKind::Config, "marker color does not satisfy the detection rule");
  }
  for (const auto& id : plan.planted) {
    if (id.row < 0 || id.row >= plan.rows || id.col < 0 || id.col >= plan.cols) {
      fail(ErrorKind::Config, "planted tile (" + std::to_string(id.row) + "," + std::to_string(id.col) +
                                  ") lies outside the grid");
    }
  }
  if (!plan.crs.metric || plan.crs.geographic()) fail(ErrorKind::Config, "fixture CRS must be projected and metric");
}

std::set<TileId> choose_planted(std::int64_t rows, std::int64_t cols, std::size_t count, std::uint64_t seed) {
  const auto total = static_cast<std::size_t>(rows * cols);
  if (count > total) fail(ErrorKind::Config, "cannot plant " + std::to_string(count) + " of " + std::to_string(total) + " tiles");
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng{seed, 0x706c616e74ULL};
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
  }
  std::set<TileId> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.insert({static_cast<std::int64_t>(idx[i]) / cols, static_cast<std::int64_t>(idx[i]) % cols});
  }
  return out;
}

RasterMeta fixture_meta(const PlantingPlan& plan) {
  validate(plan);
  RasterMeta m;
  const auto px = plan.tile_px();
  m.width_px = plan.cols * px;
  m.height_px = plan.rows * px;
  m.transform = Affine::north_up(plan.origin.x, plan.origin.y, plan.gsd_m, plan.gsd_m);
  m.crs = plan.crs;
  m.gsd_m = plan.gsd_m;
  m.band_count = 3;
  m.bits_per_sample = 8;
  return m;
}

std::vector<std::uint8_t> render_fixture(const PlantingPlan& plan) {
  const RasterMeta meta = fixture_meta(plan);
  const auto px = plan.tile_px();
  const auto width = static_cast<std::size_t>(meta.width_px);
  std::vector<std::uint8_t> rgb(width * static_cast<std::size_t>(meta.height_px) * 3);
  const int blob = plan.marker.blob_px;
  const std::size_t axis = slots_per_axis(px, blob);
  const std::size_t n_blobs = blob_count(plan);

  for (std::int64_t tr = 0; tr < plan.rows; ++tr) {
    for (std::int64_t tc = 0; tc < plan.cols; ++tc) {
      Rng rng{plan.seed, static_cast<std::uint64_t>(tr), static_cast<std::uint64_t>(tc)};
      // Earth-toned noise; red stays below the marker threshold.
      for (std::int64_t y = 0; y < px; ++y) {
        std::uint8_t* row = rgb.data() + ((static_cast<std::size_t>(tr * px + y)) * width + tc * px) * 3;
        for (std::int64_t x = 0; x < px; ++x) {
          const auto base = static_cast<int>(rng.below(60));
          row[x * 3 + 0] = static_cast<std::uint8_t>(100 + base + rng.below(20));
          row[x * 3 + 1] = static_cast<std::uint8_t>(85 + base + rng.below(20));
          row[x * 3 + 2] = static_cast<std::uint8_t>(60 + base + rng.below(20));
        }
      }
      if (!plan.planted.contains({tr, tc})) continue;
      std::vector<std::size_t> slots(axis * axis);
      std::iota(slots.begin(), slots.end(), 0);
      for (std::size_t i = 0; i < n_blobs; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(slots.size() - i));
        std::swap(slots[i], slots[j]);
        const std::int64_t sy = static_cast<std::int64_t>(slots[i] / axis) * (blob + 1);
        const std::int64_t sx = static_cast<std::int64_t>(slots[i] % axis) * (blob + 1);
        for (int dy = 0; dy < blob; ++dy) {
          std::uint8_t* row = rgb.data() + ((static_cast<std::size_t>(tr * px + sy + dy)) * width + tc * px + sx) * 3;
          for (int dx = 0; dx < blob; ++dx) {
            row[dx * 3 + 0] = plan.marker.red;
            row[dx * 3 + 1] = plan.marker.green;
            row[dx * 3 + 2] = plan.marker.blue;
          }
        }
      }
    }
  }
  return rgb;
}

std::vector<LabeledTile> fixture_truth(const PlantingPlan& plan) {
  std::vector<LabeledTile> out;
  out.reserve(static_cast<std::size_t>(plan.rows * plan.cols));
  for (std::int64_t r = 0; r < plan.rows; ++r) {
    for (std::int64_t c = 0; c < plan.cols; ++c) {
      out.push_back({plan.region_id, {r, c}, plan.planted.contains({r, c}) ? Label::Waste : Label::Background});
    }
  }
  return out;
}

Fixture make_fixture(const PlantingPlan& plan, const std::filesystem::path& out) {
  const RasterMeta meta = fixture_meta(plan);
  const auto rgb = render_fixture(plan);
  Fixture f;
  f.plan = plan;
  f.raster = out / "fixture.tif";
  f.truth = out / "truth.csv";
  std::filesystem::create_directories(out);
  auto tmp = f.raster;
  tmp += ".tmp";
  write_geotiff(tmp, meta, rgb, {}, {.block_size = 256, .deflate = true});
  std::filesystem::rename(tmp, f.raster);

  std::vector<Prediction> truth_rows;
  for (const auto& t : fixture_truth(plan)) truth_rows.push_back({t.region_id, t.tile_id, t.label, 1.0});
  write_predictions_csv(f.truth, truth_rows);

  nlohmann::json planted = nlohmann::json::array();
  for (const auto& id : plan.planted) planted.push_back({id.row, id.col});
  nlohmann::json j = {{"region_id", plan.region_id},
                      {"rows", plan.rows},
                      {"cols", plan.cols},
                      {"planted", planted},
                      {"seed", plan.seed},
                      {"gsd_m", plan.gsd_m},
                      {"tile_size_m", plan.tile_size_m},
                      {"crs", plan.crs.name()},
                      {"origin", {plan.origin.x, plan.origin.y}},
                      {"marker",
                       {{"density", plan.marker.density},
                        {"blob_px", plan.marker.blob_px},
                        {"rgb", {plan.marker.red, plan.marker.green, plan.marker.blue}}}}};
  io::write_atomic(out / "plan.json", j.dump(2) + "\n");
  return f;
}

PipelineDiff verify_pipeline(const std::vector<LabeledTile>& truth, const std::vector<Prediction>& predictions) {
  const JoinResult j = join(predictions, truth);
  PipelineDiff d;
  d.missing = j.unmatched_truth;
  d.unexpected = j.unmatched_predictions;
  for (const auto& s : j.samples) {
    const bool p = s.predicted == Label::Waste;
    const bool t = s.truth == Label::Waste;
    if (p && t) ++d.tp;
    else if (p) ++d.fp;
    else if (t) ++d.fn;
    else ++d.tn;
    if (s.predicted != s.truth) d.mismatched.push_back(s.key);
  }
  d.exact_match = d.mismatched.empty() && d.missing.empty() && d.unexpected.empty();
  return d;
}

}  // namespace oddmap
