// Acceptance suite: one PASS/FAIL line per primary criterion, then a total.
// Usage: oddmap_acceptance [--keep] [workdir]

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oddmap/error.hpp"
#include "oddmap/evalsuite.hpp"
#include "oddmap/geogrid.hpp"
#include "oddmap/ingest.hpp"
#include "oddmap/kernels.hpp"
#include "oddmap/parallel.hpp"
#include "oddmap/pipeline.hpp"
#include "oddmap/rng.hpp"
#include "oddmap/sociocorr.hpp"
#include "oddmap/synthbench.hpp"
#include "oddmap/wastemap.hpp"
#include "oracles.hpp"

using namespace oddmap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects the first few failed checks so a FAIL line says what broke.
class Checks {
 public:
  void require(bool ok, const std::string& what) {
    if (ok) return;
    ++failed_;
    if (failed_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  bool ok() const { return failed_ == 0; }
  std::string failures() const {
    return failed_ > 3 ? notes_ + "; +" + std::to_string(failed_ - 3) + " more" : notes_;
  }

 private:
  std::size_t failed_ = 0;
  std::string notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RasterMeta utm_meta(std::int64_t w, std::int64_t h, double gsd, Point origin = {530000.0, 9240000.0}) {
  RasterMeta m;
  m.width_px = w;
  m.height_px = h;
  m.transform = Affine::north_up(origin.x, origin.y, gsd, gsd);
  m.crs = Crs::utm(37, true);
  m.gsd_m = gsd;
  m.band_count = 3;
  m.bits_per_sample = 8;
  return m;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 1 ------------------------------------------------------------------------

Outcome catalog_gate() {
  std::size_t admitted = 0;
  for (const auto& row : oracle::table1()) admitted += ingest::admit(row.gsd_cm / 100.0, row.area_km2).admitted;
  const bool coarse = ingest::admit(0.06, 2.0).admitted;
  const bool small = ingest::admit(0.05, 1.0).admitted;
  return {admitted == 29 && !coarse && !small,
          std::to_string(admitted) + "/29 Table 1 regions admitted; {6.0 cm, 2 km2} " +
              (coarse ? "admitted" : "rejected") + ", {5 cm, 1.0 km2} " + (small ? "admitted" : "rejected")};
}

// 2 ------------------------------------------------------------------------

Outcome grid_geometry() {
  Checks c;
  const Grid g = make_grid(utm_meta(10000, 10000, 0.05));
  c.require(g.tiles.size() == 10000, "500 m footprint gave " + std::to_string(g.tiles.size()) + " tiles");
  for (const auto& t : g.tiles) {
    const auto& w = t.pixel_window;
    c.require(w.width == 100 && w.height == 100 && w.row_off == 100 * t.id.row && w.col_off == 100 * t.id.col,
              "tile window is not 100x100 at its lattice offset");
  }

  Rng rng(2024);
  std::size_t tiles_checked = 0;
  for (int iter = 0; iter < 1000; ++iter) {
    const double gsd = 0.03 + 0.1 * rng.uniform();
    const auto w = static_cast<std::int64_t>(50 + rng.below(400));
    const auto h = static_cast<std::int64_t>(50 + rng.below(400));
    const auto meta = utm_meta(w, h, gsd, {500000.0 + 1000.0 * rng.uniform(), 9000000.0 + 1000.0 * rng.uniform()});
    GridSpec spec;
    spec.tile_size_m = 1.0 + 4.0 * rng.uniform();
    const Grid grid = make_grid(meta, spec);
    const Rect fp = meta.bounds();
    const double ts = spec.tile_size_m;
    const Point a = grid.frame.anchor;
    // Full tiles on the lattice between the footprint edges.
    const auto nx = static_cast<std::int64_t>(std::floor((fp.max_x - a.x) / ts + 1e-7)) -
                    static_cast<std::int64_t>(std::ceil((fp.min_x - a.x) / ts - 1e-7));
    const auto ny = static_cast<std::int64_t>(std::floor((a.y - fp.min_y) / ts + 1e-7)) -
                    static_cast<std::int64_t>(std::ceil((a.y - fp.max_y) / ts - 1e-7));
    c.require(static_cast<std::int64_t>(grid.tiles.size()) == std::max<std::int64_t>(0, nx) * std::max<std::int64_t>(0, ny),
              "tile count off the lattice law at footprint " + std::to_string(iter));
    std::set<TileId> seen;
    for (std::size_t i = 0; i < grid.tiles.size(); ++i) {
      const auto& t = grid.tiles[i];
      const Rect& b = t.bounds;
      c.require(seen.insert(t.id).second, "duplicate tile id");
      c.require(b == grid.frame.bounds_of(t.id), "tile bounds differ from the lattice");
      c.require(grid.frame.tile_at({(b.min_x + b.max_x) / 2, (b.min_y + b.max_y) / 2}) == t.id,
                "tile centre does not map back to its id");
      c.require(b.min_x >= fp.min_x - 1e-6 && b.max_x <= fp.max_x + 1e-6 && b.min_y >= fp.min_y - 1e-6 &&
                    b.max_y <= fp.max_y + 1e-6,
                "full tile leaves the footprint");
      const auto& win = t.pixel_window;
      c.require(win.row_off >= 0 && win.col_off >= 0 && win.col_off + win.width <= w && win.row_off + win.height <= h,
                "pixel window leaves the raster");
      c.require(win.width <= static_cast<std::int64_t>(std::ceil(ts / gsd)) + 1, "pixel window too wide");
      if (i > 0) c.require(grid.tiles[i - 1].id < t.id, "tiles not in row-major order");
      if (i > 0 && grid.tiles[i - 1].id.row == t.id.row && grid.tiles[i - 1].id.col + 1 == t.id.col)
        c.require(grid.tiles[i - 1].bounds.max_x == b.min_x, "neighbouring tiles do not share an edge");
    }
    tiles_checked += grid.tiles.size();
    // Manifest round trip on a subset; the frame and every record come back.
    if (iter % 20 == 0) {
      const fs::path tmp = fs::temp_directory_path() / ("oddmap-acc-grid-" + std::to_string(::getpid()) + ".csv");
      {
        std::ofstream out(tmp);
        write_grid_csv(out, grid);
      }
      const Grid back = read_grid_csv(tmp);
      fs::remove(tmp);
      c.require(back.tiles.size() == grid.tiles.size(), "grid CSV lost tiles");
      for (std::size_t i = 0; i < std::min(back.tiles.size(), grid.tiles.size()); ++i) {
        c.require(back.tiles[i].id == grid.tiles[i].id && back.tiles[i].pixel_window == grid.tiles[i].pixel_window &&
                      back.frame.bounds_of(back.tiles[i].id) == grid.tiles[i].bounds,
                  "grid CSV round trip changed a tile");
      }
    }
  }
  return {c.ok(), c.ok() ? "10000 tiles of 100x100 px at 5 cm; 1000 random footprints (" +
                               std::to_string(tiles_checked) + " tiles) partition and round-trip"
                         : c.failures()};
}

// 3 ------------------------------------------------------------------------

struct PlantedRun {
  bool ids_match = false;
  std::size_t n_waste = 0;
  RegionSummary summary;
};

PlantedRun planted_run(const fs::path& work, const std::string& name, std::int64_t n, std::size_t planted) {
  PlantingPlan plan;
  plan.rows = n;
  plan.cols = n;
  plan.region_id = name;
  plan.planted = choose_planted(n, n, planted, 13);
  const Fixture fx = make_fixture(plan, work / name);

  RunConfig config;
  config.out_dir = work / "runs";
  config.run_name = name;
  config.workers = default_workers();
  config.rasters = {{name, fx.raster}};
  config.truth = fx.truth;
  const RunOutcome out = run_pipeline(config);

  PlantedRun r;
  std::set<TileId> waste;
  for (const auto& p : read_predictions_csv(out.run_dir / "infer" / "predictions.csv")) {
    if (p.predicted == Label::Waste) waste.insert(p.tile_id);
  }
  r.n_waste = waste.size();
  r.ids_match = waste == plan.planted;
  const auto summaries = read_summary_csv(out.run_dir / "map" / "summary.csv");
  if (summaries.size() == 1) r.summary = summaries.front();
  return r;
}

Outcome planted_fixture(const fs::path& work) {
  const auto small = planted_run(work, "planted10", 10, 13);
  const auto large = planted_run(work, "planted64", 64, 7);
  const double expected_large = 100.0 * 7.0 / 4096.0;
  const bool pass = small.ids_match && small.n_waste == 13 && small.summary.oddmswc == 13.0 && large.ids_match &&
                    large.n_waste == 7 && large.summary.oddmswc == expected_large &&
                    expected_large == 0.1708984375;
  return {pass, "10x10/13: " + std::to_string(small.n_waste) + " waste" + (small.ids_match ? " at planted ids" : " (ids differ)") +
                    ", ODDMSWC " + fmt("%.10g", small.summary.oddmswc) + "; 64x64/7: " +
                    std::to_string(large.n_waste) + " waste" + (large.ids_match ? " at planted ids" : " (ids differ)") +
                    ", ODDMSWC " + fmt("%.10g", large.summary.oddmswc) + " (100*7/4096 = 0.1708984375)"};
}

// 4 ------------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 gen(4242);
  double worst_metric = 0.0, worst_auc = 0.0;
  std::size_t cases = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 500;
    std::bernoulli_distribution truth_draw(0.1 + 0.8 * (k % 10) / 9.0);
    std::bernoulli_distribution flip(0.05 + 0.3 * (k % 7) / 6.0);
    const auto scores = oracle::random_values(gen, n, k % 2 == 0 ? 0 : 5 + k % 20);
    std::vector<Label> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = truth_draw(gen) ? Label::Waste : Label::Background;
      const bool right = !flip(gen);
      pred[i] = right ? truth[i] : (truth[i] == Label::Waste ? Label::Background : Label::Waste);
    }
    // Skew scores toward the truth so AUC spans more than chance.
    std::vector<double> s(scores);
    for (std::size_t i = 0; i < n; ++i) {
      if (truth[i] == Label::Waste && k % 3 != 0) s[i] = std::min(1.0, s[i] + 0.25);
    }
    if (std::count(truth.begin(), truth.end(), Label::Waste) == 0 ||
        std::count(truth.begin(), truth.end(), Label::Background) == 0)
      continue;
    const auto m = prf1(confusion(pred, truth));
    const auto o = oracle::tally(pred, truth);
    for (auto [a, b] : {std::pair{m.waste.precision.value, o.waste_precision},
                        {m.waste.recall.value, o.waste_recall},
                        {m.waste.f1.value, o.waste_f1},
                        {m.background.precision.value, o.background_precision},
                        {m.background.recall.value, o.background_recall},
                        {m.background.f1.value, o.background_f1},
                        {m.accuracy, o.accuracy}}) {
      worst_metric = std::max(worst_metric, std::abs(a - b));
    }
    worst_auc = std::max(worst_auc, std::abs(roc_auc(s, truth) - oracle::pairwise_auc(s, truth)));
    ++cases;
  }
  return {cases == 100 && worst_metric <= 1e-12 && worst_auc <= 1e-12,
          std::to_string(cases) + " cases x 500; max |metric - tally| " + fmt("%.3g", worst_metric) +
              ", max |AUC - pairwise| " + fmt("%.3g", worst_auc)};
}

// 5 ------------------------------------------------------------------------

bool same_band(const MetricBand& a, const MetricBand& b) {
  return a.mean == b.mean && a.std == b.std && a.p025 == b.p025 && a.p975 == b.p975;
}

bool same_curve(const BootstrapCurve& a, const BootstrapCurve& b) {
  if (a.points.size() != b.points.size() || a.f1 != b.f1 || a.auc != b.auc || a.accuracy != b.accuracy) return false;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    const auto &p = a.points[i], &q = b.points[i];
    if (p.size != q.size || p.n_waste != q.n_waste || !same_band(p.f1, q.f1) || !same_band(p.auc, q.auc) ||
        !same_band(p.accuracy, q.accuracy))
      return false;
  }
  return true;
}

Outcome bootstrap_stability() {
  const std::size_t n = 870, n_waste = 435;
  const auto set = oracle::scored_set(n, n_waste, 870);

  BootstrapOptions opt;
  opt.sizes = {50, 100, 200, 300, 400, 500, 600, 700, 800, 870};
  opt.replicates = 200;
  opt.seed = 7;
  opt.workers = default_workers();
  const double share = static_cast<double>(n_waste) / static_cast<double>(n);
  std::size_t draws = 0, off_balance = 0;
  opt.on_resample = [&](std::size_t size, std::size_t waste, std::size_t) {
    ++draws;
    if (std::abs(static_cast<double>(waste) - static_cast<double>(size) * share) > 1.0) ++off_balance;
  };
  const auto a = bootstrap_curves(set.p_waste, set.truth, opt);
  opt.on_resample = nullptr;
  opt.workers = 1;
  const auto b = bootstrap_curves(set.p_waste, set.truth, opt);
  opt.seed = 8;
  const auto other_seed = bootstrap_curves(set.p_waste, set.truth, opt);
  const bool deterministic = same_curve(a, b) && !same_curve(a, other_seed);

  const auto& full = a.points.back();
  const bool zero_spread = full.size == n && full.f1.std == 0 && full.auc.std == 0 && full.accuracy.std == 0;

  // Deviation of the mean curve from the full-set estimate, per metric. A
  // replicate mean carries Monte Carlo error std / sqrt(replicates), so a step
  // may rise by up to two joint standard errors; the endpoints must not.
  bool shrinks = true;
  std::size_t strict_rises = 0, noisy_rises = 0;
  std::string f1_series;
  const double reps = static_cast<double>(opt.replicates);
  for (auto [band, point] : {std::pair{&BootstrapPoint::f1, a.f1}, {&BootstrapPoint::auc, a.auc},
                             {&BootstrapPoint::accuracy, a.accuracy}}) {
    std::vector<double> dev, se;
    for (const auto& p : a.points) {
      dev.push_back(std::abs((p.*band).mean - point));
      se.push_back((p.*band).std / std::sqrt(reps));
    }
    shrinks &= dev.front() >= dev.back();
    for (std::size_t i = 1; i < dev.size(); ++i) {
      if (dev[i] <= dev[i - 1]) continue;
      ++strict_rises;
      if (dev[i] - dev[i - 1] > 2.0 * std::hypot(se[i], se[i - 1])) ++noisy_rises;
    }
    if (band == &BootstrapPoint::f1) {
      for (std::size_t i = 0; i < dev.size(); ++i) f1_series += (i ? "," : "") + fmt("%.4f", dev[i]);
    }
  }
  shrinks &= noisy_rises == 0;
  return {deterministic && off_balance == 0 && draws == opt.sizes.size() * opt.replicates && zero_spread && shrinks,
          std::string(deterministic ? "seeded-deterministic" : "NOT deterministic") + "; " + std::to_string(draws) +
              " resamples, " + std::to_string(off_balance) + " off balance; full-size std " +
              (zero_spread ? "0" : "nonzero") + "; F1 mean deviation by size [" + f1_series + "]; " +
              std::to_string(strict_rises) + " local rises, " + std::to_string(noisy_rises) +
              " beyond 2 MC s.e."};
}

// 6 ------------------------------------------------------------------------

Outcome spearman_checks() {
  std::mt19937_64 gen(66);
  double worst = 0.0, worst_transform = 0.0;
  std::size_t compared = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 3 + static_cast<std::size_t>(gen() % 60);
    const int levels = k % 2 == 0 ? 0 : 2 + k % 9;
    const auto x = oracle::random_values(gen, n, levels);
    const auto y = oracle::random_values(gen, n, k % 3 == 0 ? 0 : 3 + k % 5);
    double brute = 0.0;
    try {
      brute = oracle::brute_spearman(x, y);
    } catch (...) {
      continue;  // constant vector: undefined on both sides
    }
    if (!std::isfinite(brute)) continue;
    const double rho = spearman(x, y);
    worst = std::max(worst, std::abs(rho - brute));
    std::vector<double> tx(x);
    for (auto& v : tx) v = std::exp(3.0 * v) + 7.0;
    worst_transform = std::max(worst_transform, std::abs(spearman(tx, y) - rho));
    ++compared;
  }

  const oracle::OutlierFixture fx;
  std::vector<RegionSummary> summaries;
  std::vector<RegionExtent> extents;
  IndicatorLayer shdi = make_layer("shdi");
  for (std::size_t i = 0; i < fx.regions.size(); ++i) {
    RegionSummary s;
    s.region_id = fx.regions[i];
    s.oddmswc = fx.oddmswc[i];
    s.n_tiles_analyzed = 100;
    summaries.push_back(s);
    shdi.table[fx.regions[i]] = fx.shdi[i];
  }
  const double full = sensitivity_exclude(summaries, shdi, extents, {}).rho;
  const double excl = sensitivity_exclude(summaries, shdi, extents, {"outlier"}).rho;
  return {compared >= 900 && worst <= 1e-12 && worst_transform <= 1e-12 && std::abs(excl) > std::abs(full),
          std::to_string(compared) + " vectors, max |rho - brute| " + fmt("%.3g", worst) +
              ", max transform drift " + fmt("%.3g", worst_transform) + "; outlier rho full " + fmt("%.3f", full) +
              ", excluded " + fmt("%.3f", excl)};
}

// 7 ------------------------------------------------------------------------

Outcome determinism_and_scale(const fs::path& work) {
  PlantingPlan plan;
  plan.rows = 200;
  plan.cols = 200;
  plan.gsd_m = 0.25;
  plan.marker.blob_px = 2;
  plan.region_id = "scale";
  plan.planted = choose_planted(200, 200, 1200, 77);
  const Fixture fx = make_fixture(plan, work / "scale");

  RunConfig config;
  config.out_dir = work / "runs";
  config.workers = default_workers();
  config.rasters = {{"scale", fx.raster}};
  config.truth = fx.truth;
  config.run_name = "scale_a";
  const auto a = run_pipeline(config);
  config.run_name = "scale_b";
  const auto b = run_pipeline(config);

  std::size_t differing = 0;
  bool same_files = a.outputs.size() == b.outputs.size();
  for (const auto& [rel, sha] : a.outputs) {
    const auto it = b.outputs.find(rel);
    if (it == b.outputs.end() || it->second != sha || read_bytes(a.run_dir / rel) != read_bytes(b.run_dir / rel))
      ++differing;
  }
  same_files &= differing == 0;

  const double secs = std::min(a.stage_seconds.at("infer"), b.stage_seconds.at("infer"));
  const double rate = secs > 0 ? static_cast<double>(a.tiles_classified) / secs : 0.0;

  // Paper-scale imagery for comparison: 5 cm, 100 px tiles.
  PlantingPlan fine;
  fine.rows = 60;
  fine.cols = 60;
  fine.region_id = "fine";
  fine.planted = choose_planted(60, 60, 100, 78);
  const Fixture ffx = make_fixture(fine, work / "fine");
  RunConfig fc;
  fc.out_dir = work / "runs";
  fc.run_name = "fine";
  fc.workers = default_workers();
  fc.rasters = {{"fine", ffx.raster}};
  fc.stages = {"grid", "infer"};
  const auto f = run_pipeline(fc);
  const double fine_rate = static_cast<double>(f.tiles_classified) / f.stage_seconds.at("infer");

  return {same_files && a.tiles_classified == 40000 && rate >= 5000.0,
          std::to_string(a.outputs.size()) + " outputs, " + std::to_string(differing) + " differ; " +
              std::to_string(a.tiles_classified) + " tiles at " + fmt("%.0f", rate) + " tiles/s (25 cm, " +
              std::to_string(config.workers) + " worker" + (config.workers == 1 ? "" : "s") + "; " +
              std::string(kernels::to_string(kernels::active_isa())) + "); 5 cm imagery: " + fmt("%.0f", fine_rate) + " tiles/s"};
}

}  // namespace

int main(int argc, char** argv) {
  bool keep = false;
  fs::path work;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--keep") keep = true;
    else if (arg == "-h" || arg == "--help") {
      std::puts("usage: oddmap_acceptance [--keep] [workdir]");
      return 0;
    } else work = arg;
  }
  const bool own_work = work.empty();
  if (own_work) work = fs::temp_directory_path() / ("oddmap-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(work / "runs");
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "catalog gate", 1, catalog_gate},
      {2, "grid geometry", 10, grid_geometry},
      {3, "planted fixture end to end", 30, [&] { return planted_fixture(work); }},
      {4, "metric oracles", 30, metric_oracles},
      {5, "bootstrap stability", 60, bootstrap_stability},
      {6, "spearman", 10, spearman_checks},
      {7, "determinism and scale", 60, [&] { return determinism_and_scale(work); }},
  };

  int passed = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const Error& e) {
      o = {false, std::string("error (") + std::string(to_string(e.kind())) + "): " + e.what()};
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    passed += pass;
    std::printf("%s [%d] %s: %s (%.2f s of %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", passed, criteria.size());

  if (own_work && !keep) {
    std::error_code ec;
    fs::remove_all(work, ec);
  } else {
    std::printf("work directory: %s\n", work.string().c_str());
  }
  return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
