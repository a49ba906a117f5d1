#include "oddmap/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "oddmap/csv.hpp"
#include "oddmap/error.hpp"
#include "oddmap/evalsuite.hpp"
#include "oddmap/geogrid.hpp"
#include "oddmap/infer.hpp"
#include "oddmap/io.hpp"
#include "oddmap/raster.hpp"
#include "oddmap/sociocorr.hpp"
#include "oddmap/tiles.hpp"
#include "oddmap/wastemap.hpp"

namespace oddmap {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_list(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    std::stringstream in(v);
    std::string part;
    while (std::getline(in, part, ',')) {
      part = trim(part);
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

std::string single(std::string_view key, const std::vector<std::string>& values) {
  if (values.size() != 1) fail(ErrorKind::Config, std::string(key) + " takes exactly one value");
  return trim(values.front());
}

double to_number(std::string_view key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, std::string(key) + ": '" + text + "' is not a number");
  }
}

std::uint64_t to_count(std::string_view key, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    fail(ErrorKind::Config, std::string(key) + ": '" + text + "' is not a non-negative integer");
  }
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    fail(ErrorKind::Config, std::string(key) + ": '" + text + "' is out of range");
  }
}

bool to_bool(std::string_view key, std::string text) {
  std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  fail(ErrorKind::Config, std::string(key) + ": '" + text + "' is not a boolean");
}

std::optional<fs::path> to_path(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return fs::path(text);
}

std::string ini_string(const std::string& s) { return json(s).dump(); }

std::string ini_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + ini_string(items[i]);
  return out + "]";
}

std::string ini_number(double v) { return io::format_decimal(v, 12); }

std::string timestamp_utc(const char* format) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, format, &tm);
  return buf;
}

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {}

  void event(const std::string& stage, const std::string& event, json extra = json::object()) {
    extra["ts"] = timestamp_utc("%Y-%m-%dT%H:%M:%SZ");
    extra["stage"] = stage;
    extra["event"] = event;
    out_ << extra.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct RegionState {
  RasterInput input;
  std::optional<Grid> grid;
};

struct RunState {
  const RunConfig& config;
  fs::path dir;
  RunLog& log;
  std::vector<RegionState> regions;
  std::optional<std::vector<Prediction>> predictions;
  std::optional<DatasetManifest> manifest;
  std::optional<std::vector<RegionSummary>> summaries;
  std::size_t tiles_classified = 0;
};

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& writer) { io::write_atomic(path, writer); }

std::vector<Prediction> predictions_of(RunState& s) {
  if (s.predictions) return *s.predictions;
  if (!s.config.predictions) fail(ErrorKind::Config, "no predictions: run the infer stage or set infer.predictions");
  s.predictions = read_predictions_csv(*s.config.predictions);
  return *s.predictions;
}

void stage_ingest(RunState& s) {
  const auto transport = ingest::make_http_transport();
  ingest::CatalogClient client{*transport, s.config.catalog_url};
  const ingest::AdmissionPolicy policy{s.config.max_gsd_m, s.config.min_area_km2};
  json fetched = json::array();
  for (const auto& id : s.config.oam_ids) {
    const auto r = ingest::fetch_entry(client, id, s.dir / "ingest");
    const auto admission = ingest::admit(r.entry, policy);
    fetched.push_back({{"oam_id", id}, {"admitted", admission.admitted}, {"reasons", admission.reasons}});
    s.log.event("ingest", admission.admitted ? "admitted" : "rejected", {{"oam_id", id}, {"reasons", admission.reasons}});
    if (admission.admitted) s.regions.push_back({{id, r.path}, std::nullopt});
  }
  io::write_atomic(s.dir / "ingest" / "admission.json", fetched.dump(2) + "\n");
}

void stage_grid(RunState& s) {
  GridSpec spec;
  spec.tile_size_m = s.config.tile_size_m;
  spec.include_partials = s.config.include_partials;
  for (auto& region : s.regions) {
    const RasterDataset raster = RasterDataset::open(region.input.path);
    region.grid = make_grid(raster.meta(), spec);
    const auto base = s.dir / "grid" / region.input.region_id;
    write_file(fs::path(base).concat(".csv"), [&](std::ostream& out) { write_grid_csv(out, *region.grid); });
    write_file(fs::path(base).concat(".geojson"), [&](std::ostream& out) { write_grid_geojson(out, *region.grid); });
    s.log.event("grid", "region", {{"region_id", region.input.region_id}, {"tiles", region.grid->tiles.size()}});
  }
}

void stage_tiles(RunState& s) {
  if (!s.config.dump_png) {
    s.log.event("tiles", "streamed", {{"note", "tiles are extracted on the fly by infer"}});
    return;
  }
  for (const auto& region : s.regions) {
    const RasterDataset raster = RasterDataset::open(region.input.path);
    const auto n = dump_tiles_png(raster, region.grid->tiles, region.input.region_id,
                                  s.dir / "tiles" / region.input.region_id, s.config.tensor_size);
    s.log.event("tiles", "region", {{"region_id", region.input.region_id}, {"images", n}});
  }
}

void stage_dataset(RunState& s) {
  const Grid* grid = s.regions.size() == 1 && s.regions.front().grid ? &*s.regions.front().grid : nullptr;
  const auto imported = import_annotations(*s.config.labels, grid);
  s.manifest = make_splits(imported.records, s.config.ratios, s.config.split_seed);
  export_manifest(*s.manifest, s.dir / "dataset" / "manifest.csv");
  write_file(s.dir / "dataset" / "balance.csv", [&](std::ostream& out) {
    out << "region_id,waste,background,imbalance_ratio\n";
    for (const auto& b : imported.balance) {
      out << csv::escape(b.region_id) << ',' << b.waste << ',' << b.background << ','
          << (std::isinf(b.imbalance_ratio) ? std::string("inf") : io::format_decimal(b.imbalance_ratio, 6)) << '\n';
    }
  });
  for (const auto& w : s.manifest->warnings) s.log.event("dataset", "warning", {{"message", w}});
}

void stage_infer(RunState& s) {
  std::unique_ptr<ClassifierBackend> backend;
  if (s.config.backend == "reference") {
    ReferenceParams params;
    params.fraction = s.config.marker_fraction;
    backend = reference_classifier(params);
  } else {
    backend = load_model(*s.config.model);
  }
  std::vector<Prediction> all;
  std::vector<std::pair<std::string, SkippedTile>> skipped;
  for (const auto& region : s.regions) {
    const RasterDataset raster = RasterDataset::open(region.input.path);
    InferenceOptions opt;
    opt.region_id = region.input.region_id;
    opt.batch_size = s.config.batch_size;
    opt.workers = s.config.workers;
    opt.tensor_size = s.config.tensor_size;
    opt.min_valid_fraction = s.config.min_valid_fraction;
    opt.checkpoint_every = s.config.checkpoint_every;
    opt.checkpoint_dir = s.dir / "infer" / "checkpoint" / region.input.region_id;
    const auto t0 = std::chrono::steady_clock::now();
    auto result = run_inference(raster, region.grid->tiles, *backend, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.tiles_classified += result.predictions.size();
    s.log.event("infer", "region",
                {{"region_id", opt.region_id},
                 {"predicted", result.predictions.size()},
                 {"skipped", result.skipped.size()},
                 {"seconds", secs},
                 {"tiles_per_second", secs > 0 ? static_cast<double>(result.predictions.size()) / secs : 0.0}});
    for (auto& p : result.predictions) all.push_back(std::move(p));
    for (auto& k : result.skipped) skipped.emplace_back(region.input.region_id, std::move(k));
  }
  fs::remove_all(s.dir / "infer" / "checkpoint");
  write_predictions_csv(s.dir / "infer" / "predictions.csv", all);
  write_file(s.dir / "infer" / "skipped.csv", [&](std::ostream& out) {
    out << "region_id,row,col,valid_fraction,reason\n";
    for (const auto& [region, k] : skipped) {
      out << csv::escape(region) << ',' << k.tile_id.row << ',' << k.tile_id.col << ','
          << io::format_decimal(k.valid_fraction, 6) << ',' << k.reason << '\n';
    }
  });
  const auto stats = confidence_stats(all);
  io::write_atomic(s.dir / "infer" / "confidence.json",
                   json{{"count", stats.count}, {"mean", stats.mean}, {"median", stats.median}}.dump(2) + "\n");
  s.predictions = std::move(all);
}

void stage_eval(RunState& s) {
  const auto preds = predictions_of(s);
  std::vector<LabeledTile> truth;
  if (s.config.truth) {
    truth = read_labels_csv(*s.config.truth, s.config.truth_split);
  } else if (s.manifest) {
    for (const auto& r : s.manifest->records) {
      if (r.split == Split::Test) truth.push_back({r.annotation.region_id, r.annotation.tile_id, r.annotation.label});
    }
  } else {
    fail(ErrorKind::Config, "eval needs eval.truth or dataset labels");
  }
  EvalReport report = evaluate(preds, truth);
  const auto conf = confidence_stats(preds, truth);
  if (!s.config.bootstrap_sizes.empty()) {
    const JoinResult j = join(preds, truth);
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& x : j.samples) {
      scores.push_back(x.p_waste);
      labels.push_back(x.truth);
    }
    BootstrapOptions opt;
    opt.sizes = parse_sizes(s.config.bootstrap_sizes, scores.size());
    opt.replicates = s.config.replicates;
    opt.seed = s.config.bootstrap_seed;
    opt.workers = s.config.workers;
    report.bootstrap = bootstrap_curves(scores, labels, opt);
    write_file(s.dir / "eval" / "curve.csv", [&](std::ostream& out) { write_curve_csv(out, *report.bootstrap); });
  }
  json j = to_json(report);
  j["confidence"] = {{"mean", conf.mean},
                     {"median", conf.median},
                     {"correct_mean", conf.correct_mean ? json(*conf.correct_mean) : json(nullptr)},
                     {"incorrect_mean", conf.incorrect_mean ? json(*conf.incorrect_mean) : json(nullptr)}};
  io::write_atomic(s.dir / "eval" / "report.json", j.dump(2) + "\n");
  write_file(s.dir / "eval" / "report.md", [&](std::ostream& out) { write_markdown(out, report); });
}

std::vector<RegionSummary> summaries_of(RunState& s) {
  if (s.summaries) return *s.summaries;
  std::vector<std::string> declared;
  for (const auto& r : s.regions) declared.push_back(r.input.region_id);
  s.summaries = rank_regions(summarize_regions(predictions_of(s), declared));
  return *s.summaries;
}

void stage_map(RunState& s) {
  const auto summaries = summaries_of(s);
  write_file(s.dir / "map" / "summary.csv", [&](std::ostream& out) { write_summary_csv(out, summaries); });
  const auto preds = predictions_of(s);
  for (const auto& region : s.regions) {
    if (!region.grid) continue;
    std::vector<Prediction> mine;
    for (const auto& p : preds) {
      if (p.region_id == region.input.region_id) mine.push_back(p);
    }
    write_file(s.dir / "map" / (region.input.region_id + ".geojson"), [&](std::ostream& out) {
      export_map_geojson(out, *region.grid, mine, {.waste_only = s.config.waste_only_map});
    });
  }
}

void stage_corr(RunState& s) {
  const auto summaries = summaries_of(s);
  std::vector<IndicatorLayer> layers;
  for (const auto& spec : s.config.layers) {
    const auto eq = spec.find('=');
    IndicatorLayer layer = make_layer(spec.substr(0, eq));
    const fs::path source = spec.substr(eq + 1);
    if (source.extension() == ".csv") {
      layer.table = read_indicator_table(source);
    } else {
      layer.raster = load_indicator_raster(source);
    }
    layers.push_back(std::move(layer));
  }
  std::vector<RegionExtent> extents;
  if (s.config.regions) extents = read_region_extents(*s.config.regions);
  const auto report = bivariate_report(summaries, layers, extents);
  io::write_atomic(s.dir / "corr" / "report.json", to_json(report).dump(2) + "\n");
  auto scatter = [&](const CorrelationReport& r, const CorrelationResult& pair, const std::string& prefix) {
    write_file(s.dir / "corr" / (prefix + pair.x_name + "__" + pair.y_name + ".csv"),
               [&](std::ostream& out) { write_scatter_csv(out, r, pair); });
  };
  for (const auto& pair : report.target) scatter(report, pair, "scatter_");
  for (const auto& pair : report.predictors) scatter(report, pair, "scatter_");
  if (!s.config.exclude.empty()) {
    const auto reduced = bivariate_report(summaries, layers, extents, s.config.exclude);
    io::write_atomic(s.dir / "corr" / "sensitivity.json", to_json(reduced).dump(2) + "\n");
  }
}

const std::vector<std::string> kKeys = {
    "run.stages",           "run.workers",         "ingest.oam_ids",       "ingest.catalog_url",
    "ingest.max_gsd_m",     "ingest.min_area_km2", "grid.rasters",         "grid.tile_size_m",
    "grid.include_partials", "tiles.tensor_size",  "tiles.dump_png",       "dataset.labels",
    "dataset.ratios",       "dataset.split_seed",  "infer.backend",        "infer.model",
    "infer.batch_size",     "infer.min_valid_fraction", "infer.marker_fraction", "infer.checkpoint_every",
    "infer.predictions",    "eval.truth",          "eval.truth_split",     "eval.bootstrap_sizes",
    "eval.replicates",      "eval.bootstrap_seed", "map.waste_only",       "corr.layers",
    "corr.regions",         "corr.exclude",        "run.out_dir",          "run.run_name"};

}  // namespace

const std::vector<std::string>& setting_keys() { return kKeys; }

void apply_setting(RunConfig& c, std::string_view key, const std::vector<std::string>& values) {
  const std::string k(key);
  auto one = [&] { return single(key, values); };
  if (k == "run.stages") c.stages = split_list(values);
  else if (k == "run.out_dir") c.out_dir = one();
  else if (k == "run.run_name") c.run_name = one().empty() ? std::nullopt : std::optional<std::string>(one());
  else if (k == "run.workers") c.workers = to_count(key, one());
  else if (k == "ingest.oam_ids") c.oam_ids = split_list(values);
  else if (k == "ingest.catalog_url") c.catalog_url = one();
  else if (k == "ingest.max_gsd_m") c.max_gsd_m = to_number(key, one());
  else if (k == "ingest.min_area_km2") c.min_area_km2 = to_number(key, one());
  else if (k == "grid.rasters") {
    c.rasters.clear();
    for (const auto& r : split_list(values)) c.rasters.push_back(parse_raster_input(r));
  } else if (k == "grid.tile_size_m") c.tile_size_m = to_number(key, one());
  else if (k == "grid.include_partials") c.include_partials = to_bool(key, one());
  else if (k == "tiles.tensor_size") c.tensor_size = static_cast<int>(to_count(key, one()));
  else if (k == "tiles.dump_png") c.dump_png = to_bool(key, one());
  else if (k == "dataset.labels") c.labels = to_path(one());
  else if (k == "dataset.ratios") {
    std::string joined;
    for (const auto& v : split_list(values)) joined += (joined.empty() ? "" : ",") + v;
    c.ratios = parse_ratios(joined);
  } else if (k == "dataset.split_seed") c.split_seed = to_count(key, one());
  else if (k == "infer.backend") c.backend = one();
  else if (k == "infer.model") c.model = to_path(one());
  else if (k == "infer.batch_size") c.batch_size = to_count(key, one());
  else if (k == "infer.min_valid_fraction") c.min_valid_fraction = to_number(key, one());
  else if (k == "infer.marker_fraction") c.marker_fraction = to_number(key, one());
  else if (k == "infer.checkpoint_every") c.checkpoint_every = to_count(key, one());
  else if (k == "infer.predictions") c.predictions = to_path(one());
  else if (k == "eval.truth") c.truth = to_path(one());
  else if (k == "eval.truth_split") c.truth_split = one().empty() ? std::nullopt : std::optional<std::string>(one());
  else if (k == "eval.bootstrap_sizes") {
    std::string joined;
    for (const auto& v : split_list(values)) joined += (joined.empty() ? "" : ",") + v;
    c.bootstrap_sizes = joined;
  } else if (k == "eval.replicates") c.replicates = to_count(key, one());
  else if (k == "eval.bootstrap_seed") c.bootstrap_seed = to_count(key, one());
  else if (k == "map.waste_only") c.waste_only_map = to_bool(key, one());
  else if (k == "corr.layers") c.layers = split_list(values);
  else if (k == "corr.regions") c.regions = to_path(one());
  else if (k == "corr.exclude") c.exclude = split_list(values);
  else fail(ErrorKind::Config, "unknown setting " + k);
}

void apply_ini(RunConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot read config file " + path.string());
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) fail(ErrorKind::Config, path.string() + ": setting " + item.fullname() + " needs a section");
    std::vector<std::string> values = item.inputs;
    if (values.size() == 1 && values.front() == "\"\"") values.front().clear();
    apply_setting(config, item.fullname(), values.empty() ? std::vector<std::string>{""} : values);
  }
}

RasterInput parse_raster_input(const std::string& text) {
  const auto eq = text.find('=');
  RasterInput r;
  if (eq == std::string::npos) {
    r.path = trim(text);
    r.region_id = r.path.stem().string();
  } else {
    r.region_id = trim(text.substr(0, eq));
    r.path = trim(text.substr(eq + 1));
  }
  if (r.region_id.empty() || r.path.empty()) fail(ErrorKind::Config, "bad raster input '" + text + "'");
  return r;
}

void validate(const RunConfig& c) {
  for (const auto& stage : c.stages) {
    if (std::find(kStageOrder.begin(), kStageOrder.end(), stage) == kStageOrder.end()) {
      fail(ErrorKind::Config, "unknown stage '" + stage + "'");
    }
  }
  validate(c.ratios);
  ingest::validate(ingest::AdmissionPolicy{c.max_gsd_m, c.min_area_km2});
  if (c.workers < 1) fail(ErrorKind::Config, "run.workers must be at least 1");
  if (!(c.tile_size_m > 0.0)) fail(ErrorKind::Config, "grid.tile_size_m must be positive");
  if (c.tensor_size < 8 || c.tensor_size > 4096) fail(ErrorKind::Config, "tiles.tensor_size must lie in [8, 4096]");
  if (c.batch_size < 1) fail(ErrorKind::Config, "infer.batch_size must be at least 1");
  if (c.checkpoint_every < 1) fail(ErrorKind::Config, "infer.checkpoint_every must be at least 1");
  if (!(c.min_valid_fraction >= 0.0 && c.min_valid_fraction <= 1.0)) {
    fail(ErrorKind::Config, "infer.min_valid_fraction must lie in [0, 1]");
  }
  if (!(c.marker_fraction >= 0.0 && c.marker_fraction < 1.0)) fail(ErrorKind::Config, "infer.marker_fraction must lie in [0, 1)");
  if (c.backend != "reference" && c.backend != "onnx") fail(ErrorKind::Config, "infer.backend must be reference or onnx");
  if (c.backend == "onnx" && !c.model) fail(ErrorKind::Config, "infer.backend onnx needs infer.model");
  if (c.backend == "onnx" && c.tensor_size != kTensorSize) fail(ErrorKind::Config, "onnx models take 128-pixel tiles");
  if (c.replicates < 1) fail(ErrorKind::Config, "eval.replicates must be at least 1");
  if (c.truth_split && !parse_split(*c.truth_split)) fail(ErrorKind::Config, "eval.truth_split must be train, val or test");
  std::set<std::string> ids;
  for (const auto& r : c.rasters) {
    if (!ids.insert(r.region_id).second) fail(ErrorKind::Config, "duplicate region " + r.region_id);
  }
  for (const auto& id : c.oam_ids) {
    if (!ids.insert(id).second) fail(ErrorKind::Config, "duplicate region " + id);
  }
  for (const auto& l : c.layers) {
    const auto eq = l.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == l.size()) {
      fail(ErrorKind::Config, "corr.layers entry '" + l + "' must be name=path");
    }
  }
  const auto stages = resolve_stages(c);
  auto has = [&](const char* s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  if (has("grid") && c.rasters.empty() && c.oam_ids.empty()) fail(ErrorKind::Config, "grid stage needs grid.rasters or ingest.oam_ids");
  if (has("dataset") && !c.labels) fail(ErrorKind::Config, "dataset stage needs dataset.labels");
  if ((has("eval") || has("map") || has("corr")) && !has("infer") && !c.predictions) {
    fail(ErrorKind::Config, "eval/map/corr need the infer stage or infer.predictions");
  }
  if (has("eval") && !c.truth && !has("dataset")) fail(ErrorKind::Config, "eval stage needs eval.truth or dataset labels");
  if (has("corr") && c.layers.empty()) fail(ErrorKind::Config, "corr stage needs corr.layers");
  if (!c.bootstrap_sizes.empty()) {
    for (const auto& part : split_list({c.bootstrap_sizes})) {
      if (part != "full") to_count("eval.bootstrap_sizes", part);
    }
  }
}

std::vector<std::string> resolve_stages(const RunConfig& c) {
  std::set<std::string> want(c.stages.begin(), c.stages.end());
  if (want.empty()) {
    const bool rasters = !c.rasters.empty() || !c.oam_ids.empty();
    if (!c.oam_ids.empty()) want.insert("ingest");
    if (rasters) want.insert({"grid", "tiles", "infer"});
    if (c.labels) want.insert("dataset");
    if (rasters || c.predictions) want.insert("map");
    if ((rasters || c.predictions) && (c.truth || c.labels)) want.insert("eval");
    if ((rasters || c.predictions) && !c.layers.empty()) want.insert("corr");
  }
  // Tiles and inference read tiles off the grid.
  if (want.contains("tiles") || want.contains("infer")) want.insert("grid");
  std::vector<std::string> out;
  for (const auto& s : kStageOrder) {
    if (want.contains(s)) out.push_back(s);
  }
  return out;
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  auto path_or_empty = [](const std::optional<fs::path>& p) { return ini_string(p ? p->string() : ""); };
  std::vector<std::string> rasters;
  for (const auto& r : c.rasters) rasters.push_back(r.region_id + "=" + r.path.string());
  o << "[run]\n"
    << "stages = " << ini_list(c.stages) << "\n"
    << "workers = " << c.workers << "\n\n";
  o << "[ingest]\n"
    << "oam_ids = " << ini_list(c.oam_ids) << "\n"
    << "catalog_url = " << ini_string(c.catalog_url) << "\n"
    << "max_gsd_m = " << ini_number(c.max_gsd_m) << "\n"
    << "min_area_km2 = " << ini_number(c.min_area_km2) << "\n\n";
  o << "[grid]\n"
    << "rasters = " << ini_list(rasters) << "\n"
    << "tile_size_m = " << ini_number(c.tile_size_m) << "\n"
    << "include_partials = " << (c.include_partials ? "true" : "false") << "\n\n";
  o << "[tiles]\n"
    << "tensor_size = " << c.tensor_size << "\n"
    << "dump_png = " << (c.dump_png ? "true" : "false") << "\n\n";
  o << "[dataset]\n"
    << "labels = " << path_or_empty(c.labels) << "\n"
    << "ratios = " << ini_string(ini_number(c.ratios.train) + "," + ini_number(c.ratios.val) + "," + ini_number(c.ratios.test))
    << "\n"
    << "split_seed = " << c.split_seed << "\n\n";
  o << "[infer]\n"
    << "backend = " << ini_string(c.backend) << "\n"
    << "model = " << path_or_empty(c.model) << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "min_valid_fraction = " << ini_number(c.min_valid_fraction) << "\n"
    << "marker_fraction = " << ini_number(c.marker_fraction) << "\n"
    << "checkpoint_every = " << c.checkpoint_every << "\n"
    << "predictions = " << path_or_empty(c.predictions) << "\n\n";
  o << "[eval]\n"
    << "truth = " << path_or_empty(c.truth) << "\n"
    << "truth_split = " << ini_string(c.truth_split.value_or("")) << "\n"
    << "bootstrap_sizes = " << ini_string(c.bootstrap_sizes) << "\n"
    << "replicates = " << c.replicates << "\n"
    << "bootstrap_seed = " << c.bootstrap_seed << "\n\n";
  o << "[map]\n"
    << "waste_only = " << (c.waste_only_map ? "true" : "false") << "\n\n";
  o << "[corr]\n"
    << "layers = " << ini_list(c.layers) << "\n"
    << "regions = " << path_or_empty(c.regions) << "\n"
    << "exclude = " << ini_list(c.exclude) << "\n";
  return o.str();
}

json to_json(const RunConfig& c) {
  std::vector<std::string> rasters;
  for (const auto& r : c.rasters) rasters.push_back(r.region_id + "=" + r.path.string());
  auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  return {{"run", {{"stages", c.stages}, {"workers", c.workers}}},
          {"ingest",
           {{"oam_ids", c.oam_ids}, {"catalog_url", c.catalog_url}, {"max_gsd_m", c.max_gsd_m}, {"min_area_km2", c.min_area_km2}}},
          {"grid", {{"rasters", rasters}, {"tile_size_m", c.tile_size_m}, {"include_partials", c.include_partials}}},
          {"tiles", {{"tensor_size", c.tensor_size}, {"dump_png", c.dump_png}}},
          {"dataset",
           {{"labels", opt_path(c.labels)},
            {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}},
            {"split_seed", c.split_seed}}},
          {"infer",
           {{"backend", c.backend},
            {"model", opt_path(c.model)},
            {"batch_size", c.batch_size},
            {"min_valid_fraction", c.min_valid_fraction},
            {"marker_fraction", c.marker_fraction},
            {"checkpoint_every", c.checkpoint_every},
            {"predictions", opt_path(c.predictions)}}},
          {"eval",
           {{"truth", opt_path(c.truth)},
            {"truth_split", c.truth_split ? json(*c.truth_split) : json(nullptr)},
            {"bootstrap_sizes", c.bootstrap_sizes},
            {"replicates", c.replicates},
            {"bootstrap_seed", c.bootstrap_seed}}},
          {"map", {{"waste_only", c.waste_only_map}}},
          {"corr", {{"layers", c.layers}, {"regions", opt_path(c.regions)}, {"exclude", c.exclude}}}};
}

RunOutcome run_pipeline(const RunConfig& config) {
  validate(config);
  RunOutcome outcome;
  outcome.stages = resolve_stages(config);

  fs::create_directories(config.out_dir);
  if (config.run_name) {
    outcome.run_dir = config.out_dir / *config.run_name;
    if (fs::exists(outcome.run_dir)) fail(ErrorKind::Config, "run directory " + outcome.run_dir.string() + " already exists");
  } else {
    const std::string stamp = "run-" + timestamp_utc("%Y%m%dT%H%M%SZ");
    outcome.run_dir = config.out_dir / stamp;
    for (int n = 2; fs::exists(outcome.run_dir); ++n) outcome.run_dir = config.out_dir / (stamp + "-" + std::to_string(n));
  }
  fs::create_directories(outcome.run_dir);
  io::write_atomic(outcome.run_dir / "config.ini", to_ini(config));
  io::write_atomic(outcome.run_dir / "config.json", to_json(config).dump(2) + "\n");

  RunLog log(outcome.run_dir / "log.jsonl");
  RunState state{config, outcome.run_dir, log, {}, {}, {}, {}, 0};
  for (const auto& r : config.rasters) state.regions.push_back({r, std::nullopt});

  const std::map<std::string, std::function<void(RunState&)>> handlers = {
      {"ingest", stage_ingest}, {"grid", stage_grid}, {"tiles", stage_tiles}, {"dataset", stage_dataset},
      {"infer", stage_infer},   {"eval", stage_eval}, {"map", stage_map},     {"corr", stage_corr}};
  const auto started = timestamp_utc("%Y-%m-%dT%H:%M:%SZ");
  for (const auto& stage : outcome.stages) {
    log.event(stage, "start");
    const auto t0 = std::chrono::steady_clock::now();
    try {
      handlers.at(stage)(state);
    } catch (const Error& e) {
      const json failure = {{"stage", stage}, {"kind", to_string(e.kind())}, {"message", e.what()},
                            {"exit_code", exit_code(e.kind())}, {"retriable", e.retriable()}};
      io::write_atomic(outcome.run_dir / "failure.json", failure.dump(2) + "\n");
      log.event(stage, "failed", {{"kind", to_string(e.kind())}, {"message", e.what()}});
      throw;
    } catch (const std::exception& e) {
      const json failure = {{"stage", stage}, {"kind", "internal"}, {"message", e.what()}, {"exit_code", 3}, {"retriable", false}};
      io::write_atomic(outcome.run_dir / "failure.json", failure.dump(2) + "\n");
      log.event(stage, "failed", {{"kind", "internal"}, {"message", e.what()}});
      throw;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    outcome.stage_seconds[stage] = secs;
    log.event(stage, "end", {{"seconds", secs}});
  }
  outcome.tiles_classified = state.tiles_classified;

  const std::set<std::string> excluded = {"log.jsonl", "run.json", "manifest.json", "failure.json"};
  for (const auto& entry : fs::recursive_directory_iterator(outcome.run_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), outcome.run_dir).generic_string();
    if (excluded.contains(rel)) continue;
    outcome.outputs[rel] = io::sha256_file(entry.path());
  }
  io::write_atomic(outcome.run_dir / "manifest.json", json{{"outputs", outcome.outputs}}.dump(2) + "\n");
  io::write_atomic(outcome.run_dir / "run.json",
                   json{{"started", started},
                        {"finished", timestamp_utc("%Y-%m-%dT%H:%M:%SZ")},
                        {"stages", outcome.stages},
                        {"stage_seconds", outcome.stage_seconds},
                        {"tiles_classified", outcome.tiles_classified}}
                           .dump(2) + "\n");
  return outcome;
}

}  // namespace oddmap
