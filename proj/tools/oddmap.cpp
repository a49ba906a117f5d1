// oddmap command-line entry point.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "oddmap/csv.hpp"
#include "oddmap/dataset.hpp"
#include "oddmap/error.hpp"
#include "oddmap/evalsuite.hpp"
#include "oddmap/geogrid.hpp"
#include "oddmap/infer.hpp"
#include "oddmap/ingest.hpp"
#include "oddmap/io.hpp"
#include "oddmap/kernels.hpp"
#include "oddmap/pipeline.hpp"
#include "oddmap/predictions.hpp"
#include "oddmap/sociocorr.hpp"
#include "oddmap/synthbench.hpp"
#include "oddmap/tiles.hpp"
#include "oddmap/wastemap.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oddmap;

namespace {

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void write_or_print(const std::string& path, const std::function<void(std::ostream&)>& writer) {
  if (path.empty() || path == "-") {
    writer(std::cout);
  } else {
    io::write_atomic(path, writer);
  }
}

std::string region_of(const std::string& region, const fs::path& raster) {
  return region.empty() ? raster.stem().string() : region;
}

struct IngestArgs {
  std::string bbox, id, dest = "imagery", out, catalog = "https://api.openaerialmap.org";
  double max_gsd = 0.06, min_area = 1.0;
  int timeout = 60;
};

void add_ingest(CLI::App& app) {
  auto* cmd = app.add_subcommand("ingest", "Query OpenAerialMap and download admitted imagery");
  cmd->require_subcommand(1);
  auto a = std::make_shared<IngestArgs>();
  for (auto* sub : {cmd->add_subcommand("search", "List admitted scenes intersecting a bounding box"),
                    cmd->add_subcommand("fetch", "Download one scene with checksum verification")}) {
    sub->add_option("--catalog-url", a->catalog, "Catalog base URL")->capture_default_str();
    sub->add_option("--max-gsd", a->max_gsd, "Admit GSD strictly below this (m)")->capture_default_str();
    sub->add_option("--min-area", a->min_area, "Admit coverage strictly above this (km^2)")->capture_default_str();
    sub->add_option("--timeout", a->timeout, "HTTP timeout in seconds")->capture_default_str();
  }
  auto* search = cmd->get_subcommand("search");
  search->add_option("--bbox", a->bbox, "w,s,e,n in degrees")->required();
  search->add_option("--out", a->out, "JSON output file (stdout when omitted)");
  search->callback([a] {
    const auto transport = ingest::make_http_transport(a->timeout);
    const ingest::CatalogClient client{*transport, a->catalog};
    const ingest::AdmissionPolicy policy{a->max_gsd, a->min_area};
    ingest::validate(policy);
    json out = json::array();
    for (const auto& e : ingest::search_catalog(client, ingest::parse_bbox(a->bbox), policy)) {
      out.push_back(ingest::to_json(e));
    }
    write_or_print(a->out, [&](std::ostream& o) { o << out.dump(2) << '\n'; });
  });
  auto* fetch = cmd->get_subcommand("fetch");
  fetch->add_option("--oam-id,--id", a->id, "OAM image id")->required();
  fetch->add_option("--out,--dest", a->dest, "Download directory")->capture_default_str();
  fetch->callback([a] {
    const auto transport = ingest::make_http_transport(a->timeout);
    const ingest::CatalogClient client{*transport, a->catalog};
    const ingest::AdmissionPolicy policy{a->max_gsd, a->min_area};
    ingest::validate(policy);
    const auto r = ingest::fetch_entry(client, a->id, a->dest);
    const auto adm = ingest::admit(r.entry, policy);
    std::cout << r.path.string() << ' ' << r.sha256 << (r.downloaded ? " downloaded" : " cached")
              << (adm.admitted ? " admitted" : " rejected") << '\n';
    for (const auto& reason : adm.reasons) std::cout << "  " << reason << '\n';
  });
}

struct GridArgs {
  std::string raster, region, out = ".";
  double tile_size = 5.0;
  bool partials = false;
};

void add_grid(CLI::App& app) {
  auto a = std::make_shared<GridArgs>();
  auto* grid = app.add_subcommand("grid", "Analysis grids");
  grid->require_subcommand(1);
  auto* cmd = grid->add_subcommand("make", "Partition a raster footprint into square tiles");
  cmd->add_option("--raster", a->raster, "GeoTIFF")->required()->check(CLI::ExistingFile);
  cmd->add_option("--region", a->region, "Region id (default: file stem)");
  cmd->add_option("--tile-size", a->tile_size, "Tile edge in meters")->capture_default_str();
  cmd->add_flag("--include-partials", a->partials, "Keep tiles cut by the footprint edge");
  cmd->add_option("--out", a->out, "Output directory")->capture_default_str();
  cmd->callback([a] {
    const auto raster = RasterDataset::open(a->raster);
    GridSpec spec;
    spec.tile_size_m = a->tile_size;
    spec.include_partials = a->partials;
    const Grid grid = make_grid(raster.meta(), spec);
    const std::string region = region_of(a->region, a->raster);
    fs::create_directories(a->out);
    io::write_atomic(fs::path(a->out) / (region + ".csv"), [&](std::ostream& o) { write_grid_csv(o, grid); });
    io::write_atomic(fs::path(a->out) / (region + ".geojson"), [&](std::ostream& o) { write_grid_geojson(o, grid); });
    std::cout << region << ": " << grid.tiles.size() << " tiles\n";
  });
}

struct TilesArgs {
  std::string raster, grid, region, out = "tiles";
  int size = kTensorSize;
};

void add_tiles(CLI::App& app) {
  auto a = std::make_shared<TilesArgs>();
  auto* tiles = app.add_subcommand("tiles", "Tile image extraction");
  tiles->require_subcommand(1);
  auto* cmd = tiles->add_subcommand("extract", "Dump resized tile images as PNG");
  cmd->add_option("--raster", a->raster, "GeoTIFF")->required()->check(CLI::ExistingFile);
  cmd->add_option("--grid", a->grid, "Grid CSV from `grid`")->required()->check(CLI::ExistingFile);
  cmd->add_option("--region", a->region, "Region id (default: raster stem)");
  cmd->add_option("--size", a->size, "Output edge in pixels")->capture_default_str();
  cmd->add_option("--out", a->out, "Output directory")->capture_default_str();
  cmd->callback([a] {
    const auto raster = RasterDataset::open(a->raster);
    const Grid grid = read_grid_csv(a->grid);
    const auto n = dump_tiles_png(raster, grid.tiles, region_of(a->region, a->raster), a->out, a->size);
    std::cout << n << " images\n";
  });
}

struct DatasetArgs {
  std::string labels, grid, ratios = "0.7,0.15,0.15", out = "manifest.csv";
  std::uint64_t seed = 42;
};

void add_dataset(CLI::App& app) {
  auto a = std::make_shared<DatasetArgs>();
  auto* cmd = app.add_subcommand("dataset", "Import annotations and build stratified splits");
  cmd->require_subcommand(1);
  auto* imp = cmd->add_subcommand("import", "Validate annotations and print class balance");
  auto* split = cmd->add_subcommand("split", "Write a train/val/test manifest");
  for (auto* sub : {imp, split}) {
    sub->add_option("--labels", a->labels, "CSV or GeoJSON annotations")->required()->check(CLI::ExistingFile);
    sub->add_option("--grid", a->grid, "Grid CSV for GeoJSON labels or id checks");
  }
  split->add_option("--ratios", a->ratios, "train,val,test")->capture_default_str();
  split->add_option("--seed", a->seed, "Split seed")->capture_default_str();
  split->add_option("--out", a->out, "Manifest CSV")->capture_default_str();
  auto load = [a] {
    std::optional<Grid> grid;
    if (!a->grid.empty()) grid = read_grid_csv(a->grid);
    return import_annotations(a->labels, grid ? &*grid : nullptr);
  };
  imp->callback([a, load] {
    const auto r = load();
    std::cout << "region_id,waste,background,imbalance_ratio\n";
    for (const auto& b : r.balance) {
      std::cout << b.region_id << ',' << b.waste << ',' << b.background << ','
                << (std::isinf(b.imbalance_ratio) ? std::string("inf") : io::format_decimal(b.imbalance_ratio, 6)) << '\n';
    }
    std::cerr << r.records.size() << " records, " << r.duplicates_removed << " duplicates removed\n";
  });
  split->callback([a, load] {
    const auto r = load();
    const auto m = make_splits(r.records, parse_ratios(a->ratios), a->seed);
    export_manifest(m, a->out);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << m.records.size() << " records -> " << a->out << '\n';
  });
}

struct InferArgs {
  std::string raster, grid, region, backend, model, out = "predictions.csv", skipped, checkpoint;
  std::size_t batch = 64, workers = 1, every = 100;
  double min_valid = 0.5, fraction = 0.02;
  bool resume = false;
};

void add_infer(CLI::App& app) {
  auto a = std::make_shared<InferArgs>();
  auto* cmd = app.add_subcommand("infer", "Classify tiles");
  cmd->require_subcommand(1);
  auto* run = cmd->add_subcommand("run", "Classify every tile of a grid");
  run->add_option("--raster", a->raster, "GeoTIFF")->required()->check(CLI::ExistingFile);
  run->add_option("--grid", a->grid, "Grid CSV (built on the fly when omitted)");
  run->add_option("--region", a->region, "Region id (default: raster stem)");
  run->add_option("--backend", a->backend, "reference | onnx (default: onnx when --model is given)")
      ->check(CLI::IsMember({"reference", "onnx"}));
  run->add_option("--model", a->model, "ONNX model file");
  run->add_option("--batch-size", a->batch, "Tiles per batch")->capture_default_str();
  run->add_option("--workers", a->workers, "Extraction threads")->capture_default_str();
  run->add_option("--min-valid", a->min_valid, "Skip tiles below this valid fraction")->capture_default_str();
  run->add_option("--marker-fraction", a->fraction, "Reference backend threshold")->capture_default_str();
  run->add_option("--checkpoint-dir", a->checkpoint, "Checkpoint directory");
  run->add_option("--checkpoint-every", a->every, "Batches between checkpoints")->capture_default_str();
  run->add_flag("--resume", a->resume, "Continue from the checkpoint");
  run->add_option("--out", a->out, "Predictions CSV")->capture_default_str();
  run->add_option("--skipped", a->skipped, "Skipped-tile CSV");
  run->callback([a] {
    const auto raster = RasterDataset::open(a->raster);
    const Grid grid = a->grid.empty() ? make_grid(raster.meta()) : read_grid_csv(a->grid);
    std::unique_ptr<ClassifierBackend> backend;
    if (a->backend == "onnx" || (a->backend.empty() && !a->model.empty())) {
      if (a->model.empty()) fail(ErrorKind::Config, "--backend onnx needs --model");
      backend = load_model(a->model);
    } else {
      ReferenceParams params;
      params.fraction = a->fraction;
      backend = reference_classifier(params);
    }
    InferenceOptions opt;
    opt.region_id = region_of(a->region, a->raster);
    opt.batch_size = a->batch;
    opt.workers = a->workers;
    opt.min_valid_fraction = a->min_valid;
    opt.checkpoint_every = a->every;
    opt.resume = a->resume;
    if (!a->checkpoint.empty()) opt.checkpoint_dir = a->checkpoint;
    const auto result = run_inference(raster, grid.tiles, *backend, opt);
    write_predictions_csv(a->out, result.predictions);
    if (!a->skipped.empty()) {
      io::write_atomic(a->skipped, [&](std::ostream& o) {
        o << "region_id,row,col,valid_fraction,reason\n";
        for (const auto& s : result.skipped) {
          o << opt.region_id << ',' << s.tile_id.row << ',' << s.tile_id.col << ','
            << io::format_decimal(s.valid_fraction, 6) << ',' << s.reason << '\n';
        }
      });
    }
    std::cout << result.predictions.size() << " predicted, " << result.skipped.size() << " skipped ("
              << kernels::to_string(kernels::active_isa()) << ")\n";
  });
  auto* inspect = cmd->add_subcommand("inspect", "Check a model file against the backend contract");
  inspect->add_option("--model", a->model, "ONNX model file")->required()->check(CLI::ExistingFile);
  inspect->callback([a] {
    const auto info = inspect_model_file(a->model);
    json shape_in = info.input_shape, shape_out = info.output_shape;
    std::cout << json{{"class_names", info.class_names},
                      {"input_layout", info.layout == InputLayout::Nchw ? "NCHW" : "NHWC"},
                      {"input", info.input_name},
                      {"input_shape", shape_in},
                      {"output", info.output_name},
                      {"output_shape", shape_out},
                      {"input_scale", info.input_scale},
                      {"outputs_probabilities", info.outputs_probabilities}}
                     .dump(2)
              << '\n';
  });
}

struct EvalArgs {
  std::string predictions, truth, split, out, md, sizes = "50,100,200,400,full";
  std::size_t replicates = 200, workers = 1;
  std::uint64_t seed = 7;
};

void add_eval(CLI::App& app) {
  auto a = std::make_shared<EvalArgs>();
  auto* cmd = app.add_subcommand("eval", "Score predictions against labels");
  cmd->require_subcommand(1);
  auto* metrics = cmd->add_subcommand("metrics", "Confusion, precision/recall/F1, AUC, per-region F1");
  auto* boot = cmd->add_subcommand("bootstrap", "Stratified sample-size curves");
  for (auto* sub : {metrics, boot}) {
    sub->add_option("--preds,--predictions", a->predictions, "Predictions CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--truth", a->truth, "Labels or manifest CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--split", a->split, "Keep only this manifest split");
    sub->add_option("--out", a->out, "Output file (stdout when omitted)");
  }
  metrics->add_option("--markdown", a->md, "Also write a Markdown report");
  boot->add_option("--sizes", a->sizes, "Comma list; `full` = all samples")->capture_default_str();
  boot->add_option("--replicates", a->replicates, "Resamples per size")->capture_default_str();
  boot->add_option("--seed", a->seed, "Bootstrap seed")->capture_default_str();
  boot->add_option("--workers", a->workers, "Threads")->capture_default_str();
  auto load = [a] {
    std::optional<std::string_view> split;
    if (!a->split.empty()) split = a->split;
    return std::make_pair(read_predictions_csv(a->predictions), read_labels_csv(a->truth, split));
  };
  metrics->callback([a, load] {
    const auto [preds, truth] = load();
    const auto report = evaluate(preds, truth);
    write_or_print(a->out, [&](std::ostream& o) { o << to_json(report).dump(2) << '\n'; });
    if (!a->md.empty()) io::write_atomic(a->md, [&](std::ostream& o) { write_markdown(o, report); });
  });
  boot->callback([a, load] {
    const auto [preds, truth] = load();
    const auto joined = join(preds, truth);
    if (!joined.unmatched_truth.empty()) {
      fail(ErrorKind::Join, std::to_string(joined.unmatched_truth.size()) + " labeled tiles have no prediction");
    }
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& s : joined.samples) {
      scores.push_back(s.p_waste);
      labels.push_back(s.truth);
    }
    BootstrapOptions opt;
    opt.sizes = parse_sizes(a->sizes, scores.size());
    opt.replicates = a->replicates;
    opt.seed = a->seed;
    opt.workers = a->workers;
    const auto curve = bootstrap_curves(scores, labels, opt);
    write_or_print(a->out, [&](std::ostream& o) { write_curve_csv(o, curve); });
  });
}

// Region ids from a file (one per line, or a CSV with a region_id column) or a comma list.
std::vector<std::string> declared_regions(const std::string& spec) {
  if (spec.empty()) return {};
  if (!fs::is_regular_file(spec)) return split_commas(spec);
  const std::string text = io::read_text(spec);
  std::istringstream in(text);
  std::string first;
  std::getline(in, first);
  std::vector<std::string> ids;
  if (first.find(',') != std::string::npos || first == "region_id") {
    const auto table = csv::read_file(spec);
    const auto col = table.require("region_id", spec);
    for (const auto& row : table.rows) ids.push_back(row.at(col));
    return ids;
  }
  in.clear();
  in.seekg(0);
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') ids.push_back(line);
  }
  return ids;
}

struct MapArgs {
  std::string predictions, grid, out, regions, format = "geojson";
  bool waste_only = false;
};

void add_map(CLI::App& app) {
  auto a = std::make_shared<MapArgs>();
  auto* cmd = app.add_subcommand("map", "Regional contamination scores and map layers");
  cmd->require_subcommand(1);
  auto* score = cmd->add_subcommand("oddmswc", "Per-region ODDMSWC table, ranked");
  score->add_option("--preds,--predictions", a->predictions, "Predictions CSV")->required()->check(CLI::ExistingFile);
  score->add_option("--regions", a->regions, "Regions that must be present: a file (one id per line or a region_id column) or a comma list");
  score->add_option("--out", a->out, "Summary CSV (stdout when omitted)");
  score->callback([a] {
    const auto summaries = rank_regions(summarize_regions(read_predictions_csv(a->predictions), declared_regions(a->regions)));
    write_or_print(a->out, [&](std::ostream& o) { write_summary_csv(o, summaries); });
  });
  auto* exp = cmd->add_subcommand("export", "GeoJSON of predicted tiles");
  exp->add_option("--preds,--predictions", a->predictions, "Predictions CSV")->required()->check(CLI::ExistingFile);
  exp->add_option("--grid", a->grid, "Grid CSV of the region")->required()->check(CLI::ExistingFile);
  exp->add_option("--format", a->format, "Output format")->capture_default_str()->check(CLI::IsMember({"geojson"}));
  exp->add_flag("--waste-only", a->waste_only, "Only tiles predicted as waste");
  exp->add_option("--out", a->out, "GeoJSON file (stdout when omitted)");
  exp->callback([a] {
    const Grid grid = read_grid_csv(a->grid);
    const auto preds = read_predictions_csv(a->predictions);
    write_or_print(a->out, [&](std::ostream& o) { export_map_geojson(o, grid, preds, {.waste_only = a->waste_only}); });
  });
}

struct CorrArgs {
  std::string summary, layers, regions, exclude, out = "corr";
};

void add_corr(CLI::App& app) {
  auto a = std::make_shared<CorrArgs>();
  auto* cmd = app.add_subcommand("corr", "Spearman analysis against socio-spatial indicators");
  cmd->require_subcommand(1);
  auto* run = cmd->add_subcommand("run", "Bivariate report and scatter tables");
  run->add_option("--summary", a->summary, "Summary CSV from `map oddmswc`")->required()->check(CLI::ExistingFile);
  run->add_option("--layers", a->layers, "name=path,... (GeoTIFF or region_id,value CSV)")->required();
  run->add_option("--regions", a->regions, "GeoJSON region extents (needed for rasters)");
  run->add_option("--exclude", a->exclude, "Regions left out in a sensitivity run");
  run->add_option("--out", a->out, "Output directory")->capture_default_str();
  run->callback([a] {
    const auto summaries = read_summary_csv(a->summary);
    std::vector<IndicatorLayer> layers;
    for (const auto& spec : split_commas(a->layers)) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) fail(ErrorKind::Config, "layer '" + spec + "' must be name=path");
      IndicatorLayer layer = make_layer(spec.substr(0, eq));
      const fs::path src = spec.substr(eq + 1);
      if (src.extension() == ".csv") {
        layer.table = read_indicator_table(src);
      } else {
        layer.raster = load_indicator_raster(src);
      }
      layers.push_back(std::move(layer));
    }
    std::vector<RegionExtent> extents;
    if (!a->regions.empty()) extents = read_region_extents(a->regions);
    const auto exclude = split_commas(a->exclude);
    const auto report = bivariate_report(summaries, layers, extents, exclude);
    const fs::path out = a->out;
    fs::create_directories(out);
    io::write_atomic(out / "report.json", to_json(report).dump(2) + "\n");
    for (const auto* set : {&report.target, &report.predictors}) {
      for (const auto& pair : *set) {
        io::write_atomic(out / ("scatter_" + pair.x_name + "__" + pair.y_name + ".csv"),
                         [&](std::ostream& o) { write_scatter_csv(o, report, pair); });
        std::cout << pair.x_name << " ~ " << pair.y_name << ": rho=" << io::format_decimal(pair.rho, 6)
                  << " n=" << pair.n << '\n';
      }
    }
  });
}

struct SynthArgs {
  std::int64_t rows = 10, cols = 10;
  std::size_t plant = 0;
  std::string planted, region = "synth", out = "fixture";
  double gsd = 0.05, tile_size = 5.0, density = 0.08;
  std::uint64_t seed = 7;
};

void add_synth(CLI::App& app) {
  auto a = std::make_shared<SynthArgs>();
  auto* cmd = app.add_subcommand("synth", "Synthetic fixtures with planted waste tiles");
  cmd->require_subcommand(1);
  auto* make = cmd->add_subcommand("make", "Write fixture.tif, truth.csv and plan.json");
  make->add_option("--rows", a->rows, "Grid rows")->capture_default_str();
  make->add_option("--cols", a->cols, "Grid columns")->capture_default_str();
  auto* plant = make->add_option("--plant", a->plant, "Number of tiles to plant (seeded choice)");
  make->add_option("--planted", a->planted, "Explicit row:col list")->excludes(plant);
  make->add_option("--gsd", a->gsd, "Pixel size in meters")->capture_default_str();
  make->add_option("--tile-size", a->tile_size, "Tile edge in meters")->capture_default_str();
  make->add_option("--density", a->density, "Marker area fraction in planted tiles")->capture_default_str();
  make->add_option("--seed", a->seed, "Seed")->capture_default_str();
  make->add_option("--region", a->region, "Region id")->capture_default_str();
  make->add_option("--out", a->out, "Output directory")->capture_default_str();
  make->callback([a] {
    PlantingPlan plan;
    plan.rows = a->rows;
    plan.cols = a->cols;
    plan.gsd_m = a->gsd;
    plan.tile_size_m = a->tile_size;
    plan.marker.density = a->density;
    plan.seed = a->seed;
    plan.region_id = a->region;
    if (!a->planted.empty()) {
      for (const auto& item : split_commas(a->planted)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail(ErrorKind::Config, "planted tile '" + item + "' must be row:col");
        plan.planted.insert({csv::to_int(item.substr(0, colon), "row"), csv::to_int(item.substr(colon + 1), "col")});
      }
    } else {
      plan.planted = choose_planted(plan.rows, plan.cols, a->plant, a->seed);
    }
    const auto fx = make_fixture(plan, a->out);
    std::cout << fx.raster.string() << ": " << plan.rows << "x" << plan.cols << " tiles, " << plan.planted.size()
              << " planted\n";
  });
}

void add_run(CLI::App& app) {
  auto* cmd = app.add_subcommand("run", "Run the pipeline from an INI config; --section.key flags override it");
  auto config_file = std::make_shared<std::string>();
  auto flags = std::make_shared<std::map<std::string, std::vector<std::string>>>();
  cmd->add_option("--config", *config_file, "INI config file")->check(CLI::ExistingFile);
  for (const auto& key : setting_keys()) {
    cmd->add_option("--" + key, (*flags)[key], "[" + key.substr(0, key.find('.')) + "] " + key.substr(key.find('.') + 1))
        ->expected(1, -1)
        ->group("Settings");
  }
  cmd->callback([cmd, config_file, flags] {
    RunConfig config;
    if (!config_file->empty()) apply_ini(config, *config_file);
    for (const auto& key : setting_keys()) {
      if (cmd->count("--" + key) > 0) apply_setting(config, key, flags->at(key));
    }
    const auto outcome = run_pipeline(config);
    std::cout << outcome.run_dir.string() << '\n';
    for (const auto& stage : outcome.stages) {
      std::cout << "  " << stage << ' ' << io::format_decimal(outcome.stage_seconds.at(stage), 3) << "s\n";
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oddmap: open-dump mapping from UAV orthomosaics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "oddmap 1.0.0");
  add_ingest(app);
  add_grid(app);
  add_tiles(app);
  add_dataset(app);
  add_infer(app);
  add_eval(app);
  add_map(app);
  add_corr(app);
  add_synth(app);
  add_run(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const oddmap::Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
