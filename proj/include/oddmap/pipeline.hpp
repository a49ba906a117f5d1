#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "oddmap/dataset.hpp"
#include "oddmap/ingest.hpp"

namespace oddmap {

inline const std::vector<std::string> kStageOrder = {"ingest", "grid",  "tiles", "dataset",
                                                     "infer",  "eval",  "map",   "corr"};

struct RasterInput {
  std::string region_id;
  std::filesystem::path path;
};

/// Every tunable of a pipeline run. Field names match the `[section] key`
/// names of the INI config and the `--section.key` CLI flags.
struct RunConfig {
  std::vector<std::string> stages;  // empty: every stage whose inputs exist
  std::filesystem::path out_dir = "runs";
  std::optional<std::string> run_name;
  std::size_t workers = 1;

  // ingest
  std::vector<std::string> oam_ids;
  std::string catalog_url = "https://api.openaerialmap.org";
  double max_gsd_m = 0.06;
  double min_area_km2 = 1.0;

  // grid
  std::vector<RasterInput> rasters;
  double tile_size_m = 5.0;
  bool include_partials = false;

  // tiles
  int tensor_size = 128;
  bool dump_png = false;

  // dataset
  std::optional<std::filesystem::path> labels;
  SplitRatios ratios;
  std::uint64_t split_seed = 42;

  // infer
  std::string backend = "reference";
  std::optional<std::filesystem::path> model;
  std::size_t batch_size = 64;
  double min_valid_fraction = 0.5;
  double marker_fraction = 0.02;
  std::size_t checkpoint_every = 100;
  /// Existing predictions CSV; used by eval/map when infer is not run.
  std::optional<std::filesystem::path> predictions;

  // eval
  std::optional<std::filesystem::path> truth;
  std::optional<std::string> truth_split;
  std::string bootstrap_sizes;  // empty: no bootstrap
  std::size_t replicates = 200;
  std::uint64_t bootstrap_seed = 7;

  // map
  bool waste_only_map = true;

  // corr
  std::vector<std::string> layers;  // name=path
  std::optional<std::filesystem::path> regions;
  std::vector<std::string> exclude;
};

/// Every `section.key` setting name, in INI order.
const std::vector<std::string>& setting_keys();

/// Assigns one setting from its textual values (list settings take several
/// values or comma-separated text; an empty value clears optional paths).
/// Throws Config for unknown keys and unparsable values.
void apply_setting(RunConfig& config, std::string_view key, const std::vector<std::string>& values);

/// Applies every `[section] key = value` of an INI document over `config`.
void apply_ini(RunConfig& config, const std::filesystem::path& path);

/// Throws Config describing the first invalid setting.
void validate(const RunConfig& config);

/// Parses `region=path` or a bare path (region = file stem).
RasterInput parse_raster_input(const std::string& text);

/// INI rendering of every tunable (run location excluded).
std::string to_ini(const RunConfig& config);
nlohmann::json to_json(const RunConfig& config);

/// Stages that will run, in dependency order.
std::vector<std::string> resolve_stages(const RunConfig& config);

struct RunOutcome {
  std::filesystem::path run_dir;
  std::vector<std::string> stages;
  /// Relative output path -> sha256 (log and run metadata excluded).
  std::map<std::string, std::string> outputs;
  std::map<std::string, double> stage_seconds;
  std::size_t tiles_classified = 0;
};

/// Executes the selected stages under a fresh run directory. On failure the
/// partial artifacts stay in place, `failure.json` records the stage and
/// error, and the error is rethrown.
RunOutcome run_pipeline(const RunConfig& config);

}  // namespace oddmap
