#include "oddmap/infer.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "oddmap/csv.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"

namespace oddmap {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string describe_range(std::span<const TileRecord> tiles, std::size_t first, std::size_t last) {
  if (first >= last || last > tiles.size()) return "empty range";
  const TileId a = tiles[first].id;
  const TileId b = tiles[last - 1].id;
  return "tiles (" + std::to_string(a.row) + "," + std::to_string(a.col) + ")..(" + std::to_string(b.row) + "," +
         std::to_string(b.col) + ") [indices " + std::to_string(first) + "," + std::to_string(last) + ")";
}

std::string fingerprint(std::span<const TileRecord> tiles, const ClassifierBackend& backend,
                        const InferenceOptions& options) {
  std::string text = options.region_id + "|" + backend.name() + "|" + std::to_string(options.tensor_size) + "|" +
                     io::format_decimal(options.min_valid_fraction, 9) + "\n";
  for (const auto& t : tiles) {
    text += std::to_string(t.id.row) + "," + std::to_string(t.id.col) + "," + std::to_string(t.pixel_window.row_off) +
            "," + std::to_string(t.pixel_window.col_off) + "," + std::to_string(t.pixel_window.height) + "," +
            std::to_string(t.pixel_window.width) + "\n";
  }
  return io::sha256_hex(text);
}

std::string format_full(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

// Append-only progress log plus a small JSON pointer recording how many bytes
// of each log are committed. Bytes past the pointer are discarded on resume.
class Checkpoint {
 public:
  Checkpoint(fs::path dir, std::string print) : dir_(std::move(dir)), print_(std::move(print)) {
    fs::create_directories(dir_);
  }

  fs::path predictions_path() const { return dir_ / "predictions.partial.csv"; }
  fs::path skipped_path() const { return dir_ / "skipped.partial.csv"; }
  fs::path state_path() const { return dir_ / "checkpoint.json"; }

  struct State {
    std::size_t next_index = 0;
    std::size_t batches = 0;
    bool complete = false;
    std::vector<Prediction> predictions;
    std::vector<SkippedTile> skipped;
  };

  std::optional<State> load(const std::string& region_id, std::span<const TileRecord> tiles) const {
    if (!fs::exists(state_path())) return std::nullopt;
    json j;
    try {
      j = json::parse(io::read_text(state_path()));
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, state_path().string() + ": " + e.what());
    }
    if (j.value("fingerprint", "") != print_) {
      fail(ErrorKind::Config, "checkpoint in " + dir_.string() + " belongs to a different run");
    }
    State s;
    s.next_index = j.at("next_index").get<std::size_t>();
    s.batches = j.at("batches").get<std::size_t>();
    s.complete = j.value("complete", false);
    truncate(predictions_path(), j.at("predictions_bytes").get<std::uintmax_t>());
    truncate(skipped_path(), j.at("skipped_bytes").get<std::uintmax_t>());

    std::map<TileId, std::size_t> index_of;
    for (std::size_t i = 0; i < tiles.size(); ++i) index_of.emplace(tiles[i].id, i);
    std::ifstream pin(predictions_path());
    std::string line;
    while (std::getline(pin, line)) {
      const auto f = csv::split_line(line);
      if (f.size() != 4) fail(ErrorKind::Parse, "corrupt checkpoint line: " + line);
      Prediction p;
      p.region_id = region_id;
      p.tile_id = {csv::to_int(f[0], "row"), csv::to_int(f[1], "col")};
      p.predicted = parse_label(f[2]).value_or(Label::Background);
      p.confidence = csv::to_double(f[3], "confidence");
      s.predictions.push_back(std::move(p));
    }
    std::ifstream sin(skipped_path());
    while (std::getline(sin, line)) {
      const auto f = csv::split_line(line);
      if (f.size() != 4) fail(ErrorKind::Parse, "corrupt checkpoint line: " + line);
      SkippedTile t;
      t.tile_id = {csv::to_int(f[0], "row"), csv::to_int(f[1], "col")};
      t.valid_fraction = csv::to_double(f[2], "valid_fraction");
      t.reason = f[3];
      const auto it = index_of.find(t.tile_id);
      t.index = it == index_of.end() ? 0 : it->second;
      s.skipped.push_back(std::move(t));
    }
    return s;
  }

  void start_fresh() {
    std::ofstream(predictions_path(), std::ios::trunc);
    std::ofstream(skipped_path(), std::ios::trunc);
    fs::remove(state_path());
  }

  void append(std::span<const Prediction> preds, std::span<const SkippedTile> skipped) {
    {
      std::ofstream out(predictions_path(), std::ios::app);
      for (const auto& p : preds) {
        out << p.tile_id.row << ',' << p.tile_id.col << ',' << to_string(p.predicted) << ','
            << format_full(p.confidence) << '\n';
      }
      if (!out) fail(ErrorKind::Io, "cannot write " + predictions_path().string());
    }
    std::ofstream out(skipped_path(), std::ios::app);
    for (const auto& t : skipped) {
      out << t.tile_id.row << ',' << t.tile_id.col << ',' << format_full(t.valid_fraction) << ',' << t.reason << '\n';
    }
    if (!out) fail(ErrorKind::Io, "cannot write " + skipped_path().string());
  }

  void commit(std::size_t next_index, std::size_t batches, bool complete) {
    json j = {{"fingerprint", print_},
              {"next_index", next_index},
              {"batches", batches},
              {"complete", complete},
              {"predictions_bytes", fs::file_size(predictions_path())},
              {"skipped_bytes", fs::file_size(skipped_path())}};
    io::write_atomic(state_path(), j.dump(2) + "\n");
  }

 private:
  static void truncate(const fs::path& path, std::uintmax_t size) {
    if (!fs::exists(path)) {
      if (size != 0) fail(ErrorKind::Integrity, "checkpoint log missing: " + path.string());
      std::ofstream(path, std::ios::trunc);
      return;
    }
    if (fs::file_size(path) < size) fail(ErrorKind::Integrity, "checkpoint log shorter than recorded: " + path.string());
    fs::resize_file(path, size);
  }

  fs::path dir_;
  std::string print_;
};

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

Prediction decide(const std::string& region_id, TileId tile_id, const ClassProbabilities& p) {
  Prediction out;
  out.region_id = region_id;
  out.tile_id = tile_id;
  if (p.waste > p.background) {
    out.predicted = Label::Waste;
    out.confidence = p.waste;
  } else {
    out.predicted = Label::Background;
    out.confidence = p.background;
  }
  return out;
}

double ReferenceClassifier::marker_fraction(const TileTensor& tensor) const {
  const auto pixels = static_cast<std::size_t>(tensor.size) * static_cast<std::size_t>(tensor.size);
  if (pixels == 0 || tensor.data.size() < pixels * kTensorChannels) {
    fail(ErrorKind::Validation, "tensor buffer does not match its size");
  }
  const std::size_t n = kernels::active_kernels().count_markers(tensor.data.data(), pixels, params_.rule);
  return static_cast<double>(n) / static_cast<double>(pixels);
}

std::vector<ClassProbabilities> ReferenceClassifier::classify(std::span<const TileTensor> batch) {
  std::vector<ClassProbabilities> out;
  out.reserve(batch.size());
  for (const auto& t : batch) {
    const double f = marker_fraction(t);
    double waste = 1.0 / (1.0 + std::exp(-params_.steepness * (f - params_.fraction)));
    // The strict threshold is the definition; the logistic only grades confidence.
    if (f > params_.fraction && !(waste > 0.5)) waste = std::nextafter(0.5, 1.0);
    if (!(f > params_.fraction) && waste > 0.5) waste = 0.5;
    out.push_back({1.0 - waste, waste});
  }
  return out;
}

std::unique_ptr<ClassifierBackend> reference_classifier(ReferenceParams params) {
  return std::make_unique<ReferenceClassifier>(params);
}

InferenceResult run_inference(const RasterDataset& raster, std::span<const TileRecord> tiles,
                              ClassifierBackend& backend, const InferenceOptions& options) {
  if (options.batch_size < 1) fail(ErrorKind::Config, "batch size must be at least 1");
  if (options.checkpoint_every < 1) fail(ErrorKind::Config, "checkpoint interval must be at least 1");
  InferenceResult result;
  std::size_t start = 0;

  std::optional<Checkpoint> checkpoint;
  if (options.checkpoint_dir) {
    checkpoint.emplace(*options.checkpoint_dir, fingerprint(tiles, backend, options));
    std::optional<Checkpoint::State> state;
    if (options.resume) state = checkpoint->load(options.region_id, tiles);
    if (state) {
      result.predictions = std::move(state->predictions);
      result.skipped = std::move(state->skipped);
      result.batches = state->batches;
      result.resumed = true;
      start = state->next_index;
      if (state->complete) return result;
    } else {
      checkpoint->start_fresh();
    }
  }
  if (tiles.empty()) {
    if (checkpoint) checkpoint->commit(0, 0, true);
    return result;
  }

  ExtractOptions extract;
  extract.size = options.tensor_size;
  extract.batch_size = options.batch_size;
  extract.workers = std::max<std::size_t>(1, options.workers);
  extract.min_valid_fraction = options.min_valid_fraction;
  extract.start_index = start;

  std::size_t flushed_predictions = result.predictions.size();
  std::size_t flushed_skipped = result.skipped.size();
  std::size_t next_index = start;
  std::size_t since_flush = 0;
  auto flush = [&](bool complete) {
    if (!checkpoint) return;
    checkpoint->append(std::span(result.predictions).subspan(flushed_predictions),
                       std::span(result.skipped).subspan(flushed_skipped));
    flushed_predictions = result.predictions.size();
    flushed_skipped = result.skipped.size();
    checkpoint->commit(next_index, result.batches, complete);
    since_flush = 0;
  };

  BatchExtractor extractor(raster, tiles, extract);
  while (true) {
    std::optional<TileBatch> batch;
    try {
      batch = extractor.next();
    } catch (...) {
      flush(false);
      throw;
    }
    if (!batch) break;
    std::vector<ClassProbabilities> probs;
    if (!batch->tensors.empty()) {
      try {
        probs = backend.classify(batch->tensors);
        if (probs.size() != batch->tensors.size()) {
          fail(ErrorKind::Backend, "returned " + std::to_string(probs.size()) + " results for " +
                                       std::to_string(batch->tensors.size()) + " tensors");
        }
        for (const auto& p : probs) {
          const bool ok = std::isfinite(p.waste) && std::isfinite(p.background) && p.waste >= 0.0 &&
                          p.background >= 0.0 && std::abs(p.waste + p.background - 1.0) <= 1e-5;
          if (!ok) fail(ErrorKind::Backend, "probabilities do not form a distribution");
        }
      } catch (const std::exception& e) {
        flush(false);
        throw Error(ErrorKind::Backend, backend.name() + " failed on batch " + std::to_string(batch->sequence) +
                                            " covering " + describe_range(tiles, batch->first_index, batch->last_index) +
                                            ": " + e.what());
      }
    }
    for (std::size_t i = 0; i < batch->tensors.size(); ++i) {
      result.predictions.push_back(decide(options.region_id, batch->tensors[i].tile_id, probs[i]));
    }
    for (auto& s : batch->skipped) result.skipped.push_back(std::move(s));
    next_index = batch->last_index;
    ++result.batches;
    if (++since_flush >= options.checkpoint_every) flush(false);
  }
  flush(true);
  return result;
}

ConfidenceSummary confidence_stats(const std::vector<Prediction>& predictions) {
  ConfidenceSummary s;
  std::vector<double> all;
  all.reserve(predictions.size());
  for (const auto& p : predictions) all.push_back(p.confidence);
  s.count = all.size();
  s.mean = mean_of(all);
  s.median = median_of(all);
  return s;
}

ConfidenceSummary confidence_stats(const std::vector<Prediction>& predictions, const std::vector<LabeledTile>& truth) {
  const JoinResult joined = join(predictions, truth);
  if (joined.samples.empty()) fail(ErrorKind::Join, "no prediction matches a labeled tile");
  ConfidenceSummary s;
  std::vector<double> all, correct, incorrect;
  for (const auto& j : joined.samples) {
    all.push_back(j.confidence);
    (j.truth == j.predicted ? correct : incorrect).push_back(j.confidence);
  }
  s.count = all.size();
  s.mean = mean_of(all);
  s.median = median_of(all);
  s.n_correct = correct.size();
  s.n_incorrect = incorrect.size();
  if (!correct.empty()) s.correct_mean = mean_of(correct);
  if (!incorrect.empty()) s.incorrect_mean = mean_of(incorrect);
  return s;
}

}  // namespace oddmap
