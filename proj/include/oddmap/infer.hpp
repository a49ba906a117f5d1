#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oddmap/geogrid.hpp"
#include "oddmap/kernels.hpp"
#include "oddmap/predictions.hpp"
#include "oddmap/raster.hpp"
#include "oddmap/tiles.hpp"

namespace oddmap {

struct ClassProbabilities {
  double background = 0.5;
  double waste = 0.5;
};

/// Batch classifier. Implementations return one probability pair per tensor,
/// summing to 1 within 1e-5, deterministically for identical input.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual std::vector<ClassProbabilities> classify(std::span<const TileTensor> batch) = 0;
  virtual std::string name() const = 0;
};

/// Argmax decision: waste only when its probability is strictly higher.
Prediction decide(const std::string& region_id, TileId tile_id, const ClassProbabilities& p);

struct ReferenceParams {
  /// A tile is waste iff its marker-pixel fraction exceeds this.
  double fraction = 0.02;
  kernels::MarkerRule rule;
  /// Logistic slope: p_waste = 1 / (1 + exp(-steepness * (f - fraction))).
  double steepness = 200.0;
};

/// Deterministic, network-free backend keyed on planted marker pixels.
class ReferenceClassifier final : public ClassifierBackend {
 public:
  explicit ReferenceClassifier(ReferenceParams params = {}) : params_(params) {}

  std::vector<ClassProbabilities> classify(std::span<const TileTensor> batch) override;
  std::string name() const override { return "reference"; }

  double marker_fraction(const TileTensor& tensor) const;
  const ReferenceParams& params() const { return params_; }

 private:
  ReferenceParams params_;
};

std::unique_ptr<ClassifierBackend> reference_classifier(ReferenceParams params = {});

enum class InputLayout { Nchw, Nhwc };

/// Contract metadata read from a portable (ONNX) model file.
struct ModelInfo {
  std::vector<std::string> class_names;
  InputLayout layout = InputLayout::Nchw;
  /// Input/output dims; -1 marks a symbolic (batch) dimension.
  std::vector<std::int64_t> input_shape;
  std::vector<std::int64_t> output_shape;
  std::string input_name;
  std::string output_name;
  /// Multiplier applied to 0..255 pixel values before the graph.
  double input_scale = 1.0 / 255.0;
  /// Output already holds probabilities (vs logits needing softmax).
  bool outputs_probabilities = true;
};

/// Parses and validates the model's embedded metadata without running it:
/// class_names must be ["background","waste"], input 3x128x128 in the
/// declared layout and output 2 classes. Throws Parse on malformed bytes and
/// Contract (expected vs found) on mismatches.
ModelInfo inspect_model(std::span<const std::uint8_t> bytes);
ModelInfo inspect_model_file(const std::filesystem::path& path);

/// Loads an ONNX model into an OpenCV DNN backend after inspect_model().
std::unique_ptr<ClassifierBackend> load_model(const std::filesystem::path& path);

struct InferenceOptions {
  std::string region_id = "region";
  std::size_t batch_size = 64;
  std::size_t workers = 1;
  int tensor_size = kTensorSize;
  /// Tiles whose valid fraction falls below this are skipped, keeping them
  /// out of the ODDMSWC denominator.
  double min_valid_fraction = 0.5;
  /// Checkpoint directory; when set, progress is flushed every
  /// `checkpoint_every` batches and on failure.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::size_t checkpoint_every = 100;
  /// Continue from an existing checkpoint in checkpoint_dir.
  bool resume = false;
};

struct InferenceResult {
  std::vector<Prediction> predictions;  // grid order
  std::vector<SkippedTile> skipped;
  std::size_t batches = 0;
  bool resumed = false;
};

/// Classifies every tile of `tiles`. A backend failure raises Backend naming
/// the batch's tile range after flushing a checkpoint (when configured).
InferenceResult run_inference(const RasterDataset& raster, std::span<const TileRecord> tiles,
                              ClassifierBackend& backend, const InferenceOptions& options);

struct ConfidenceSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
  std::optional<double> correct_mean;
  std::optional<double> incorrect_mean;
};

ConfidenceSummary confidence_stats(const std::vector<Prediction>& predictions);
/// With truth: throws Join when no prediction matches a labeled tile.
ConfidenceSummary confidence_stats(const std::vector<Prediction>& predictions,
                                   const std::vector<LabeledTile>& truth);

}  // namespace oddmap
