#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oddmap/types.hpp"

namespace oddmap {

/// Region-qualified tile identity used to join predictions and labels.
struct TileKey {
  std::string region_id;
  TileId tile_id;

  friend auto operator<=>(const TileKey&, const TileKey&) = default;
};

struct Prediction {
  std::string region_id;
  TileId tile_id;
  Label predicted = Label::Background;
  /// Probability of the predicted class, in [0.5, 1].
  double confidence = 0.5;

  TileKey key() const { return {region_id, tile_id}; }
  /// Waste-class probability recovered from the binary argmax pair.
  double p_waste() const { return predicted == Label::Waste ? confidence : 1.0 - confidence; }
};

struct LabeledTile {
  std::string region_id;
  TileId tile_id;
  Label label = Label::Background;

  TileKey key() const { return {region_id, tile_id}; }
};

/// Header `region_id,row,col,predicted_class,confidence`; confidence is
/// written with 17 significant digits so values round-trip exactly.
void write_predictions_csv(std::ostream& out, const std::vector<Prediction>& predictions);
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<Prediction>& predictions);
std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path);

/// Ground truth from a manifest (`label`, optional `split`) or a
/// prediction-schema CSV (`predicted_class`). With `split`, only matching
/// manifest rows are kept.
std::vector<LabeledTile> read_labels_csv(const std::filesystem::path& path,
                                         std::optional<std::string_view> split = std::nullopt);

/// Inner join on (region, tile). Pairs are ordered by key; throws Join when
/// either side has duplicate keys.
struct JoinedSample {
  TileKey key;
  Label truth = Label::Background;
  Label predicted = Label::Background;
  double p_waste = 0.0;
  double confidence = 0.5;
};

struct JoinResult {
  std::vector<JoinedSample> samples;
  std::vector<TileKey> unmatched_predictions;
  std::vector<TileKey> unmatched_truth;
};

JoinResult join(const std::vector<Prediction>& predictions, const std::vector<LabeledTile>& truth);

}  // namespace oddmap
