#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <utility>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "oddmap/predictions.hpp"
#include "oddmap/types.hpp"

namespace oddmap {

/// Waste is the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth);
/// Joins on (region, tile). Predictions for unlabeled tiles are ignored; a
/// labeled tile without a prediction throws Join.
ConfusionCounts confusion(const std::vector<Prediction>& predictions,
                          const std::vector<LabeledTile>& truth);

/// A ratio whose denominator may vanish; `undefined` flags a reported 0.
struct Ratio {
  double value = 0.0;
  bool undefined = false;
};

struct ClassMetrics {
  Ratio precision;
  Ratio recall;
  Ratio f1;
};

struct ClassificationMetrics {
  ClassMetrics waste;
  ClassMetrics background;
  double accuracy = 0.0;
};

/// Throws Undefined when counts are empty.
ClassificationMetrics prf1(const ConfusionCounts& counts);

/// Mann-Whitney AUC by rank sums with average ranks for ties.
/// Throws Undefined unless both classes are present.
double roc_auc(std::span<const double> waste_scores, std::span<const Label> truth);

struct MetricBand {
  double mean = 0.0;
  double std = 0.0;  // population std over replicates
  double p025 = 0.0;
  double p975 = 0.0;
};

struct BootstrapPoint {
  std::size_t size = 0;
  std::size_t n_waste = 0;
  std::size_t n_background = 0;
  MetricBand f1;
  MetricBand auc;
  MetricBand accuracy;
};

struct BootstrapCurve {
  std::vector<BootstrapPoint> points;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  /// Point estimates on the full set.
  double f1 = 0.0;
  double auc = 0.0;
  double accuracy = 0.0;
};

struct BootstrapOptions {
  std::vector<std::size_t> sizes;
  std::size_t replicates = 200;
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  /// Observer for every drawn resample's (waste, background) counts.
  std::function<void(std::size_t size, std::size_t waste, std::size_t background)> on_resample;
};

/// Per-class counts for a stratified resample of `size` out of a set with
/// n_waste / n_background members: waste gets round(size * share).
std::pair<std::size_t, std::size_t> stratified_counts(std::size_t size, std::size_t n_waste,
                                                      std::size_t n_background);

/// Stratified subsampling without replacement. Each (size, replicate) draws
/// from its own generator keyed by (seed, size index, replicate index).
/// Throws Config for empty/unsorted sizes or sizes above the set size, and
/// SampleSize when a size leaves fewer than 2 samples in either class.
BootstrapCurve bootstrap_curves(std::span<const double> waste_scores, std::span<const Label> truth,
                                const BootstrapOptions& options);

/// Parses "50,100,full" against a set of `total` samples.
std::vector<std::size_t> parse_sizes(std::string_view text, std::size_t total);

struct RegionF1 {
  std::string region_id;
  ConfusionCounts counts;
  double f1 = 0.0;
  bool f1_undefined = false;
  /// Truth holds a single class; excluded from the summary.
  bool single_class = false;
};

struct RegionF1Summary {
  std::vector<RegionF1> regions;  // sorted by region id
  std::size_t included = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample std (n - 1); 0 for a single region
};

RegionF1Summary per_region_f1(const std::vector<Prediction>& predictions,
                              const std::vector<LabeledTile>& truth);

struct EvalReport {
  ConfusionCounts counts;
  ClassificationMetrics metrics;
  std::optional<double> auc;
  RegionF1Summary regions;
  std::optional<BootstrapCurve> bootstrap;
};

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<LabeledTile>& truth);

nlohmann::json to_json(const EvalReport& report);
void write_markdown(std::ostream& out, const EvalReport& report);
/// `size,metric,mean,std,p2.5,p97.5`
void write_curve_csv(std::ostream& out, const BootstrapCurve& curve);

}  // namespace oddmap
