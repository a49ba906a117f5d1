#include "oddmap/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "oddmap/error.hpp"
#include "oddmap/io.hpp"
#include "oddmap/parallel.hpp"
#include "oddmap/rng.hpp"

namespace oddmap {
namespace {

using nlohmann::json;

Ratio ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

ClassMetrics class_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return m;
}

JoinResult strict_join(const std::vector<Prediction>& predictions, const std::vector<LabeledTile>& truth) {
  JoinResult j = join(predictions, truth);
  if (!j.unmatched_truth.empty()) {
    const auto& k = j.unmatched_truth.front();
    fail(ErrorKind::Join, std::to_string(j.unmatched_truth.size()) + " labeled tiles have no prediction, first " +
                              k.region_id + " (" + std::to_string(k.tile_id.row) + "," +
                              std::to_string(k.tile_id.col) + ")");
  }
  if (j.samples.empty()) fail(ErrorKind::Join, "no prediction matches a labeled tile");
  return j;
}

// Linear interpolation between closest ranks.
double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

MetricBand band(std::vector<double> values) {
  MetricBand b;
  if (values.empty()) return b;
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) {
    b.mean = b.p025 = b.p975 = values.front();
    return b;
  }
  const double n = static_cast<double>(values.size());
  b.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - b.mean) * (v - b.mean);
  b.std = std::sqrt(ss / n);
  b.p025 = percentile(values, 0.025);
  b.p975 = percentile(values, 0.975);
  return b;
}

struct SampleMetrics {
  double f1 = 0.0;
  double auc = 0.0;
  double accuracy = 0.0;
};

SampleMetrics sample_metrics(std::span<const double> scores, std::span<const Label> truth) {
  std::vector<Label> predicted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) predicted[i] = scores[i] > 0.5 ? Label::Waste : Label::Background;
  const auto m = prf1(confusion(predicted, truth));
  return {m.waste.f1.value, roc_auc(scores, truth), m.accuracy};
}

std::string fmt(double v) { return io::format_decimal(v, 4); }

}  // namespace

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) fail(ErrorKind::Join, "prediction and truth lengths differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == Label::Waste;
    const bool t = truth[i] == Label::Waste;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ConfusionCounts confusion(const std::vector<Prediction>& predictions, const std::vector<LabeledTile>& truth) {
  const JoinResult j = strict_join(predictions, truth);
  std::vector<Label> p, t;
  for (const auto& s : j.samples) {
    p.push_back(s.predicted);
    t.push_back(s.truth);
  }
  return confusion(p, t);
}

ClassificationMetrics prf1(const ConfusionCounts& c) {
  if (c.total() == 0) fail(ErrorKind::Undefined, "metrics of an empty confusion matrix");
  ClassificationMetrics m;
  m.waste = class_metrics(c.tp, c.fp, c.fn);
  m.background = class_metrics(c.tn, c.fn, c.fp);
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return m;
}

double roc_auc(std::span<const double> scores, std::span<const Label> truth) {
  if (scores.size() != truth.size()) fail(ErrorKind::Join, "score and truth lengths differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == Label::Waste) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) fail(ErrorKind::Undefined, "ROC AUC needs both classes in the truth");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::pair<std::size_t, std::size_t> stratified_counts(std::size_t size, std::size_t n_waste,
                                                      std::size_t n_background) {
  const std::size_t total = n_waste + n_background;
  if (total == 0) return {0, 0};
  auto waste = static_cast<std::size_t>(
      std::llround(static_cast<double>(size) * static_cast<double>(n_waste) / static_cast<double>(total)));
  waste = std::min(waste, n_waste);
  std::size_t background = size - waste;
  if (background > n_background) {
    background = n_background;
    waste = size - background;
  }
  return {waste, background};
}

BootstrapCurve bootstrap_curves(std::span<const double> scores, std::span<const Label> truth,
                                const BootstrapOptions& options) {
  if (scores.size() != truth.size()) fail(ErrorKind::Join, "score and truth lengths differ");
  if (options.sizes.empty()) fail(ErrorKind::Config, "no bootstrap sizes given");
  if (options.replicates < 1) fail(ErrorKind::Config, "replicates must be at least 1");
  for (std::size_t i = 0; i < options.sizes.size(); ++i) {
    if (options.sizes[i] > scores.size()) {
      fail(ErrorKind::Config, "bootstrap size " + std::to_string(options.sizes[i]) + " exceeds the " +
                                  std::to_string(scores.size()) + "-sample test set");
    }
    if (i > 0 && options.sizes[i] <= options.sizes[i - 1]) fail(ErrorKind::Config, "bootstrap sizes must increase");
  }

  std::vector<std::size_t> waste_idx, background_idx;
  for (std::size_t i = 0; i < truth.size(); ++i) (truth[i] == Label::Waste ? waste_idx : background_idx).push_back(i);

  std::vector<std::pair<std::size_t, std::size_t>> counts;
  for (std::size_t size : options.sizes) {
    const auto c = stratified_counts(size, waste_idx.size(), background_idx.size());
    if (c.first < 2 || c.second < 2) {
      fail(ErrorKind::SampleSize, "bootstrap size " + std::to_string(size) + " leaves " + std::to_string(c.first) +
                                      " waste and " + std::to_string(c.second) + " background samples (need 2 each)");
    }
    counts.push_back(c);
  }

  BootstrapCurve curve;
  curve.replicates = options.replicates;
  curve.seed = options.seed;
  const auto full = sample_metrics(scores, truth);
  curve.f1 = full.f1;
  curve.auc = full.auc;
  curve.accuracy = full.accuracy;

  for (std::size_t si = 0; si < options.sizes.size(); ++si) {
    const auto [k_waste, k_background] = counts[si];
    std::vector<SampleMetrics> reps(options.replicates);
    parallel_for(options.replicates, options.workers, [&](std::size_t r) {
      Rng rng{options.seed, si, r};
      std::vector<double> s;
      std::vector<Label> t;
      s.reserve(k_waste + k_background);
      t.reserve(k_waste + k_background);
      auto draw = [&](std::vector<std::size_t> pool, std::size_t k) {
        // Partial Fisher-Yates: the first k slots form the sample.
        for (std::size_t i = 0; i < k; ++i) {
          const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
          std::swap(pool[i], pool[j]);
          s.push_back(scores[pool[i]]);
          t.push_back(truth[pool[i]]);
        }
      };
      draw(waste_idx, k_waste);
      draw(background_idx, k_background);
      reps[r] = sample_metrics(s, t);
    });
    if (options.on_resample) {
      for (std::size_t r = 0; r < options.replicates; ++r) options.on_resample(options.sizes[si], k_waste, k_background);
    }
    BootstrapPoint pt;
    pt.size = options.sizes[si];
    pt.n_waste = k_waste;
    pt.n_background = k_background;
    std::vector<double> f1, auc, acc;
    for (const auto& m : reps) {
      f1.push_back(m.f1);
      auc.push_back(m.auc);
      acc.push_back(m.accuracy);
    }
    pt.f1 = band(std::move(f1));
    pt.auc = band(std::move(auc));
    pt.accuracy = band(std::move(acc));
    curve.points.push_back(pt);
  }
  return curve;
}

std::vector<std::size_t> parse_sizes(std::string_view text, std::size_t total) {
  std::vector<std::size_t> sizes;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    std::string part(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    if (part == "full") {
      sizes.push_back(total);
    } else {
      long long v = 0;
      try {
        v = std::stoll(part);
      } catch (const std::exception&) {
        fail(ErrorKind::Config, "bad bootstrap size '" + part + "'");
      }
      if (v <= 0) fail(ErrorKind::Config, "bootstrap sizes must be positive");
      sizes.push_back(static_cast<std::size_t>(v));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return sizes;
}

RegionF1Summary per_region_f1(const std::vector<Prediction>& predictions, const std::vector<LabeledTile>& truth) {
  const JoinResult j = strict_join(predictions, truth);
  std::map<std::string, std::pair<std::vector<Label>, std::vector<Label>>> by_region;
  for (const auto& s : j.samples) {
    auto& [p, t] = by_region[s.key.region_id];
    p.push_back(s.predicted);
    t.push_back(s.truth);
  }
  RegionF1Summary summary;
  std::vector<double> included;
  for (const auto& [region, pt] : by_region) {
    RegionF1 r;
    r.region_id = region;
    r.counts = confusion(pt.first, pt.second);
    const auto m = prf1(r.counts);
    r.f1 = m.waste.f1.value;
    r.f1_undefined = m.waste.f1.undefined;
    const std::uint64_t positives = r.counts.tp + r.counts.fn;
    r.single_class = positives == 0 || positives == r.counts.total();
    if (!r.single_class) included.push_back(r.f1);
    summary.regions.push_back(std::move(r));
  }
  summary.included = included.size();
  if (!included.empty()) {
    summary.min = *std::min_element(included.begin(), included.end());
    summary.max = *std::max_element(included.begin(), included.end());
    const double n = static_cast<double>(included.size());
    summary.mean = std::accumulate(included.begin(), included.end(), 0.0) / n;
    if (included.size() > 1) {
      double ss = 0.0;
      for (double v : included) ss += (v - summary.mean) * (v - summary.mean);
      summary.std = std::sqrt(ss / (n - 1.0));
    }
  }
  return summary;
}

EvalReport evaluate(const std::vector<Prediction>& predictions, const std::vector<LabeledTile>& truth) {
  const JoinResult j = strict_join(predictions, truth);
  EvalReport report;
  std::vector<Label> p, t;
  std::vector<double> scores;
  for (const auto& s : j.samples) {
    p.push_back(s.predicted);
    t.push_back(s.truth);
    scores.push_back(s.p_waste);
  }
  report.counts = confusion(p, t);
  report.metrics = prf1(report.counts);
  const bool both = report.counts.tp + report.counts.fn > 0 && report.counts.fp + report.counts.tn > 0;
  if (both) report.auc = roc_auc(scores, t);
  report.regions = per_region_f1(predictions, truth);
  return report;
}

namespace {

json ratio_json(const Ratio& r) { return {{"value", r.value}, {"undefined", r.undefined}}; }

json class_json(const ClassMetrics& m) {
  return {{"precision", ratio_json(m.precision)}, {"recall", ratio_json(m.recall)}, {"f1", ratio_json(m.f1)}};
}

json band_json(const MetricBand& b) {
  return {{"mean", b.mean}, {"std", b.std}, {"p2.5", b.p025}, {"p97.5", b.p975}};
}

}  // namespace

json to_json(const EvalReport& r) {
  json j;
  j["confusion"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}};
  j["metrics"] = {{"waste", class_json(r.metrics.waste)},
                  {"background", class_json(r.metrics.background)},
                  {"accuracy", r.metrics.accuracy}};
  j["roc_auc"] = r.auc ? json(*r.auc) : json(nullptr);
  json regions = json::array();
  for (const auto& reg : r.regions.regions) {
    regions.push_back({{"region_id", reg.region_id},
                       {"f1", reg.f1},
                       {"f1_undefined", reg.f1_undefined},
                       {"single_class", reg.single_class},
                       {"tp", reg.counts.tp},
                       {"fp", reg.counts.fp},
                       {"fn", reg.counts.fn},
                       {"tn", reg.counts.tn}});
  }
  j["regions"] = {{"table", regions},
                  {"included", r.regions.included},
                  {"min", r.regions.min},
                  {"max", r.regions.max},
                  {"mean", r.regions.mean},
                  {"std", r.regions.std}};
  if (r.bootstrap) {
    json points = json::array();
    for (const auto& p : r.bootstrap->points) {
      points.push_back({{"size", p.size},
                        {"n_waste", p.n_waste},
                        {"n_background", p.n_background},
                        {"f1", band_json(p.f1)},
                        {"roc_auc", band_json(p.auc)},
                        {"accuracy", band_json(p.accuracy)}});
    }
    j["bootstrap"] = {{"replicates", r.bootstrap->replicates},
                      {"seed", r.bootstrap->seed},
                      {"point", {{"f1", r.bootstrap->f1}, {"roc_auc", r.bootstrap->auc}, {"accuracy", r.bootstrap->accuracy}}},
                      {"points", points}};
  }
  return j;
}

void write_markdown(std::ostream& out, const EvalReport& r) {
  auto cell = [](const Ratio& x) { return x.undefined ? std::string("n/a") : fmt(x.value); };
  out << "# Evaluation\n\n";
  out << "| class | precision | recall | F1 |\n|---|---|---|---|\n";
  out << "| waste | " << cell(r.metrics.waste.precision) << " | " << cell(r.metrics.waste.recall) << " | "
      << cell(r.metrics.waste.f1) << " |\n";
  out << "| background | " << cell(r.metrics.background.precision) << " | " << cell(r.metrics.background.recall)
      << " | " << cell(r.metrics.background.f1) << " |\n\n";
  out << "Accuracy: " << fmt(r.metrics.accuracy) << "  \n";
  out << "ROC AUC: " << (r.auc ? fmt(*r.auc) : std::string("n/a")) << "  \n";
  out << "Confusion: tp=" << r.counts.tp << " fp=" << r.counts.fp << " fn=" << r.counts.fn << " tn=" << r.counts.tn
      << "\n\n";
  out << "## Per-region waste F1\n\n| region | F1 | n | note |\n|---|---|---|---|\n";
  for (const auto& reg : r.regions.regions) {
    out << "| " << reg.region_id << " | " << (reg.f1_undefined ? std::string("n/a") : fmt(reg.f1)) << " | "
        << reg.counts.total() << " | " << (reg.single_class ? "single class, excluded" : "") << " |\n";
  }
  out << "\nRange " << fmt(r.regions.min) << " to " << fmt(r.regions.max) << " (SD " << fmt(r.regions.std) << ", "
      << r.regions.included << " regions)\n";
  if (r.bootstrap) {
    out << "\n## Stratified subsampling\n\n| size | F1 | ROC AUC | accuracy |\n|---|---|---|---|\n";
    for (const auto& p : r.bootstrap->points) {
      out << "| " << p.size << " | " << fmt(p.f1.mean) << " ± " << fmt(p.f1.std) << " | " << fmt(p.auc.mean) << " ± "
          << fmt(p.auc.std) << " | " << fmt(p.accuracy.mean) << " ± " << fmt(p.accuracy.std) << " |\n";
    }
  }
}

void write_curve_csv(std::ostream& out, const BootstrapCurve& curve) {
  out << "size,metric,mean,std,p2.5,p97.5\n";
  auto row = [&](std::size_t size, const char* metric, const MetricBand& b) {
    out << size << ',' << metric << ',' << io::format_decimal(b.mean, 10) << ',' << io::format_decimal(b.std, 10)
        << ',' << io::format_decimal(b.p025, 10) << ',' << io::format_decimal(b.p975, 10) << '\n';
  };
  for (const auto& p : curve.points) {
    row(p.size, "f1", p.f1);
    row(p.size, "roc_auc", p.auc);
    row(p.size, "accuracy", p.accuracy);
  }
}

}  // namespace oddmap
