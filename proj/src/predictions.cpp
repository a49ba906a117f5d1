#include "oddmap/predictions.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <ostream>

#include "oddmap/csv.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"

namespace oddmap {
namespace {

std::string format_confidence(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string describe(const TileKey& k) {
  return k.region_id + " (" + std::to_string(k.tile_id.row) + "," + std::to_string(k.tile_id.col) + ")";
}

}  // namespace

void write_predictions_csv(std::ostream& out, const std::vector<Prediction>& predictions) {
  out << "region_id,row,col,predicted_class,confidence\n";
  for (const auto& p : predictions) {
    out << csv::escape(p.region_id) << ',' << p.tile_id.row << ',' << p.tile_id.col << ',' << to_string(p.predicted)
        << ',' << format_confidence(p.confidence) << '\n';
  }
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<Prediction>& predictions) {
  io::write_atomic(path, [&](std::ostream& out) { write_predictions_csv(out, predictions); });
}

std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  const auto c_region = table.require("region_id", src);
  const auto c_row = table.require("row", src);
  const auto c_col = table.require("col", src);
  const auto c_class = table.require("predicted_class", src);
  const auto c_conf = table.require("confidence", src);
  std::vector<Prediction> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto label = parse_label(row.at(c_class));
    if (!label) {
      fail(ErrorKind::Validation,
           src + " line " + std::to_string(table.lines[i]) + ": unknown class '" + row.at(c_class) + "'");
    }
    Prediction p;
    p.region_id = row.at(c_region);
    p.tile_id = {csv::to_int(row.at(c_row), "row"), csv::to_int(row.at(c_col), "col")};
    p.predicted = *label;
    p.confidence = csv::to_double(row.at(c_conf), "confidence");
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
      fail(ErrorKind::Validation, src + " line " + std::to_string(table.lines[i]) + ": confidence outside [0,1]");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<LabeledTile> read_labels_csv(const std::filesystem::path& path, std::optional<std::string_view> split) {
  const auto table = csv::read_file(path);
  const std::string src = path.string();
  const auto c_region = table.require("region_id", src);
  const auto c_row = table.require("row", src);
  const auto c_col = table.require("col", src);
  auto c_label = table.column("label");
  if (!c_label) c_label = table.column("predicted_class");
  if (!c_label) fail(ErrorKind::Parse, src + ": missing column 'label'");
  const auto c_split = table.column("split");
  if (split && !c_split) fail(ErrorKind::Parse, src + ": split filter given but file has no 'split' column");

  std::vector<LabeledTile> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (split && row.at(*c_split) != *split) continue;
    const auto label = parse_label(row.at(*c_label));
    if (!label) {
      fail(ErrorKind::Validation,
           src + " line " + std::to_string(table.lines[i]) + ": unknown label '" + row.at(*c_label) + "'");
    }
    out.push_back({row.at(c_region), {csv::to_int(row.at(c_row), "row"), csv::to_int(row.at(c_col), "col")}, *label});
  }
  return out;
}

JoinResult join(const std::vector<Prediction>& predictions, const std::vector<LabeledTile>& truth) {
  std::map<TileKey, const Prediction*> preds;
  for (const auto& p : predictions) {
    if (!preds.emplace(p.key(), &p).second) fail(ErrorKind::Join, "duplicate prediction for " + describe(p.key()));
  }
  std::map<TileKey, const LabeledTile*> labels;
  for (const auto& t : truth) {
    if (!labels.emplace(t.key(), &t).second) fail(ErrorKind::Join, "duplicate label for " + describe(t.key()));
  }
  JoinResult out;
  auto pi = preds.begin();
  auto li = labels.begin();
  while (pi != preds.end() || li != labels.end()) {
    if (li == labels.end() || (pi != preds.end() && pi->first < li->first)) {
      out.unmatched_predictions.push_back(pi->first);
      ++pi;
    } else if (pi == preds.end() || li->first < pi->first) {
      out.unmatched_truth.push_back(li->first);
      ++li;
    } else {
      const Prediction& p = *pi->second;
      out.samples.push_back({pi->first, li->second->label, p.predicted, p.p_waste(), p.confidence});
      ++pi;
      ++li;
    }
  }
  return out;
}

}  // namespace oddmap
