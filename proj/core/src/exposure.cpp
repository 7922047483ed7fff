#include "expomatch/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <unordered_map>

#include "expomatch/csv.hpp"
#include "expomatch/error.hpp"

namespace expomatch {

Classification classify(const Dataset& ds, double cutoff) {
  if (!(cutoff > 0.0)) throw Error(ErrorCode::InvalidConfig, "cutoff must be positive");
  Classification out;
  out.assignments.reserve(ds.size());
  for (const auto& r : ds.records()) {
    const bool high = r.coal_influence >= cutoff;
    out.assignments.push_back(
        {r.zip_id, high ? ExposureLabel::HighExposed : ExposureLabel::Control, cutoff, r.coal_influence});
    (high ? out.n_high : out.n_control)++;
  }
  return out;
}

std::map<std::string, double> aggregate_grid(std::span<const GridCell> cells) {
  std::map<std::string, double> total;
  std::map<std::string, double> weight_sum;
  for (const auto& cell : cells) {
    for (const auto& [zip, w] : cell.area_weight_per_zip) {
      if (!(w >= 0.0) || w > 1.0)
        throw Error(ErrorCode::WeightSumViolation,
                    "cell " + cell.cell_id + " has weight outside [0,1] for zip " + zip);
      total[zip] += w * cell.influence;
      weight_sum[zip] += w;
    }
  }
  for (const auto& [zip, s] : weight_sum) {
    if (std::abs(s - 1.0) > 1e-6)
      throw Error(ErrorCode::WeightSumViolation,
                  "weights for zip " + zip + " sum to " + csv::format_double(s));
  }
  return total;
}

std::vector<GridCell> parse_grid_table(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw Error(ErrorCode::MissingColumn, "grid table has no header");
  const auto header = csv::split_line(line);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos.emplace(std::string(csv::trim(header[i])), i);
  for (const char* col : {"cell_id", "influence", "zip", "weight"})
    if (!pos.count(col)) throw Error(ErrorCode::MissingColumn, std::string("grid column ") + col);
  const std::size_t c_id = pos["cell_id"], c_inf = pos["influence"], c_zip = pos["zip"], c_w = pos["weight"];

  std::vector<GridCell> cells;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (csv::next_line(in, line)) {
    ++line_no;
    const auto f = csv::split_line(line);
    const std::size_t need = std::max({c_id, c_inf, c_zip, c_w});
    if (f.size() <= need)
      throw Error(ErrorCode::MissingColumn, "grid row " + std::to_string(line_no) + " is short");
    auto inf = csv::parse_double(f[c_inf]);
    auto w = csv::parse_double(f[c_w]);
    if (!inf || !w)
      throw Error(ErrorCode::WeightSumViolation, "grid row " + std::to_string(line_no) + " unparseable");
    const std::string id(csv::trim(f[c_id]));
    auto [it, inserted] = index.emplace(id, cells.size());
    if (inserted) cells.push_back(GridCell{id, *inf, {}});
    GridCell& cell = cells[it->second];
    if (cell.influence != *inf)
      throw Error(ErrorCode::WeightSumViolation, "cell " + id + " has inconsistent influence values");
    cell.area_weight_per_zip[std::string(csv::trim(f[c_zip]))] += *w;
  }
  return cells;
}

std::vector<GridCell> read_grid_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  return parse_grid_table(in);
}

Dataset apply_grid_influence(const Dataset& ds, const std::map<std::string, double>& influence) {
  std::vector<ZipRecord> records = ds.records();
  std::size_t replaced = 0;
  for (auto& r : records) {
    if (auto it = influence.find(r.zip_id); it != influence.end()) {
      r.coal_influence = it->second;
      ++replaced;
    }
  }
  Provenance prov = ds.provenance();
  if (replaced < records.size())
    prov.warnings.push_back(std::to_string(records.size() - replaced) +
                            " zip(s) not covered by the grid keep their tabulated influence");
  return Dataset(std::move(records), std::move(prov));
}

double influence_percentile(double value, std::span<const double> reference) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "percentile reference is empty");
  std::size_t at_or_below = 0;
  for (double r : reference)
    if (r <= value) ++at_or_below;
  return 100.0 * static_cast<double>(at_or_below) / static_cast<double>(reference.size());
}

}  // namespace expomatch
