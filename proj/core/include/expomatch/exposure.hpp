#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "expomatch/datamodel.hpp"

namespace expomatch {

inline constexpr double kDefaultCutoff = 4.0;  // ug/m3

enum class ExposureLabel { Control, HighExposed };

struct ExposureAssignment {
  std::string zip_id;
  ExposureLabel label = ExposureLabel::Control;
  double cutoff = 0.0;
  double influence = 0.0;

  bool treated() const noexcept { return label == ExposureLabel::HighExposed; }
  bool operator==(const ExposureAssignment&) const = default;
};

struct Classification {
  std::vector<ExposureAssignment> assignments;  // same order as the dataset
  std::size_t n_high = 0;
  std::size_t n_control = 0;
};

// influence >= cutoff is HighExposed.
Classification classify(const Dataset& ds, double cutoff = kDefaultCutoff);

struct GridCell {
  std::string cell_id;
  double influence = 0.0;
  std::map<std::string, double> area_weight_per_zip;
};

// Weighted sum of cell influences per ZIP. Each ZIP's weights must sum to 1.
std::map<std::string, double> aggregate_grid(std::span<const GridCell> cells);

// Long format: cell_id, influence, zip, weight.
std::vector<GridCell> parse_grid_table(std::istream& in);
std::vector<GridCell> read_grid_table(const std::string& path);

// Replaces coal_influence for every ZIP covered by the grid.
Dataset apply_grid_influence(const Dataset& ds, const std::map<std::string, double>& influence);

// 100 * (#reference <= value) / n.
double influence_percentile(double value, std::span<const double> reference);

}  // namespace expomatch
