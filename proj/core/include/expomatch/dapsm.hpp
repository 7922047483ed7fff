#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "expomatch/diagnostics.hpp"
#include "expomatch/matching.hpp"

namespace expomatch {

inline constexpr double kEarthRadiusKm = 6371.0088;

double haversine_km(double lat1, double lon1, double lat2, double lon2);

// Treated x control great-circle distances for units of one region, in input order.
struct DistanceMatrix {
  std::vector<std::size_t> treated;  // indices into the unit list
  std::vector<std::size_t> controls;
  Eigen::MatrixXd km;
  Eigen::MatrixXd standardized;  // km / max treated-control km; zeros when degenerate
  double max_km = 0.0;
  double max_logit_gap = 0.0;  // max treated-control |logit PS difference|
  bool degenerate = false;  // every treated-control distance is zero
};

DistanceMatrix standardized_distance(std::span<const PsUnit> units);

struct DapsConfig {
  std::vector<double> weight_grid = default_weight_grid();
  double smd_threshold = 0.15;
  double caliper_factor = kDefaultCaliperFactor;

  /// 1.0 down to 0.0 inclusive.
  static std::vector<double> default_weight_grid(double step = 0.0025);
  void validate() const;
};

/// Greedy 1:1 matching on w * ps_term + (1 - w) * d_std, where ps_term is the
/// |logit PS difference| scaled by its regional treated-control maximum.
/// Order, tie-breaks and the logit caliper follow nn_match, so w = 1
/// reproduces it.
MatchedSet daps_match(std::span<const PsUnit> units, double weight, double caliper);
MatchedSet daps_match(std::span<const PsUnit> units, const DistanceMatrix& distances, double weight,
                      double caliper);

struct WeightDiagnostic {
  double weight = 1.0;
  double max_abs_smd = 0.0;
  std::size_t n_pairs = 0;
  double mean_pair_distance_km = 0.0;
};

struct DapsSelection {
  double weight = 1.0;
  MatchedSet matched;
  double max_abs_smd = 0.0;
  double caliper = 0.0;
  bool balanced = true;  // false when no grid weight met the threshold
  bool degenerate_geometry = false;
  std::vector<WeightDiagnostic> evaluated;  // grid order
};

WeightDiagnostic evaluate_weight(std::span<const PsUnit> units, const DistanceMatrix& distances,
                                 const CovariateTable& covariates, double weight, double caliper,
                                 MatchedSet* matched_out = nullptr);

/// Largest grid weight whose matched set has every |SMD| below the threshold.
/// Falls back to the weight minimizing the max |SMD| (flagged) when none
/// qualifies. With `full_grid` every weight is evaluated for diagnostics.
DapsSelection select_weight(std::span<const PsUnit> units, const DapsConfig& config,
                            const CovariateTable& covariates, bool full_grid = false);

double mean_pair_distance_km(std::span<const PsUnit> units, const MatchedSet& set);

// weight, max_abs_smd, n_pairs, mean_pair_distance_km
void write_weight_diagnostics(std::ostream& out, std::span<const WeightDiagnostic> rows);

}  // namespace expomatch
