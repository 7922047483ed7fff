#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "expomatch/config.hpp"
#include "expomatch/dapsm.hpp"
#include "expomatch/datamodel.hpp"
#include "expomatch/diagnostics.hpp"
#include "expomatch/error.hpp"
#include "expomatch/exposure.hpp"
#include "expomatch/glm.hpp"
#include "expomatch/matching.hpp"

namespace expomatch {

inline constexpr std::string_view kExposureColumn = "high_exposed";
inline constexpr std::string_view kVersion = "0.1.0";

enum class RegionStatus { Ok, Empty, Failed };
std::string_view to_string(RegionStatus status);

struct RegionResult {
  Region region = Region::IndustrialMidwest;
  AnalysisMode mode = AnalysisMode::Primary;
  double cutoff = 4.0;
  RegionStatus status = RegionStatus::Empty;
  std::optional<ErrorCode> error;
  std::string message;
  std::vector<std::string> warnings;

  std::size_t n_units = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::size_t n_pairs = 0;
  std::size_t unmatched_treated = 0;
  std::size_t unmatched_control = 0;
  std::size_t discarded_treated = 0;
  std::size_t discarded_control = 0;
  std::size_t n_outcome_units = 0;
  double caliper = 0.0;

  // raw region data, per exposure group
  std::optional<double> mean_influence_treated;
  std::optional<double> mean_influence_control;
  std::optional<double> pm25_smd_raw;
  std::optional<double> pm25_smd_matched;

  std::optional<FittedGlm> ps_model;
  std::optional<FittedGlm> outcome_model;
  std::optional<IrrEstimate> irr;
  std::optional<IrrEstimate> crude_irr;  // exposure-only Poisson on all region units

  std::vector<PsUnit> units;  // every unit with a PS, discarded ones included
  std::optional<MatchedSet> matched;
  std::optional<BalanceTable> balance;

  std::optional<double> daps_weight;
  bool daps_balanced = true;
  std::optional<double> daps_max_abs_smd;
  std::vector<WeightDiagnostic> daps_diagnostics;
  std::optional<double> mean_pair_distance_km;

  std::optional<Strata> strata;
};

struct SweepPoint {
  double cutoff = 0.0;
  std::vector<RegionResult> regions;
};

struct AnalysisReport {
  RunConfig config;
  std::string config_hash;
  std::string input_sha256;
  Provenance input;
  std::vector<RegionResult> regions;  // fixed region order
  std::vector<SweepPoint> sweep;
  std::vector<std::string> flags;
};

/// Reads the input table, applies the optional grid influence table and
/// drops records that fail validation.
Dataset load_dataset(const RunConfig& config);

// Covariates entering the propensity and outcome models for a mode.
std::vector<std::string> model_covariates(AnalysisMode mode);

RegionResult analyze_region(const RunConfig& config, const Dataset& region_data, Region region,
                            AnalysisMode mode, double cutoff);

AnalysisReport run_primary(const RunConfig& config, const Dataset& ds);
AnalysisReport run_secondary(const RunConfig& config, const Dataset& ds);
AnalysisReport run_stratified(const RunConfig& config, const Dataset& ds);
AnalysisReport run_daps(const RunConfig& config, const Dataset& ds);
std::vector<SweepPoint> run_sweep(const RunConfig& config, const Dataset& ds);

// Dispatches on config.mode; sweep results land in report.sweep.
AnalysisReport run_analysis(const RunConfig& config, const Dataset& ds);

/// Writes irr_table.csv/.txt, models.csv, per-region balance, Love-plot,
/// matched-set, PS and mode-specific CSVs, sweep.csv and run_summary.json.
/// Returns the written file names, sorted.
std::vector<std::string> emit_report(const AnalysisReport& report, const std::string& outdir);

// Human-readable IRR table, two decimals.
std::string format_irr_table(const AnalysisReport& report);
std::string format_irr(double value);

}  // namespace expomatch
