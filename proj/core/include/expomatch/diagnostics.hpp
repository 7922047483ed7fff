#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "expomatch/datamodel.hpp"
#include "expomatch/exposure.hpp"
#include "expomatch/matching.hpp"

namespace expomatch {

struct SmdResult {
  double value = 0.0;
  bool zero_pooled_sd = false;  // both groups constant with equal means
};

/// (mean_t - mean_c) / sqrt((s_t^2 + s_c^2) / 2) with n-1 variances.
SmdResult smd(std::span<const double> treated, std::span<const double> control);

struct GroupSummary {
  double mean_treated = 0.0;
  double sd_treated = 0.0;
  double mean_control = 0.0;
  double sd_control = 0.0;
  double smd = 0.0;
  bool zero_pooled_sd = false;
};

struct BalanceRow {
  std::string covariate;
  GroupSummary raw;
  std::optional<GroupSummary> matched;
};

struct BalanceTable {
  Region region = Region::IndustrialMidwest;
  std::vector<BalanceRow> rows;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::optional<std::size_t> n_matched_pairs;

  double max_abs_raw_smd() const;
  double max_abs_matched_smd() const;  // requires matched columns
};

std::vector<std::string> default_balance_covariates();

/// Raw (and, given a matched set, matched) group summaries per covariate.
/// `ds` should hold one region; the table takes the region of its first record.
BalanceTable balance_table(const Dataset& ds, std::span<const ExposureAssignment> assignment,
                           const MatchedSet* matched = nullptr,
                           const std::vector<std::string>& covariates = default_balance_covariates());

void write_balance_table(std::ostream& out, const BalanceTable& table);
// covariate, raw_smd, matched_smd
void write_love_plot(std::ostream& out, const BalanceTable& table);

/// Column-major covariate values keyed by zip id, for repeated matched-set
/// balance checks.
class CovariateTable {
 public:
  CovariateTable() = default;
  CovariateTable(const Dataset& ds, std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t row(const std::string& zip_id) const;
  double value(std::size_t row, std::size_t covariate) const { return columns_[covariate][row]; }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// SMD of each covariate between the treated and control members of the pairs.
std::vector<double> matched_smds(const CovariateTable& table, const MatchedSet& set);
double max_abs(std::span<const double> values);

struct Strata {
  int k = 5;
  std::map<std::string, int> assignment;  // zip_id -> stratum in [0, k)
  std::vector<double> boundaries;         // k-1 upper cut points on the PS scale
  std::vector<std::size_t> sizes;
};

/// PS strata cut at the ceil(q*n) order statistics; ties stay in the lower stratum.
Strata quintile_strata(std::span<const PsUnit> units, int k = 5);

}  // namespace expomatch
