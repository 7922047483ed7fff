#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "expomatch/datamodel.hpp"

namespace expomatch {

inline constexpr double kDefaultCaliperFactor = 0.2;

struct PsUnit {
  std::string zip_id;
  Region region = Region::IndustrialMidwest;
  bool treated = false;
  double ps = 0.5;
  double logit_ps = 0.0;
  double latitude = 0.0;
  double longitude = 0.0;

  bool operator==(const PsUnit&) const = default;
};

// Builds a unit with logit_ps derived from ps. Throws if ps is outside (0,1).
PsUnit make_unit(std::string zip_id, Region region, bool treated, double ps, double latitude = 0.0,
                 double longitude = 0.0);

struct MatchedPair {
  std::string treated;
  std::string control;
  bool operator==(const MatchedPair&) const = default;
};

struct MatchedSet {
  std::vector<MatchedPair> pairs;  // in matching order
  std::vector<std::string> unmatched_treated;
  std::vector<std::string> unmatched_control;
  std::vector<std::string> discarded;
  double caliper = 0.0;  // logit scale
  Region region = Region::IndustrialMidwest;
};

/// factor * sqrt((s_t^2 + s_c^2) / 2) over logit PS, sample variances.
/// Needs at least two units per group.
double compute_caliper(std::span<const PsUnit> units, double factor = kDefaultCaliperFactor);

struct SupportTrim {
  std::vector<PsUnit> kept;
  std::vector<PsUnit> discarded;
  double lower = 0.0;  // PS scale
  double upper = 1.0;
};

/// Drops units strictly outside [max(min_t, min_c), min(max_t, max_c)].
SupportTrim trim_support(std::span<const PsUnit> units);

/// Greedy 1:1 matching without replacement on |logit PS difference|.
/// Treated units go in decreasing logit PS (id ascending on ties); each takes
/// the nearest unused control within the caliper, smallest id on ties.
MatchedSet nn_match(std::span<const PsUnit> units, double caliper);

// Pair-level audit rows: treated_zip, control_zip, treated_ps, control_ps, abs_logit_diff.
void write_matched_set(std::ostream& out, const MatchedSet& set, std::span<const PsUnit> units);

}  // namespace expomatch
