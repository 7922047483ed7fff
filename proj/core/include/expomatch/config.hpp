#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "expomatch/dapsm.hpp"
#include "expomatch/datamodel.hpp"
#include "expomatch/synth.hpp"

namespace expomatch {

enum class AnalysisMode { Primary, SecondaryPm25, Stratified, Daps, Sweep };

std::string_view to_string(AnalysisMode mode);
AnalysisMode parse_mode(std::string_view text);

struct SweepRange {
  double lo = 3.0;
  double hi = 5.0;
  double step = 0.25;

  std::vector<double> cutoffs() const;
  // "LO:HI:STEP"
  static SweepRange parse(std::string_view text);
};

struct RunConfig {
  std::string input;
  std::string grid;  // optional grid-to-ZIP influence table
  AnalysisMode mode = AnalysisMode::Primary;
  double cutoff = 4.0;
  SweepRange sweep;
  double caliper_factor = kDefaultCaliperFactor;
  double confidence_level = 0.95;
  int strata = 5;
  double daps_grid_step = 0.0025;
  double daps_smd_threshold = 0.15;
  bool daps_balance_coordinates = true;
  bool daps_full_grid = false;
  std::string out = "out";
  std::uint64_t seed = 1;
  ColumnSchema schema;
  std::map<std::string, std::string> column_overrides;
  SynthParams synth;

  void validate() const;
  DapsConfig daps_config() const;

  /// Sorted key=value lines of every setting that affects results. The
  /// output directory is excluded so reruns elsewhere hash identically.
  std::string canonical() const;
  std::string hash() const;  // SHA-256 hex of canonical()
};

/// TOML-style subset: `key = value` lines, `[section]` headers, `#` comments,
/// optional double quotes around values. Unknown keys are InvalidConfig.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

// Applies one flattened key ("cutoff", "daps.smd_threshold", "columns.zip", ...).
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

std::string sha256_hex(std::string_view bytes);

}  // namespace expomatch
