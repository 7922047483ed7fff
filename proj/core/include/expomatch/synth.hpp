#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "expomatch/datamodel.hpp"

namespace expomatch {

/// Portable random stream: std::mt19937_64 (bit-exact across standard
/// libraries) with hand-written uniform, normal and Poisson transforms.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, stream_id) via SplitMix64 mixing.
  static RandomStream split(std::uint64_t seed, std::uint64_t stream_id);

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();   // Box-Muller, one variate per call
  double normal(double mean, double sd) { return mean + sd * normal(); }
  long long poisson(double mean);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct SynthParams {
  int n_per_region = 2000;
  double true_log_irr = std::log(1.08);
  double confounding_strength = 1.0;
  double spatial_confounder_scale = 0.0;
  double baseline_rate = 0.03;  // events per person-year
  double person_years_lo = 200.0;
  double person_years_hi = 2000.0;
  double cutoff = 4.0;       // influence threshold separating the two modes
  double pm25_shift = 0.0;   // ug/m3 added to PM2.5 of high-exposed units
  double pm25_effect = 0.0;  // log-rate per ug/m3 of PM2.5
  std::uint64_t seed = 1;

  void validate() const;
};

struct TruthRow {
  std::string zip_id;
  Region region = Region::IndustrialMidwest;
  double true_ps = 0.5;
  bool treated = false;
};

struct GroundTruth {
  SynthParams params;
  std::vector<TruthRow> rows;  // same order as the dataset
};

struct SynthData {
  Dataset data;
  GroundTruth truth;
};

/// Region-stratified synthetic ZIP table. Treatment follows a logistic model
/// in the standardized covariates (plus a latitude confounder when
/// spatial_confounder_scale > 0); counts are Poisson with a person-year offset.
SynthData generate(const SynthParams& params);

double true_effect(const GroundTruth& truth);

// zip, region, true_ps, treated, true_log_irr, seed
void write_ground_truth(std::ostream& out, const GroundTruth& truth);
// key, value
void write_synth_params(std::ostream& out, const SynthParams& params);

}  // namespace expomatch
