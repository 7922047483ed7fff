#include "expomatch/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "expomatch/csv.hpp"
#include "expomatch/error.hpp"

namespace expomatch {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream RandomStream::split(std::uint64_t seed, std::uint64_t stream_id) {
  return RandomStream(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL)));
}

double RandomStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RandomStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

long long RandomStream::poisson(double mean) {
  if (!(mean >= 0.0)) throw Error(ErrorCode::InvalidConfig, "Poisson mean must be nonnegative");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // multiplication of uniforms
    const double limit = std::exp(-mean);
    long long k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }
  // Hormann's transformed rejection with squeeze (PTRS)
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<long long>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <= -mean + k * loglam - std::lgamma(k + 1.0))
      return static_cast<long long>(k);
  }
}

void SynthParams::validate() const {
  if (n_per_region < 1) throw Error(ErrorCode::InvalidConfig, "n_per_region must be positive");
  if (!(baseline_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "baseline_rate must be positive");
  if (!(person_years_lo > 0.0) || !(person_years_hi >= person_years_lo))
    throw Error(ErrorCode::InvalidConfig, "person-year range must satisfy 0 < lo <= hi");
  if (!(confounding_strength >= 0.0) || !(spatial_confounder_scale >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "confounding strengths must be nonnegative");
  if (!(cutoff > 0.5)) throw Error(ErrorCode::InvalidConfig, "synthetic cutoff must exceed 0.5");
  if (!std::isfinite(true_log_irr) || !std::isfinite(pm25_shift) || !std::isfinite(pm25_effect))
    throw Error(ErrorCode::InvalidConfig, "synthetic effects must be finite");
}

namespace {

struct CovariateModel {
  double mean;
  double sd;
  double exposure_loading;
  double outcome_loading;
};

// Moments loosely follow the raw-data descriptive table (thousands of dollars
// for the monetary columns). Loadings act on (x - mean) / sd.
constexpr std::array<CovariateModel, kNumCovariates> kCovariateModels = {{
    {0.88, 0.05, 0.0, 0.0},        // PctOccupied
    {0.45, 0.15, 0.3, 0.05},       // PctUrban
    {8.3, 1.5, 0.4, 0.05},         // logPop
    {40.0, 12.0, -0.5, -0.08},     // MedianHHInc
    {0.36, 0.08, 0.3, 0.05},       // PctHighSchool
    {0.51, 0.03, 0.0, 0.0},        // PctFemale
    {0.15, 0.05, -0.3, -0.04},     // PctBlack
    {0.13, 0.04, 0.4, 0.08},       // PctPoor
    {0.42, 0.09, 0.0, 0.0},        // PctMovedIn5
    {100.0, 30.0, -0.3, -0.04},    // MedianHValue
    {74.8, 1.3, 0.2, 0.05},        // mean_age
    {0.56, 0.05, 0.0, 0.0},        // Female_rate
    {0.85, 0.05, 0.0, 0.0},        // White_rate
    {0.0085, 0.0012, 0.2, 0.03},   // avrelh
    {285.0, 2.5, 0.4, 0.05},       // avtmpf
    {0.27, 0.03, 0.5, 0.1},        // smokerate2000
    {0.05, 0.015, -0.2, -0.02},    // PctHisp
}};

constexpr double kTreatmentIntercept = -1.0;
constexpr double kSpatialOutcomeRatio = 0.2;  // outcome loading per unit of treatment loading
constexpr double kPm25Mean = 12.0;
constexpr double kPm25Sd = 1.5;

struct RegionBox {
  double lat_lo, lat_hi, lon_lo, lon_hi;
};

RegionBox box_of(Region r) {
  switch (r) {
    case Region::IndustrialMidwest: return {37.0, 45.0, -92.0, -80.0};
    case Region::Northeast: return {38.0, 45.0, -80.0, -70.0};
    case Region::Southeast: return {30.0, 37.0, -92.0, -76.0};
  }
  return {0, 0, 0, 0};
}

double truncated_normal(RandomStream& rng, double mean, double sd, double lo, double hi) {
  for (;;) {
    const double v = rng.normal(mean, sd);
    if (v >= lo && v < hi) return v;
  }
}

}  // namespace

SynthData generate(const SynthParams& params) {
  params.validate();
  std::vector<ZipRecord> records;
  GroundTruth truth;
  truth.params = params;
  const auto n = static_cast<std::size_t>(params.n_per_region);
  records.reserve(3 * n);
  truth.rows.reserve(3 * n);

  for (std::size_t ri = 0; ri < kAllRegions.size(); ++ri) {
    const Region region = kAllRegions[ri];
    const RegionBox box = box_of(region);
    RandomStream rng = RandomStream::split(params.seed, ri);
    const double lat_mid = 0.5 * (box.lat_lo + box.lat_hi);
    const double lat_half = 0.5 * (box.lat_hi - box.lat_lo);

    for (std::size_t i = 0; i < n; ++i) {
      ZipRecord rec;
      char id[32];
      std::snprintf(id, sizeof(id), "%s%06zu", std::string(region_code(region)).c_str(), i + 1);
      rec.zip_id = id;
      rec.region = region;
      rec.latitude = rng.uniform(box.lat_lo, box.lat_hi);
      rec.longitude = rng.uniform(box.lon_lo, box.lon_hi);
      const double spatial = (rec.latitude - lat_mid) / lat_half;

      double exposure_index = 0.0;
      double outcome_index = 0.0;
      for (std::size_t j = 0; j < kNumCovariates; ++j) {
        const auto& m = kCovariateModels[j];
        double v = rng.normal(m.mean, m.sd);
        if (is_proportion_covariate(j)) v = std::clamp(v, 0.001, 0.999);
        rec.covariates[j] = v;
        const double standardized = (v - m.mean) / m.sd;
        exposure_index += m.exposure_loading * standardized;
        outcome_index += m.outcome_loading * standardized;
      }
      const double logit = kTreatmentIntercept + params.confounding_strength * exposure_index +
                           params.spatial_confounder_scale * spatial;
      const double ps = 1.0 / (1.0 + std::exp(-logit));
      const bool treated = rng.uniform() < ps;

      rec.coal_influence = treated ? truncated_normal(rng, 5.5, 0.9, params.cutoff, 1e9)
                                   : truncated_normal(rng, 2.0, 0.8, 0.05, params.cutoff);
      rec.pm25 = std::max(0.5, rng.normal(kPm25Mean, kPm25Sd) + (treated ? params.pm25_shift : 0.0));
      rec.person_years = rng.uniform(params.person_years_lo, params.person_years_hi);

      const double log_rate = std::log(params.baseline_rate) + params.true_log_irr * (treated ? 1.0 : 0.0) +
                              params.confounding_strength * outcome_index +
                              params.pm25_effect * (rec.pm25 - kPm25Mean) +
                              kSpatialOutcomeRatio * params.spatial_confounder_scale * spatial;
      rec.ihd_count = rng.poisson(rec.person_years * std::exp(log_rate));

      truth.rows.push_back({rec.zip_id, region, ps, treated});
      records.push_back(std::move(rec));
    }
  }

  Provenance prov;
  prov.source = "synth:seed=" + std::to_string(params.seed);
  prov.rows_read = records.size();
  prov.accepted = records.size();
  // ids are generated in sorted order, so rows stay aligned with the dataset
  return {Dataset(std::move(records), std::move(prov)), std::move(truth)};
}

double true_effect(const GroundTruth& truth) { return truth.params.true_log_irr; }

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  csv::Writer w(out);
  w.row({"zip", "region", "true_ps", "treated", "true_log_irr", "seed"});
  for (const auto& r : truth.rows) {
    w.field(r.zip_id).field(region_code(r.region)).field(r.true_ps).field(r.treated ? 1 : 0)
        .field(truth.params.true_log_irr).field(std::to_string(truth.params.seed));
    w.end_row();
  }
}

void write_synth_params(std::ostream& out, const SynthParams& p) {
  csv::Writer w(out);
  w.row({"key", "value"});
  auto kv = [&](const char* k, double v) {
    w.field(k).field(v);
    w.end_row();
  };
  kv("n_per_region", p.n_per_region);
  kv("true_log_irr", p.true_log_irr);
  kv("confounding_strength", p.confounding_strength);
  kv("spatial_confounder_scale", p.spatial_confounder_scale);
  kv("baseline_rate", p.baseline_rate);
  kv("person_years_lo", p.person_years_lo);
  kv("person_years_hi", p.person_years_hi);
  kv("cutoff", p.cutoff);
  kv("pm25_shift", p.pm25_shift);
  kv("pm25_effect", p.pm25_effect);
  w.field("seed").field(std::to_string(p.seed));
  w.end_row();
}

}  // namespace expomatch
