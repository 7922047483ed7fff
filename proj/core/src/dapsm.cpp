#include "expomatch/dapsm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <unordered_map>

#include "expomatch/csv.hpp"
#include "expomatch/error.hpp"

namespace expomatch {

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

DistanceMatrix standardized_distance(std::span<const PsUnit> units) {
  DistanceMatrix d;
  for (std::size_t i = 0; i < units.size(); ++i) (units[i].treated ? d.treated : d.controls).push_back(i);
  if (d.treated.empty() || d.controls.empty())
    throw Error(ErrorCode::InsufficientUnits, "distance matrix needs treated and control units");
  const auto nt = static_cast<Eigen::Index>(d.treated.size());
  const auto nc = static_cast<Eigen::Index>(d.controls.size());
  d.km.resize(nt, nc);
  for (Eigen::Index i = 0; i < nt; ++i) {
    const PsUnit& t = units[d.treated[i]];
    for (Eigen::Index j = 0; j < nc; ++j) {
      const PsUnit& c = units[d.controls[j]];
      d.km(i, j) = haversine_km(t.latitude, t.longitude, c.latitude, c.longitude);
      d.max_logit_gap = std::max(d.max_logit_gap, std::abs(t.logit_ps - c.logit_ps));
    }
  }
  d.max_km = d.km.maxCoeff();
  if (d.max_km > 0.0) {
    d.standardized = d.km / d.max_km;
  } else {
    d.degenerate = true;
    d.standardized = Eigen::MatrixXd::Zero(nt, nc);
  }
  return d;
}

std::vector<double> DapsConfig::default_weight_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw Error(ErrorCode::InvalidConfig, "weight grid step must be in (0,1]");
  std::vector<double> grid;
  const auto n = static_cast<long long>(std::floor(1.0 / step + 1e-9));
  const bool exact = std::abs(static_cast<double>(n) * step - 1.0) < 1e-9;
  for (long long i = 0; i <= n; ++i) {
    // (n - i) / n keeps points such as 0.9975 and 0.985 exactly representable as typed
    const double w = exact ? static_cast<double>(n - i) / static_cast<double>(n) : 1.0 - static_cast<double>(i) * step;
    grid.push_back(std::max(0.0, w));
  }
  if (grid.back() > 0.0) grid.push_back(0.0);
  return grid;
}

void DapsConfig::validate() const {
  if (weight_grid.empty()) throw Error(ErrorCode::InvalidConfig, "DAPS weight grid is empty");
  for (std::size_t i = 0; i < weight_grid.size(); ++i) {
    if (weight_grid[i] < 0.0 || weight_grid[i] > 1.0)
      throw Error(ErrorCode::InvalidConfig, "DAPS weights must lie in [0,1]");
    if (i > 0 && !(weight_grid[i] < weight_grid[i - 1]))
      throw Error(ErrorCode::InvalidConfig, "DAPS weight grid must be strictly descending");
  }
  if (!(smd_threshold > 0.0)) throw Error(ErrorCode::InvalidConfig, "SMD threshold must be positive");
  if (!(caliper_factor > 0.0)) throw Error(ErrorCode::InvalidConfig, "caliper factor must be positive");
}

MatchedSet daps_match(std::span<const PsUnit> units, double weight, double caliper) {
  return daps_match(units, standardized_distance(units), weight, caliper);
}

MatchedSet daps_match(std::span<const PsUnit> units, const DistanceMatrix& dist, double weight,
                      double caliper) {
  if (!(weight >= 0.0 && weight <= 1.0)) throw Error(ErrorCode::InvalidConfig, "DAPS weight must be in [0,1]");
  if (!(caliper >= 0.0)) throw Error(ErrorCode::InvalidConfig, "caliper must be nonnegative");
  MatchedSet out;
  out.caliper = caliper;
  if (!units.empty()) out.region = units.front().region;
  for (const auto& u : units)
    if (u.region != out.region) throw Error(ErrorCode::MixedRegions, "matching units span more than one region");

  const std::size_t nt = dist.treated.size();
  const std::size_t nc = dist.controls.size();

  const double ps_scale = dist.max_logit_gap > 0.0 ? 1.0 / dist.max_logit_gap : 0.0;

  std::vector<std::size_t> order(nt);
  for (std::size_t i = 0; i < nt; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const PsUnit& ua = units[dist.treated[a]];
    const PsUnit& ub = units[dist.treated[b]];
    if (ua.logit_ps != ub.logit_ps) return ua.logit_ps > ub.logit_ps;
    return ua.zip_id < ub.zip_id;
  });

  std::vector<bool> used(nc, false);
  for (std::size_t ti : order) {
    const PsUnit& t = units[dist.treated[ti]];
    std::ptrdiff_t best = -1;
    double best_score = 0.0;
    for (std::size_t cj = 0; cj < nc; ++cj) {
      if (used[cj]) continue;
      const PsUnit& c = units[dist.controls[cj]];
      const double gap = std::abs(t.logit_ps - c.logit_ps);
      if (gap > caliper) continue;
      // At w = 1 the raw gap is compared so rounding in the rescale cannot
      // create ties that nn_match would not see.
      const double s = weight == 1.0
                           ? gap
                           : weight * (gap * ps_scale) +
                                 (1.0 - weight) *
                                     dist.standardized(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(cj));
      if (best < 0 || s < best_score ||
          (s == best_score && c.zip_id < units[dist.controls[static_cast<std::size_t>(best)]].zip_id)) {
        best = static_cast<std::ptrdiff_t>(cj);
        best_score = s;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      out.pairs.push_back({t.zip_id, units[dist.controls[static_cast<std::size_t>(best)]].zip_id});
    } else {
      out.unmatched_treated.push_back(t.zip_id);
    }
  }
  for (std::size_t cj = 0; cj < nc; ++cj)
    if (!used[cj]) out.unmatched_control.push_back(units[dist.controls[cj]].zip_id);
  std::sort(out.unmatched_treated.begin(), out.unmatched_treated.end());
  std::sort(out.unmatched_control.begin(), out.unmatched_control.end());
  return out;
}

double mean_pair_distance_km(std::span<const PsUnit> units, const MatchedSet& set) {
  if (set.pairs.empty()) return 0.0;
  std::unordered_map<std::string_view, const PsUnit*> by_id;
  for (const auto& u : units) by_id.emplace(u.zip_id, &u);
  double total = 0.0;
  for (const auto& p : set.pairs) {
    const PsUnit* t = by_id.at(p.treated);
    const PsUnit* c = by_id.at(p.control);
    total += haversine_km(t->latitude, t->longitude, c->latitude, c->longitude);
  }
  return total / static_cast<double>(set.pairs.size());
}

WeightDiagnostic evaluate_weight(std::span<const PsUnit> units, const DistanceMatrix& distances,
                                 const CovariateTable& covariates, double weight, double caliper,
                                 MatchedSet* matched_out) {
  MatchedSet m = daps_match(units, distances, weight, caliper);
  WeightDiagnostic d;
  d.weight = weight;
  d.n_pairs = m.pairs.size();
  d.mean_pair_distance_km = mean_pair_distance_km(units, m);
  try {
    d.max_abs_smd = max_abs(matched_smds(covariates, m));
  } catch (const Error&) {
    // too few pairs, or a covariate constant within both matched groups
    d.max_abs_smd = std::numeric_limits<double>::infinity();
  }
  if (matched_out) *matched_out = std::move(m);
  return d;
}

DapsSelection select_weight(std::span<const PsUnit> units, const DapsConfig& config,
                            const CovariateTable& covariates, bool full_grid) {
  config.validate();
  const DistanceMatrix dist = standardized_distance(units);
  DapsSelection sel;
  sel.degenerate_geometry = dist.degenerate;
  sel.caliper = compute_caliper(units, config.caliper_factor);

  std::ptrdiff_t chosen = -1;
  std::ptrdiff_t best_fallback = -1;
  MatchedSet chosen_set, fallback_set;
  for (double w : config.weight_grid) {
    MatchedSet m;
    const auto diag = evaluate_weight(units, dist, covariates, w, sel.caliper, &m);
    sel.evaluated.push_back(diag);
    const auto idx = static_cast<std::ptrdiff_t>(sel.evaluated.size() - 1);
    if (chosen < 0 && diag.max_abs_smd < config.smd_threshold) {
      chosen = idx;
      chosen_set = std::move(m);
      if (!full_grid) break;
    } else if (chosen < 0 &&
               (best_fallback < 0 || diag.max_abs_smd < sel.evaluated[static_cast<std::size_t>(best_fallback)].max_abs_smd)) {
      best_fallback = idx;
      fallback_set = std::move(m);
    }
  }
  if (chosen >= 0) {
    sel.weight = sel.evaluated[static_cast<std::size_t>(chosen)].weight;
    sel.max_abs_smd = sel.evaluated[static_cast<std::size_t>(chosen)].max_abs_smd;
    sel.matched = std::move(chosen_set);
    sel.balanced = true;
  } else {
    sel.weight = sel.evaluated[static_cast<std::size_t>(best_fallback)].weight;
    sel.max_abs_smd = sel.evaluated[static_cast<std::size_t>(best_fallback)].max_abs_smd;
    sel.matched = std::move(fallback_set);
    sel.balanced = false;
  }
  return sel;
}

void write_weight_diagnostics(std::ostream& out, std::span<const WeightDiagnostic> rows) {
  csv::Writer w(out);
  w.row({"weight", "max_abs_smd", "n_pairs", "mean_pair_distance_km"});
  for (const auto& r : rows) {
    w.field(r.weight).field(r.max_abs_smd).field(r.n_pairs).field(r.mean_pair_distance_km);
    w.end_row();
  }
}

}  // namespace expomatch
