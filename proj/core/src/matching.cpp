#include "expomatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "expomatch/csv.hpp"
#include "expomatch/error.hpp"

namespace expomatch {

PsUnit make_unit(std::string zip_id, Region region, bool treated, double ps, double latitude,
                 double longitude) {
  if (!(ps > 0.0 && ps < 1.0))
    throw Error(ErrorCode::ColumnMismatch, "propensity score for " + zip_id + " is outside (0,1)");
  PsUnit u;
  u.zip_id = std::move(zip_id);
  u.region = region;
  u.treated = treated;
  u.ps = ps;
  u.logit_ps = std::log(ps) - std::log1p(-ps);
  u.latitude = latitude;
  u.longitude = longitude;
  return u;
}

namespace {

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (n - 1.0);
}

Region common_region(std::span<const PsUnit> units) {
  if (units.empty()) return Region::IndustrialMidwest;
  const Region r = units.front().region;
  for (const auto& u : units)
    if (u.region != r) throw Error(ErrorCode::MixedRegions, "matching units span more than one region");
  return r;
}

}  // namespace

double compute_caliper(std::span<const PsUnit> units, double factor) {
  std::vector<double> lt, lc;
  for (const auto& u : units) (u.treated ? lt : lc).push_back(u.logit_ps);
  if (lt.size() < 2 || lc.size() < 2)
    throw Error(ErrorCode::InsufficientUnits, "caliper needs at least two treated and two control units");
  return factor * std::sqrt((sample_variance(lt) + sample_variance(lc)) / 2.0);
}

SupportTrim trim_support(std::span<const PsUnit> units) {
  double min_t = 1.0, max_t = 0.0, min_c = 1.0, max_c = 0.0;
  std::size_t nt = 0, nc = 0;
  for (const auto& u : units) {
    if (u.treated) {
      min_t = std::min(min_t, u.ps);
      max_t = std::max(max_t, u.ps);
      ++nt;
    } else {
      min_c = std::min(min_c, u.ps);
      max_c = std::max(max_c, u.ps);
      ++nc;
    }
  }
  if (nt == 0 || nc == 0) throw Error(ErrorCode::InsufficientUnits, "support trimming needs both groups");
  SupportTrim out;
  out.lower = std::max(min_t, min_c);
  out.upper = std::min(max_t, max_c);
  if (out.lower > out.upper) throw Error(ErrorCode::EmptyOverlap, "treated and control PS ranges do not overlap");
  for (const auto& u : units) {
    if (u.ps < out.lower || u.ps > out.upper)
      out.discarded.push_back(u);
    else
      out.kept.push_back(u);
  }
  return out;
}

MatchedSet nn_match(std::span<const PsUnit> units, double caliper) {
  if (!(caliper >= 0.0)) throw Error(ErrorCode::InvalidConfig, "caliper must be nonnegative");
  MatchedSet out;
  out.region = common_region(units);
  out.caliper = caliper;

  std::vector<const PsUnit*> treated, controls;
  for (const auto& u : units) (u.treated ? treated : controls).push_back(&u);
  std::sort(treated.begin(), treated.end(), [](const PsUnit* a, const PsUnit* b) {
    if (a->logit_ps != b->logit_ps) return a->logit_ps > b->logit_ps;
    return a->zip_id < b->zip_id;
  });
  std::sort(controls.begin(), controls.end(), [](const PsUnit* a, const PsUnit* b) {
    if (a->logit_ps != b->logit_ps) return a->logit_ps < b->logit_ps;
    return a->zip_id < b->zip_id;
  });

  const std::ptrdiff_t nc = static_cast<std::ptrdiff_t>(controls.size());
  std::vector<bool> used(controls.size(), false);

  for (const PsUnit* t : treated) {
    const double x = t->logit_ps;
    const auto first_ge = std::lower_bound(controls.begin(), controls.end(), x,
                                           [](const PsUnit* c, double v) { return c->logit_ps < v; });
    std::ptrdiff_t right = first_ge - controls.begin();
    while (right < nc && used[right]) ++right;

    std::ptrdiff_t left = (first_ge - controls.begin()) - 1;
    while (left >= 0 && used[left]) --left;
    if (left >= 0) {
      // Within a run of equal logits the leftmost unused entry has the smallest id.
      const double v = controls[left]->logit_ps;
      for (std::ptrdiff_t k = left - 1; k >= 0 && controls[k]->logit_ps == v; --k)
        if (!used[k]) left = k;
    }

    std::ptrdiff_t best = -1;
    double best_dist = 0.0;
    for (std::ptrdiff_t cand : {left, right}) {
      if (cand < 0 || cand >= nc) continue;
      const double d = std::abs(x - controls[cand]->logit_ps);
      if (best < 0 || d < best_dist || (d == best_dist && controls[cand]->zip_id < controls[best]->zip_id)) {
        best = cand;
        best_dist = d;
      }
    }
    if (best >= 0 && best_dist <= caliper) {
      used[best] = true;
      out.pairs.push_back({t->zip_id, controls[best]->zip_id});
    } else {
      out.unmatched_treated.push_back(t->zip_id);
    }
  }
  for (std::ptrdiff_t k = 0; k < nc; ++k)
    if (!used[k]) out.unmatched_control.push_back(controls[k]->zip_id);
  std::sort(out.unmatched_treated.begin(), out.unmatched_treated.end());
  std::sort(out.unmatched_control.begin(), out.unmatched_control.end());
  return out;
}

void write_matched_set(std::ostream& out, const MatchedSet& set, std::span<const PsUnit> units) {
  std::unordered_map<std::string_view, const PsUnit*> by_id;
  for (const auto& u : units) by_id.emplace(u.zip_id, &u);
  csv::Writer w(out);
  w.row({"treated_zip", "control_zip", "treated_ps", "control_ps", "abs_logit_diff"});
  for (const auto& p : set.pairs) {
    const PsUnit* t = by_id.at(p.treated);
    const PsUnit* c = by_id.at(p.control);
    w.field(p.treated).field(p.control).field(t->ps).field(c->ps).field(std::abs(t->logit_ps - c->logit_ps));
    w.end_row();
  }
}

}  // namespace expomatch
