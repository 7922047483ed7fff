#include "expomatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "expomatch/csv.hpp"
#include "expomatch/error.hpp"

namespace expomatch {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(std::span<const double> v) {
  Moments m;
  const double n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.var = n > 1 ? ss / (n - 1.0) : 0.0;
  return m;
}

GroupSummary summarize(std::span<const double> t, std::span<const double> c) {
  GroupSummary g;
  const auto mt = moments(t);
  const auto mc = moments(c);
  g.mean_treated = mt.mean;
  g.sd_treated = std::sqrt(mt.var);
  g.mean_control = mc.mean;
  g.sd_control = std::sqrt(mc.var);
  const auto s = smd(t, c);
  g.smd = s.value;
  g.zero_pooled_sd = s.zero_pooled_sd;
  return g;
}

}  // namespace

SmdResult smd(std::span<const double> treated, std::span<const double> control) {
  if (treated.size() < 2 || control.size() < 2)
    throw Error(ErrorCode::InsufficientUnits, "SMD needs at least two values per group");
  const auto mt = moments(treated);
  const auto mc = moments(control);
  const double pooled = std::sqrt((mt.var + mc.var) / 2.0);
  if (pooled == 0.0) {
    if (mt.mean == mc.mean) return {0.0, true};
    throw Error(ErrorCode::ZeroPooledSd, "both groups are constant with different means");
  }
  return {(mt.mean - mc.mean) / pooled, false};
}

double BalanceTable::max_abs_raw_smd() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.raw.smd));
  return m;
}

double BalanceTable::max_abs_matched_smd() const {
  double m = 0.0;
  for (const auto& r : rows) {
    if (!r.matched) throw Error(ErrorCode::ColumnMismatch, "balance table has no matched columns");
    m = std::max(m, std::abs(r.matched->smd));
  }
  return m;
}

std::vector<std::string> default_balance_covariates() {
  return {kCovariateNames.begin(), kCovariateNames.end()};
}

BalanceTable balance_table(const Dataset& ds, std::span<const ExposureAssignment> assignment,
                           const MatchedSet* matched, const std::vector<std::string>& covariates) {
  std::unordered_map<std::string_view, bool> treated_by_id;
  for (const auto& a : assignment) treated_by_id.emplace(a.zip_id, a.treated());

  BalanceTable table;
  if (!ds.empty()) table.region = ds[0].region;
  std::vector<const ZipRecord*> rt, rc;
  for (const auto& r : ds.records()) {
    auto it = treated_by_id.find(r.zip_id);
    if (it == treated_by_id.end())
      throw Error(ErrorCode::ColumnMismatch, "no exposure assignment for zip " + r.zip_id);
    (it->second ? rt : rc).push_back(&r);
  }
  table.n_treated = rt.size();
  table.n_control = rc.size();

  std::vector<const ZipRecord*> mt, mc;
  if (matched) {
    table.n_matched_pairs = matched->pairs.size();
    for (const auto& p : matched->pairs) {
      const ZipRecord* t = ds.find(p.treated);
      const ZipRecord* c = ds.find(p.control);
      if (!t || !c) throw Error(ErrorCode::ColumnMismatch, "matched pair references a zip outside the dataset");
      mt.push_back(t);
      mc.push_back(c);
    }
  }

  auto column = [](const std::vector<const ZipRecord*>& recs, const std::string& name) {
    std::vector<double> v;
    v.reserve(recs.size());
    for (const auto* r : recs) v.push_back(record_value(*r, name));
    return v;
  };
  for (const auto& name : covariates) {
    BalanceRow row;
    row.covariate = name;
    row.raw = summarize(column(rt, name), column(rc, name));
    if (matched) row.matched = summarize(column(mt, name), column(mc, name));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_balance_table(std::ostream& out, const BalanceTable& table) {
  csv::Writer w(out);
  std::vector<std::string> header = {"region",     "covariate",  "raw_mean_treated", "raw_sd_treated",
                                     "raw_mean_control", "raw_sd_control", "raw_smd"};
  const bool has_matched = table.n_matched_pairs.has_value();
  if (has_matched) {
    for (const char* h : {"matched_mean_treated", "matched_sd_treated", "matched_mean_control",
                          "matched_sd_control", "matched_smd"})
      header.emplace_back(h);
  }
  w.row(header);
  const std::string region(region_code(table.region));
  auto put = [&](const GroupSummary& g) {
    w.field(g.mean_treated).field(g.sd_treated).field(g.mean_control).field(g.sd_control).field(g.smd);
  };
  for (const auto& r : table.rows) {
    w.field(region).field(r.covariate);
    put(r.raw);
    if (has_matched && r.matched) put(*r.matched);
    w.end_row();
  }
  w.field(region).field("n");
  w.field(table.n_treated).field("").field(table.n_control).field("").field("");
  if (has_matched) w.field(*table.n_matched_pairs).field("").field(*table.n_matched_pairs).field("").field("");
  w.end_row();
}

void write_love_plot(std::ostream& out, const BalanceTable& table) {
  csv::Writer w(out);
  w.row({"region", "covariate", "raw_smd", "matched_smd"});
  for (const auto& r : table.rows) {
    w.field(region_code(table.region)).field(r.covariate).field(r.raw.smd);
    if (r.matched)
      w.field(r.matched->smd);
    else
      w.field("");
    w.end_row();
  }
}

CovariateTable::CovariateTable(const Dataset& ds, std::vector<std::string> names) : names_(std::move(names)) {
  columns_.assign(names_.size(), std::vector<double>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    index_.emplace(ds[i].zip_id, i);
    for (std::size_t j = 0; j < names_.size(); ++j) columns_[j][i] = record_value(ds[i], names_[j]);
  }
}

std::size_t CovariateTable::row(const std::string& zip_id) const {
  auto it = index_.find(zip_id);
  if (it == index_.end()) throw Error(ErrorCode::ColumnMismatch, "no covariates for zip " + zip_id);
  return it->second;
}

std::vector<double> matched_smds(const CovariateTable& table, const MatchedSet& set) {
  std::vector<std::size_t> rt, rc;
  for (const auto& p : set.pairs) {
    rt.push_back(table.row(p.treated));
    rc.push_back(table.row(p.control));
  }
  std::vector<double> out;
  std::vector<double> t(rt.size()), c(rc.size());
  for (std::size_t j = 0; j < table.names().size(); ++j) {
    for (std::size_t i = 0; i < rt.size(); ++i) {
      t[i] = table.value(rt[i], j);
      c[i] = table.value(rc[i], j);
    }
    out.push_back(smd(t, c).value);
  }
  return out;
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

Strata quintile_strata(std::span<const PsUnit> units, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "number of strata must be positive");
  const std::size_t n = units.size();
  if (n < static_cast<std::size_t>(k))
    throw Error(ErrorCode::InsufficientUnits, "fewer units than strata");

  std::vector<double> sorted;
  sorted.reserve(n);
  for (const auto& u : units) sorted.push_back(u.ps);
  std::sort(sorted.begin(), sorted.end());

  Strata s;
  s.k = k;
  const std::size_t kk = static_cast<std::size_t>(k);
  for (std::size_t j = 1; j < kk; ++j) {
    const std::size_t rank = (j * n + kk - 1) / kk;  // ceil(j n / k), 1-based
    s.boundaries.push_back(sorted[rank - 1]);
  }
  s.sizes.assign(kk, 0);
  for (const auto& u : units) {
    const auto it = std::lower_bound(s.boundaries.begin(), s.boundaries.end(), u.ps);
    const int stratum = static_cast<int>(it - s.boundaries.begin());
    s.assignment[u.zip_id] = stratum;
    ++s.sizes[static_cast<std::size_t>(stratum)];
  }
  for (std::size_t j = 0; j < kk; ++j) {
    if (s.sizes[j] == 0)
      throw Error(ErrorCode::DegenerateQuantiles,
                  "stratum " + std::to_string(j + 1) + " is empty; propensity scores are too heavily tied");
  }
  return s;
}

}  // namespace expomatch
