#include "expomatch/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "expomatch/csv.hpp"

namespace expomatch {

std::string_view to_string(RegionStatus status) {
  switch (status) {
    case RegionStatus::Ok: return "ok";
    case RegionStatus::Empty: return "empty";
    case RegionStatus::Failed: return "failed";
  }
  return "?";
}

Dataset load_dataset(const RunConfig& config) {
  if (config.input.empty()) throw Error(ErrorCode::InvalidConfig, "no input table configured");
  Dataset ds = read_zip_table(config.input, config.schema);
  if (!config.grid.empty()) {
    const auto cells = read_grid_table(config.grid);
    ds = apply_grid_influence(ds, aggregate_grid(cells));
  }
  return drop_invalid(ds);
}

std::vector<std::string> model_covariates(AnalysisMode mode) {
  std::vector<std::string> names = default_balance_covariates();
  if (mode == AnalysisMode::SecondaryPm25) names.emplace_back("pm25");
  return names;
}

namespace {

DesignMatrix design_for(const std::vector<const ZipRecord*>& rows, const std::vector<std::string>& covariates,
                        const std::vector<std::pair<std::string, std::vector<double>>>& leading) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(leading.size() + covariates.size());
  Eigen::MatrixXd values(n, p);
  std::vector<std::string> names;
  Eigen::Index col = 0;
  for (const auto& [name, column] : leading) {
    names.push_back(name);
    for (Eigen::Index i = 0; i < n; ++i) values(i, col) = column[static_cast<std::size_t>(i)];
    ++col;
  }
  for (const auto& name : covariates) {
    names.push_back(name);
    for (Eigen::Index i = 0; i < n; ++i) values(i, col) = record_value(*rows[static_cast<std::size_t>(i)], name);
    ++col;
  }
  return DesignMatrix::with_intercept(std::move(names), values);
}

struct OutcomeData {
  std::vector<double> counts;
  std::vector<double> offset;
};

OutcomeData outcome_data(const std::vector<const ZipRecord*>& rows) {
  OutcomeData d;
  for (const auto* r : rows) {
    d.counts.push_back(static_cast<double>(r->ihd_count));
    d.offset.push_back(std::log(r->person_years));
  }
  return d;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<std::string> sorted_ids(const std::vector<PsUnit>& units) {
  std::vector<std::string> ids;
  for (const auto& u : units) ids.push_back(u.zip_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void fill_pm25_smd(RegionResult& res, const Dataset& data, const std::vector<ExposureAssignment>& labels) {
  std::vector<double> t, c;
  for (std::size_t i = 0; i < data.size(); ++i) (labels[i].treated() ? t : c).push_back(data[i].pm25);
  try {
    res.pm25_smd_raw = smd(t, c).value;
  } catch (const Error& e) {
    res.warnings.push_back(std::string("raw PM2.5 SMD unavailable: ") + e.what());
  }
  if (!res.matched) return;
  t.clear();
  c.clear();
  for (const auto& p : res.matched->pairs) {
    t.push_back(data.find(p.treated)->pm25);
    c.push_back(data.find(p.control)->pm25);
  }
  try {
    res.pm25_smd_matched = smd(t, c).value;
  } catch (const Error& e) {
    res.warnings.push_back(std::string("matched PM2.5 SMD unavailable: ") + e.what());
  }
}

void run_region(RegionResult& res, const RunConfig& config, const Dataset& data, AnalysisMode mode,
                double cutoff) {
  const auto cls = classify(data, cutoff);
  res.n_treated = cls.n_high;
  res.n_control = cls.n_control;
  {
    std::vector<double> t, c;
    for (const auto& a : cls.assignments) (a.treated() ? t : c).push_back(a.influence);
    if (!t.empty()) res.mean_influence_treated = mean_of(t);
    if (!c.empty()) res.mean_influence_control = mean_of(c);
  }
  if (cls.n_high == 0 || cls.n_control == 0)
    throw Error(ErrorCode::InsufficientUnits, "region needs both high-exposed and control units at this cutoff");

  const auto covariates = model_covariates(mode);
  std::vector<const ZipRecord*> all_rows;
  std::vector<double> exposure;
  for (std::size_t i = 0; i < data.size(); ++i) {
    all_rows.push_back(&data[i]);
    exposure.push_back(cls.assignments[i].treated() ? 1.0 : 0.0);
  }

  // crude contrast, for reference against the adjusted estimate
  try {
    const auto od = outcome_data(all_rows);
    const auto crude_x = design_for(all_rows, {}, {{std::string(kExposureColumn), exposure}});
    auto crude = irr_with_ci(fit_poisson(crude_x, od.counts, od.offset), kExposureColumn, config.confidence_level);
    crude.region = res.region;
    res.crude_irr = crude;
  } catch (const Error& e) {
    res.warnings.push_back(std::string("crude IRR unavailable: ") + e.what());
  }

  const auto ps_x = design_for(all_rows, covariates, {});
  res.ps_model = fit_logistic(ps_x, exposure);
  const Eigen::VectorXd ps = predict_proba(*res.ps_model, ps_x);

  std::size_t clamped = 0;
  res.units.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double p = ps(static_cast<Eigen::Index>(i));
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    if (q != p) ++clamped;
    res.units.push_back(make_unit(data[i].zip_id, res.region, cls.assignments[i].treated(), q, data[i].latitude,
                                  data[i].longitude));
  }
  if (clamped > 0)
    res.warnings.push_back(std::to_string(clamped) + " propensity score(s) clamped to [1e-12, 1-1e-12]");

  const auto trim = trim_support(res.units);
  for (const auto& u : trim.discarded) (u.treated ? res.discarded_treated : res.discarded_control)++;

  std::vector<const ZipRecord*> outcome_rows;
  std::vector<double> outcome_exposure;
  std::vector<std::pair<std::string, std::vector<double>>> leading;

  if (mode == AnalysisMode::Stratified) {
    res.strata = quintile_strata(trim.kept, config.strata);
    std::vector<std::vector<double>> dummies(static_cast<std::size_t>(config.strata > 1 ? config.strata - 1 : 0));
    for (const auto& u : trim.kept) {
      outcome_rows.push_back(data.find(u.zip_id));
      outcome_exposure.push_back(u.treated ? 1.0 : 0.0);
      const int s = res.strata->assignment.at(u.zip_id);
      for (std::size_t j = 0; j < dummies.size(); ++j) dummies[j].push_back(s == static_cast<int>(j) + 1 ? 1.0 : 0.0);
    }
    leading.emplace_back(std::string(kExposureColumn), outcome_exposure);
    for (std::size_t j = 0; j < dummies.size(); ++j)
      leading.emplace_back("stratum_" + std::to_string(j + 2), std::move(dummies[j]));
  } else {
    MatchedSet matched;
    if (mode == AnalysisMode::Daps) {
      auto balance_names = covariates;
      if (config.daps_balance_coordinates) {
        balance_names.emplace_back("latitude");
        balance_names.emplace_back("longitude");
      }
      const CovariateTable table(data, balance_names);
      auto sel = select_weight(trim.kept, config.daps_config(), table, config.daps_full_grid);
      res.caliper = sel.caliper;
      res.daps_weight = sel.weight;
      res.daps_balanced = sel.balanced;
      res.daps_max_abs_smd = sel.max_abs_smd;
      res.daps_diagnostics = std::move(sel.evaluated);
      if (sel.degenerate_geometry)
        res.warnings.push_back(std::string(to_string(ErrorCode::DegenerateGeometry)) +
                               ": all units share one location; distance term is zero");
      if (!sel.balanced)
        res.warnings.push_back("NotBalanced: no DAPS weight met the SMD threshold; using the weight minimizing max |SMD|");
      matched = std::move(sel.matched);
    } else {
      res.caliper = compute_caliper(trim.kept, config.caliper_factor);
      matched = nn_match(trim.kept, res.caliper);
    }
    matched.discarded = sorted_ids(trim.discarded);
    res.mean_pair_distance_km = mean_pair_distance_km(res.units, matched);
    for (const auto& p : matched.pairs) {
      outcome_rows.push_back(data.find(p.treated));
      outcome_exposure.push_back(1.0);
      outcome_rows.push_back(data.find(p.control));
      outcome_exposure.push_back(0.0);
    }
    res.n_pairs = matched.pairs.size();
    res.unmatched_treated = matched.unmatched_treated.size();
    res.unmatched_control = matched.unmatched_control.size();
    res.matched = std::move(matched);
    leading.emplace_back(std::string(kExposureColumn), outcome_exposure);
  }

  res.balance = balance_table(data, cls.assignments, res.matched ? &*res.matched : nullptr, covariates);
  fill_pm25_smd(res, data, cls.assignments);

  res.n_outcome_units = outcome_rows.size();
  const auto od = outcome_data(outcome_rows);
  const auto outcome_x = design_for(outcome_rows, covariates, leading);
  res.outcome_model = fit_poisson(outcome_x, od.counts, od.offset);
  auto irr = irr_with_ci(*res.outcome_model, kExposureColumn, config.confidence_level);
  irr.region = res.region;
  irr.n_pairs = res.n_pairs;
  res.irr = irr;
}

AnalysisReport make_report(const RunConfig& config, const Dataset& ds, AnalysisMode mode) {
  AnalysisReport report;
  report.config = config;
  report.config.mode = mode;
  report.config_hash = report.config.hash();
  report.input = ds.provenance();
  return report;
}

void collect_flags(AnalysisReport& report, const std::vector<RegionResult>& regions, const std::string& prefix) {
  for (const auto& r : regions) {
    const std::string tag = prefix + std::string(region_code(r.region)) + ": ";
    if (r.status == RegionStatus::Failed) report.flags.push_back(tag + r.message);
    for (const auto& w : r.warnings) report.flags.push_back(tag + w);
  }
}

AnalysisReport run_mode(const RunConfig& config, const Dataset& ds, AnalysisMode mode) {
  config.validate();
  AnalysisReport report = make_report(config, ds, mode);
  const auto parts = split_by_region(ds);
  for (Region region : kAllRegions)
    report.regions.push_back(analyze_region(config, parts.at(region), region, mode, config.cutoff));
  collect_flags(report, report.regions, "");
  return report;
}

}  // namespace

RegionResult analyze_region(const RunConfig& config, const Dataset& region_data, Region region,
                            AnalysisMode mode, double cutoff) {
  RegionResult res;
  res.region = region;
  res.mode = mode;
  res.cutoff = cutoff;
  res.n_units = region_data.size();
  for (const auto& r : region_data.records())
    if (r.region != region) throw Error(ErrorCode::MixedRegions, "region dataset holds other regions");
  if (region_data.empty()) {
    res.status = RegionStatus::Empty;
    return res;
  }
  try {
    run_region(res, config, region_data, mode, cutoff);
    res.status = RegionStatus::Ok;
  } catch (const Error& e) {
    res.status = RegionStatus::Failed;
    res.error = e.code();
    res.message = e.what();
  }
  return res;
}

AnalysisReport run_primary(const RunConfig& config, const Dataset& ds) {
  return run_mode(config, ds, AnalysisMode::Primary);
}

AnalysisReport run_secondary(const RunConfig& config, const Dataset& ds) {
  return run_mode(config, ds, AnalysisMode::SecondaryPm25);
}

AnalysisReport run_stratified(const RunConfig& config, const Dataset& ds) {
  return run_mode(config, ds, AnalysisMode::Stratified);
}

AnalysisReport run_daps(const RunConfig& config, const Dataset& ds) {
  return run_mode(config, ds, AnalysisMode::Daps);
}

std::vector<SweepPoint> run_sweep(const RunConfig& config, const Dataset& ds) {
  config.validate();
  const auto parts = split_by_region(ds);
  std::vector<SweepPoint> points;
  for (double cutoff : config.sweep.cutoffs()) {
    SweepPoint point;
    point.cutoff = cutoff;
    for (Region region : kAllRegions) {
      RegionResult r = analyze_region(config, parts.at(region), region, AnalysisMode::Primary, cutoff);
      // keep the summary; unit-level detail is not reported per cutoff
      r.units.clear();
      r.units.shrink_to_fit();
      r.matched.reset();
      r.balance.reset();
      point.regions.push_back(std::move(r));
    }
    points.push_back(std::move(point));
  }
  return points;
}

AnalysisReport run_analysis(const RunConfig& config, const Dataset& ds) {
  switch (config.mode) {
    case AnalysisMode::Primary: return run_primary(config, ds);
    case AnalysisMode::SecondaryPm25: return run_secondary(config, ds);
    case AnalysisMode::Stratified: return run_stratified(config, ds);
    case AnalysisMode::Daps: return run_daps(config, ds);
    case AnalysisMode::Sweep: {
      AnalysisReport report = make_report(config, ds, AnalysisMode::Sweep);
      report.sweep = run_sweep(config, ds);
      for (const auto& p : report.sweep)
        collect_flags(report, p.regions, "cutoff " + csv::format_double(p.cutoff) + " ");
      return report;
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unhandled analysis mode");
}

}  // namespace expomatch
