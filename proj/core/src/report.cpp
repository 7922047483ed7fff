#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "expomatch/csv.hpp"
#include "expomatch/pipeline.hpp"

namespace expomatch {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_irr(double value) { return fmt::format("{:.2f}", value); }

std::string format_irr_table(const AnalysisReport& report) {
  std::string out = fmt::format("{:<8}{:<12}{:>6}  {:<16}{:>8}\n", "Region", "Mode", "IRR", "95% CI", "Pairs");
  for (const auto& r : report.regions) {
    const std::string region(region_code(r.region));
    const std::string mode(to_string(r.mode));
    if (r.irr) {
      out += fmt::format("{:<8}{:<12}{:>6}  {:<16}{:>8}\n", region, mode, format_irr(r.irr->irr),
                         "(" + format_irr(r.irr->ci_low) + ", " + format_irr(r.irr->ci_high) + ")", r.n_pairs);
    } else {
      out += fmt::format("{:<8}{:<12}{:>6}  {}\n", region, mode, "-", to_string(r.status));
    }
  }
  return out;
}

namespace {

class OutputDir {
 public:
  explicit OutputDir(const std::string& path) : root_(path) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_))
      throw Error(ErrorCode::IoFailure, "cannot create output directory " + path);
  }

  // Buffers in memory, then writes the whole file at once.
  void write(const std::string& name, const std::string& contents) {
    std::ofstream out(root_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + (root_ / name).string());
    out << contents;
    out.close();
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + (root_ / name).string());
    written_.push_back(name);
  }

  std::vector<std::string> files() const {
    auto f = written_;
    std::sort(f.begin(), f.end());
    return f;
  }

 private:
  fs::path root_;
  std::vector<std::string> written_;
};

json irr_json(const IrrEstimate& e) {
  return {{"irr", e.irr}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}, {"log_irr", e.log_irr}, {"log_se", e.log_se}};
}

json model_json(const FittedGlm& m) {
  return {{"family", std::string(to_string(m.family))},
          {"iterations", m.iterations},
          {"converged", m.converged},
          {"deviance", m.deviance},
          {"max_abs_score", m.max_abs_score},
          {"n_obs", m.n_obs}};
}

json region_json(const RegionResult& r) {
  json j;
  j["region"] = std::string(region_code(r.region));
  j["mode"] = std::string(to_string(r.mode));
  j["cutoff"] = r.cutoff;
  j["status"] = std::string(to_string(r.status));
  if (r.error) j["error"] = std::string(to_string(*r.error));
  if (!r.message.empty()) j["message"] = r.message;
  j["counts"] = {{"units", r.n_units},
                 {"high_exposed", r.n_treated},
                 {"control", r.n_control},
                 {"matched_pairs", r.n_pairs},
                 {"unmatched_high_exposed", r.unmatched_treated},
                 {"unmatched_control", r.unmatched_control},
                 {"discarded_high_exposed", r.discarded_treated},
                 {"discarded_control", r.discarded_control},
                 {"outcome_units", r.n_outcome_units}};
  j["caliper"] = r.caliper;
  if (r.irr) j["irr"] = irr_json(*r.irr);
  if (r.crude_irr) j["crude_irr"] = irr_json(*r.crude_irr);
  if (r.mean_influence_treated) j["mean_influence_high_exposed"] = *r.mean_influence_treated;
  if (r.mean_influence_control) j["mean_influence_control"] = *r.mean_influence_control;
  if (r.pm25_smd_raw) j["pm25_smd_raw"] = *r.pm25_smd_raw;
  if (r.pm25_smd_matched) j["pm25_smd_matched"] = *r.pm25_smd_matched;
  if (r.ps_model) j["propensity_model"] = model_json(*r.ps_model);
  if (r.outcome_model) j["outcome_model"] = model_json(*r.outcome_model);
  if (r.balance) {
    j["max_abs_smd_raw"] = r.balance->max_abs_raw_smd();
    if (r.balance->n_matched_pairs) j["max_abs_smd_matched"] = r.balance->max_abs_matched_smd();
  }
  if (r.mean_pair_distance_km) j["mean_pair_distance_km"] = *r.mean_pair_distance_km;
  if (r.daps_weight) {
    j["daps"] = {{"weight", *r.daps_weight}, {"balanced", r.daps_balanced}, {"weights_evaluated", r.daps_diagnostics.size()}};
    if (r.daps_max_abs_smd) j["daps"]["max_abs_smd"] = *r.daps_max_abs_smd;
  }
  if (r.strata) {
    j["strata"] = {{"k", r.strata->k}, {"sizes", r.strata->sizes}, {"boundaries", r.strata->boundaries}};
  }
  j["warnings"] = r.warnings;
  return j;
}

std::string irr_csv(const AnalysisReport& report) {
  std::ostringstream os;
  csv::Writer w(os);
  w.row({"region", "mode", "irr", "ci_low", "ci_high", "n_pairs", "n_units", "status"});
  for (const auto& r : report.regions) {
    w.field(region_code(r.region)).field(to_string(r.mode));
    if (r.irr)
      w.field(r.irr->irr).field(r.irr->ci_low).field(r.irr->ci_high);
    else
      w.field("").field("").field("");
    w.field(r.n_pairs).field(r.n_outcome_units).field(to_string(r.status));
    w.end_row();
  }
  return os.str();
}

std::string models_csv(const AnalysisReport& report) {
  std::ostringstream os;
  csv::Writer w(os);
  w.row({"region", "model", "term", "estimate", "std_error"});
  auto put = [&](Region region, const char* which, const FittedGlm& m) {
    for (std::size_t i = 0; i < m.names.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      w.field(region_code(region)).field(which).field(m.names[i]).field(m.coefficients(k))
          .field(std::sqrt(std::max(0.0, m.covariance(k, k))));
      w.end_row();
    }
  };
  for (const auto& r : report.regions) {
    if (r.ps_model) put(r.region, "propensity", *r.ps_model);
    if (r.outcome_model) put(r.region, "outcome", *r.outcome_model);
  }
  return os.str();
}

std::string ps_csv(const RegionResult& r) {
  std::ostringstream os;
  csv::Writer w(os);
  w.row({"zip", "high_exposed", "ps", "logit_ps", "status"});
  std::map<std::string_view, std::string_view> role;
  if (r.matched) {
    for (const auto& p : r.matched->pairs) {
      role[p.treated] = "matched";
      role[p.control] = "matched";
    }
    for (const auto& id : r.matched->discarded) role[id] = "discarded";
  }
  auto units = r.units;
  std::sort(units.begin(), units.end(), [](const PsUnit& a, const PsUnit& b) { return a.zip_id < b.zip_id; });
  for (const auto& u : units) {
    std::string_view s = "retained";
    if (r.matched) {
      auto it = role.find(u.zip_id);
      s = it == role.end() ? std::string_view("unmatched") : it->second;
    } else if (r.strata && !r.strata->assignment.count(u.zip_id)) {
      s = "discarded";
    }
    w.field(u.zip_id).field(u.treated ? 1 : 0).field(u.ps).field(u.logit_ps).field(s);
    w.end_row();
  }
  return os.str();
}

std::string strata_csv(const RegionResult& r) {
  std::ostringstream os;
  csv::Writer w(os);
  w.row({"zip", "stratum"});
  for (const auto& [zip, s] : r.strata->assignment) {
    w.field(zip).field(s + 1);
    w.end_row();
  }
  return os.str();
}

std::string sweep_csv(const std::vector<SweepPoint>& sweep) {
  std::ostringstream os;
  csv::Writer w(os);
  w.row({"cutoff", "region", "status", "irr", "ci_low", "ci_high", "n_pairs", "n_high_exposed", "n_control",
         "mean_influence_high_exposed", "mean_influence_control", "message"});
  auto opt = [&](const std::optional<double>& v) {
    if (v)
      w.field(*v);
    else
      w.field("");
  };
  for (const auto& p : sweep) {
    for (const auto& r : p.regions) {
      w.field(p.cutoff).field(region_code(r.region)).field(to_string(r.status));
      if (r.irr)
        w.field(r.irr->irr).field(r.irr->ci_low).field(r.irr->ci_high);
      else
        w.field("").field("").field("");
      w.field(r.n_pairs).field(r.n_treated).field(r.n_control);
      opt(r.mean_influence_treated);
      opt(r.mean_influence_control);
      w.field(r.message);
      w.end_row();
    }
  }
  return os.str();
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

}  // namespace

std::vector<std::string> emit_report(const AnalysisReport& report, const std::string& outdir) {
  OutputDir dir(outdir);

  if (!report.regions.empty()) {
    dir.write("irr_table.csv", irr_csv(report));
    dir.write("irr_table.txt", format_irr_table(report));
    dir.write("models.csv", models_csv(report));
  }
  for (const auto& r : report.regions) {
    const std::string tag(region_code(r.region));
    if (r.balance) {
      dir.write("balance_" + tag + ".csv", render([&](std::ostream& os) { write_balance_table(os, *r.balance); }));
      dir.write("love_" + tag + ".csv", render([&](std::ostream& os) { write_love_plot(os, *r.balance); }));
    }
    if (r.matched)
      dir.write("matched_" + tag + ".csv",
                render([&](std::ostream& os) { write_matched_set(os, *r.matched, r.units); }));
    if (!r.units.empty()) dir.write("ps_" + tag + ".csv", ps_csv(r));
    if (!r.daps_diagnostics.empty())
      dir.write("daps_weights_" + tag + ".csv",
                render([&](std::ostream& os) { write_weight_diagnostics(os, r.daps_diagnostics); }));
    if (r.strata) dir.write("strata_" + tag + ".csv", strata_csv(r));
  }
  if (!report.sweep.empty()) dir.write("sweep.csv", sweep_csv(report.sweep));

  json summary;
  summary["version"] = std::string(kVersion);
  summary["mode"] = std::string(to_string(report.config.mode));
  summary["config_hash"] = report.config_hash;
  json cfg = json::object();
  std::istringstream canon(report.config.canonical());
  for (std::string line; std::getline(canon, line);) {
    const auto eq = line.find('=');
    cfg[line.substr(0, eq)] = line.substr(eq + 1);
  }
  summary["config"] = cfg;
  summary["input"] = {{"source", report.input.source},
                      {"sha256", report.input_sha256},
                      {"rows_read", report.input.rows_read},
                      {"accepted", report.input.accepted},
                      {"dropped", report.input.dropped}};
  json regions = json::array();
  for (const auto& r : report.regions) regions.push_back(region_json(r));
  summary["regions"] = regions;
  if (!report.sweep.empty()) {
    json sweep = json::array();
    for (const auto& p : report.sweep) {
      json point = {{"cutoff", p.cutoff}};
      json rs = json::array();
      for (const auto& r : p.regions) rs.push_back(region_json(r));
      point["regions"] = rs;
      sweep.push_back(point);
    }
    summary["sweep"] = sweep;
  }
  summary["flags"] = report.flags;
  auto files = dir.files();
  files.emplace_back("run_summary.json");
  std::sort(files.begin(), files.end());
  summary["files"] = files;
  dir.write("run_summary.json", summary.dump(2) + "\n");
  return dir.files();
}

}  // namespace expomatch
