#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "expomatch/config.hpp"
#include "expomatch/csv.hpp"
#include "expomatch/datamodel.hpp"
#include "expomatch/error.hpp"
#include "expomatch/exposure.hpp"
#include "expomatch/pipeline.hpp"
#include "expomatch/synth.hpp"

namespace expomatch::cli {

namespace {

struct Flags {
  std::string config;
  std::string input;
  std::string grid;
  std::optional<double> cutoff;
  std::string sweep;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> n_per_region;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Configuration file (key = value)");
  cmd->add_option("--input", f.input, "ZIP-level input table (CSV)");
  cmd->add_option("--grid", f.grid, "Optional grid-to-ZIP influence table (CSV)");
  cmd->add_option("--cutoff", f.cutoff, "Exposure cutoff on coal influence");
  cmd->add_option("--out", f.out, "Output directory");
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = load_config(f.config, c);
  if (!f.input.empty()) c.input = f.input;
  if (!f.grid.empty()) c.grid = f.grid;
  if (f.cutoff) c.cutoff = *f.cutoff;
  if (!f.sweep.empty()) c.sweep = SweepRange::parse(f.sweep);
  if (!f.mode.empty()) c.mode = parse_mode(f.mode);
  if (f.seed) {
    c.seed = *f.seed;
    c.synth.seed = *f.seed;
  }
  if (!f.out.empty()) c.out = f.out;
  if (f.n_per_region) c.synth.n_per_region = *f.n_per_region;
  c.validate();
  return c;
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

int analysis(const RunConfig& config, AnalysisMode mode, std::ostream& out) {
  RunConfig c = config;
  c.mode = mode;
  const Dataset ds = load_dataset(c);
  AnalysisReport report = run_analysis(c, ds);
  report.input_sha256 = file_sha256(c.input);
  const auto files = emit_report(report, c.out);
  if (!report.regions.empty()) out << format_irr_table(report);
  for (const auto& p : report.sweep) {
    for (const auto& r : p.regions) {
      out << "cutoff " << csv::format_double(p.cutoff) << "  " << region_code(r.region) << "  ";
      if (r.irr)
        out << format_irr(r.irr->irr) << " (" << format_irr(r.irr->ci_low) << ", " << format_irr(r.irr->ci_high)
            << ")  pairs " << r.n_pairs << '\n';
      else
        out << to_string(r.status) << (r.message.empty() ? "" : ": " + r.message) << '\n';
    }
  }
  for (const auto& flag : report.flags) out << "flag: " << flag << '\n';
  out << "wrote " << files.size() << " files to " << c.out << '\n';

  // A run in which every non-empty region failed has nothing to report.
  std::optional<ErrorCode> first_error;
  bool any_ok = false;
  auto scan = [&](const std::vector<RegionResult>& rs) {
    for (const auto& r : rs) {
      if (r.status == RegionStatus::Ok) any_ok = true;
      if (r.status == RegionStatus::Failed && !first_error) first_error = r.error;
    }
  };
  scan(report.regions);
  for (const auto& p : report.sweep) scan(p.regions);
  if (!any_ok && first_error) {
    switch (category(*first_error)) {
      case ErrorCategory::Config: return kExitConfig;
      case ErrorCategory::Data: return kExitData;
      case ErrorCategory::Numerical: return kExitNumerical;
    }
  }
  return kExitOk;
}

int ingest_check(const RunConfig& c, std::ostream& out) {
  if (c.input.empty()) throw Error(ErrorCode::InvalidConfig, "no input table configured");
  Dataset raw = read_zip_table(c.input, c.schema);
  if (!c.grid.empty()) raw = apply_grid_influence(raw, aggregate_grid(read_grid_table(c.grid)));
  const auto& p = raw.provenance();
  out << "source " << p.source << '\n'
      << "rows_read " << p.rows_read << '\n'
      << "parsed " << p.accepted << '\n'
      << "unparseable " << p.dropped << '\n';
  std::map<std::string, std::size_t> by_rule;
  for (const auto& v : validate(raw)) ++by_rule[v.rule];
  for (const auto& [rule, n] : by_rule) out << "violation " << rule << ' ' << n << '\n';
  const Dataset clean = drop_invalid(raw);
  out << "valid " << clean.size() << '\n';
  for (const auto& [region, part] : split_by_region(clean)) out << "region " << region_code(region) << ' ' << part.size() << '\n';
  for (const auto& w : p.warnings) out << "warning " << w << '\n';
  return kExitOk;
}

int classify_cmd(const RunConfig& c, std::ostream& out) {
  const Dataset ds = load_dataset(c);
  const Classification cls = classify(ds, c.cutoff);
  std::filesystem::create_directories(c.out);
  const std::string path = (std::filesystem::path(c.out) / "classification.csv").string();
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  csv::Writer w(file);
  w.row({"zip", "region", "coal_influence", "high_exposed"});
  std::map<Region, std::pair<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records()[i];
    const auto& a = cls.assignments[i];
    w.field(r.zip_id).field(region_code(r.region)).field(r.coal_influence).field(a.treated() ? 1 : 0);
    w.end_row();
    auto& [hi, lo] = counts[r.region];
    (a.treated() ? hi : lo) += 1;
  }
  if (!file) throw Error(ErrorCode::IoFailure, "write failed for " + path);
  out << "cutoff " << csv::format_double(c.cutoff) << '\n';
  for (const auto& [region, n] : counts)
    out << region_code(region) << " high_exposed " << n.first << " control " << n.second << '\n';
  out << "total high_exposed " << cls.n_high << " control " << cls.n_control << '\n';
  return kExitOk;
}

int synth_cmd(const RunConfig& c, std::ostream& out) {
  SynthParams params = c.synth;
  params.validate();
  const SynthData sd = generate(params);
  std::filesystem::create_directories(c.out);
  const std::filesystem::path dir(c.out);
  auto write = [&](const std::string& name, auto&& fn) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + (dir / name).string());
    fn(f);
    if (!f) throw Error(ErrorCode::IoFailure, "write failed for " + (dir / name).string());
  };
  write("zip_table.csv", [&](std::ostream& os) { write_zip_table(os, sd.data, ColumnSchema{}); });
  write("ground_truth.csv", [&](std::ostream& os) { write_ground_truth(os, sd.truth); });
  write("synth_params.csv", [&](std::ostream& os) { write_synth_params(os, params); });
  out << "generated " << sd.data.size() << " ZIPs (seed " << params.seed << ") in " << c.out << '\n';
  return kExitOk;
}

// Re-renders irr_table.csv from an output directory as the two-decimal table.
int report_cmd(const RunConfig& c, std::ostream& out) {
  const std::string path = (std::filesystem::path(c.out) / "irr_table.csv").string();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path);
  std::string line;
  if (!csv::next_line(in, line)) throw Error(ErrorCode::EmptyDataset, path + " is empty");
  const auto header = csv::split_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"region", "mode", "irr", "ci_low", "ci_high", "n_pairs", "status"})
    if (!col.count(need)) throw Error(ErrorCode::MissingColumn, std::string("irr_table.csv lacks column ") + need);
  AnalysisReport report;
  while (csv::next_line(in, line)) {
    const auto f = csv::split_line(line);
    if (f.size() != header.size()) throw Error(ErrorCode::ColumnMismatch, "ragged row in " + path);
    RegionResult r;
    const auto region = parse_region(f[col["region"]]);
    if (!region) throw Error(ErrorCode::ColumnMismatch, "unknown region " + f[col["region"]]);
    r.region = *region;
    r.mode = parse_mode(f[col["mode"]]);
    r.n_pairs = static_cast<std::size_t>(csv::parse_integer(f[col["n_pairs"]]).value_or(0));
    const auto irr = csv::parse_double(f[col["irr"]]);
    if (irr) {
      IrrEstimate e;
      e.irr = *irr;
      e.ci_low = csv::parse_double(f[col["ci_low"]]).value_or(0.0);
      e.ci_high = csv::parse_double(f[col["ci_high"]]).value_or(0.0);
      r.irr = e;
      r.status = RegionStatus::Ok;
    } else {
      const std::string& s = f[col["status"]];
      r.status = s == "failed" ? RegionStatus::Failed : RegionStatus::Empty;
    }
    report.regions.push_back(std::move(r));
  }
  out << format_irr_table(report);
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Config: return kExitConfig;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Numerical: return kExitNumerical;
  }
  return kExitData;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source-oriented exposure analysis: PS matching, DAPSm and Poisson rate ratios"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Flags f;
  auto* ingest = app.add_subcommand("ingest-check", "Parse and validate an input table");
  auto* cls = app.add_subcommand("classify", "Label ZIPs high-exposed or control at the cutoff");
  auto* match = app.add_subcommand("match", "Propensity-score matching with the primary outcome model");
  auto* daps = app.add_subcommand("daps", "Distance-adjusted propensity-score matching");
  auto* strat = app.add_subcommand("stratify", "Propensity-score quintile stratification");
  auto* analyze = app.add_subcommand("analyze", "Primary or secondary (PM2.5-adjusted) analysis");
  auto* sweep = app.add_subcommand("sweep", "Primary analysis over a range of cutoffs");
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ZIP table with ground truth");
  auto* report = app.add_subcommand("report", "Print the IRR table from an output directory");

  for (auto* cmd : {ingest, cls, match, daps, strat, analyze, sweep}) add_common(cmd, f);
  analyze->add_option("--mode", f.mode, "primary|secondary")->check(CLI::IsMember({"primary", "secondary"}));
  sweep->add_option("--sweep", f.sweep, "Cutoff range LO:HI:STEP");
  synth->add_option("--config", f.config, "Configuration file (synth.* keys)");
  synth->add_option("--seed", f.seed, "Random seed");
  synth->add_option("--n-per-region", f.n_per_region, "ZIPs per region");
  synth->add_option("--out", f.out, "Output directory");
  report->add_option("--config", f.config, "Configuration file");
  report->add_option("--out", f.out, "Output directory of a previous run");
  for (auto* cmd : {ingest, cls, match, daps, strat, analyze, sweep})
    cmd->add_option("--seed", f.seed, "Recorded in the run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const RunConfig c = resolve(f);
    if (ingest->parsed()) return ingest_check(c, out);
    if (cls->parsed()) return classify_cmd(c, out);
    if (match->parsed()) return analysis(c, AnalysisMode::Primary, out);
    if (daps->parsed()) return analysis(c, AnalysisMode::Daps, out);
    if (strat->parsed()) return analysis(c, AnalysisMode::Stratified, out);
    if (analyze->parsed()) {
      const bool secondary = c.mode == AnalysisMode::SecondaryPm25;
      return analysis(c, secondary ? AnalysisMode::SecondaryPm25 : AnalysisMode::Primary, out);
    }
    if (sweep->parsed()) return analysis(c, AnalysisMode::Sweep, out);
    if (synth->parsed()) return synth_cmd(c, out);
    if (report->parsed()) return report_cmd(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace expomatch::cli
