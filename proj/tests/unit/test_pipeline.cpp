#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "expomatch/csv.hpp"
#include "expomatch/pipeline.hpp"
#include "expomatch/synth.hpp"
#include "support/oracles.hpp"

using namespace expomatch;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("expomatch_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (csv::next_line(in, line)) {
    std::vector<std::string> row;
    for (auto f : csv::split_line(line)) row.emplace_back(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

Dataset synth(int n, std::uint64_t seed, SynthParams p = {}) {
  p.n_per_region = n;
  p.seed = seed;
  return generate(p).data;
}

const RegionResult& region_of(const AnalysisReport& r, Region region) {
  for (const auto& x : r.regions)
    if (x.region == region) return x;
  throw std::runtime_error("region missing");
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("primary run writes every declared file and reruns byte-identically") {
    const Dataset ds = synth(600, 7);
    RunConfig cfg;
    const auto report = run_primary(cfg, ds);
    REQUIRE(report.regions.size() == 3);
    for (const auto& r : report.regions) {
      CHECK(r.status == RegionStatus::Ok);
      CHECK(r.irr.has_value());
      CHECK(r.n_pairs > 0);
      CHECK(r.n_pairs + r.unmatched_treated + r.discarded_treated == r.n_treated);
      CHECK(r.n_outcome_units == 2 * r.n_pairs);
    }

    const auto a = scratch("a"), b = scratch("b");
    const auto files = emit_report(report, a.string());
    emit_report(run_primary(cfg, ds), b.string());
    for (const char* f : {"irr_table.csv", "irr_table.txt", "models.csv", "run_summary.json", "balance_NE.csv",
                          "love_SE.csv", "matched_IMW.csv", "ps_NE.csv"})
      CHECK(std::find(files.begin(), files.end(), f) != files.end());
    CHECK(std::is_sorted(files.begin(), files.end()));
    for (const auto& f : files) {
      CAPTURE(f);
      CHECK(fs::exists(a / f));
      CHECK(slurp(a / f) == slurp(b / f));
    }
    std::size_t on_disk = 0;
    for (const auto& e : fs::directory_iterator(a)) on_disk += e.is_regular_file();
    CHECK(on_disk == files.size());

    const auto table = read_csv(a / "irr_table.csv");
    REQUIRE(table.size() == 4);
    CHECK(table[0] == std::vector<std::string>{"region", "mode", "irr", "ci_low", "ci_high", "n_pairs", "n_units",
                                               "status"});
    CHECK(table[1][0] == "IMW");
    CHECK(table[2][0] == "NE");
    CHECK(table[3][0] == "SE");
  }

  TEST_CASE("IRR rendering keeps full precision in CSV and two decimals in text") {
    CHECK(format_irr(1.0774) == "1.08");
    CHECK(format_irr(0.995) == "0.99");  // binary value sits just below the tie
    CHECK(format_irr(1.0) == "1.00");
    AnalysisReport rep;
    RegionResult r;
    r.region = Region::Northeast;
    r.status = RegionStatus::Ok;
    r.irr = IrrEstimate{1.0774, 1.01, 1.15, std::log(1.0774), 0.03};
    r.n_pairs = 12;
    rep.regions.push_back(r);
    const auto dir = scratch("fmt");
    emit_report(rep, dir.string());
    CHECK(slurp(dir / "irr_table.txt").find("1.08") != std::string::npos);
    CHECK(slurp(dir / "irr_table.txt").find("(1.01, 1.15)") != std::string::npos);
    const auto table = read_csv(dir / "irr_table.csv");
    CHECK(table[1][2] == "1.0774");
  }

  TEST_CASE("reported IRR agrees with the exposure coefficient in models.csv") {
    const Dataset ds = synth(500, 11);
    const auto report = run_primary(RunConfig{}, ds);
    const auto dir = scratch("models");
    emit_report(report, dir.string());
    const auto irr = read_csv(dir / "irr_table.csv");
    const auto models = read_csv(dir / "models.csv");
    int checked = 0;
    for (std::size_t i = 1; i < irr.size(); ++i) {
      for (const auto& m : models) {
        if (m[0] == irr[i][0] && m[1] == "outcome" && m[2] == "high_exposed") {
          const double beta = *csv::parse_double(m[3]);
          CHECK(std::exp(beta) == doctest::Approx(*csv::parse_double(irr[i][2])).epsilon(1e-12));
          ++checked;
        }
      }
    }
    CHECK(checked == 3);
    for (const auto& r : report.regions)
      CHECK(r.irr->irr == doctest::Approx(std::exp(r.outcome_model->coefficient("high_exposed"))).epsilon(1e-14));
  }

  TEST_CASE("regions are analyzed independently") {
    const Dataset ds = synth(500, 5);
    std::vector<ZipRecord> kept;
    for (const auto& r : ds.records())
      if (r.region != Region::Northeast) kept.push_back(r);
    const Dataset without_ne(kept, ds.provenance());
    const auto full = run_primary(RunConfig{}, ds);
    const auto part = run_primary(RunConfig{}, without_ne);
    CHECK(region_of(part, Region::Northeast).status == RegionStatus::Empty);
    for (Region g : {Region::IndustrialMidwest, Region::Southeast}) {
      const auto& x = region_of(full, g);
      const auto& y = region_of(part, g);
      CHECK(x.irr->irr == y.irr->irr);
      CHECK(x.matched->pairs == y.matched->pairs);
    }
    const auto dir = scratch("noNE");
    const auto files = emit_report(part, dir.string());
    CHECK(std::find(files.begin(), files.end(), "matched_NE.csv") == files.end());
    CHECK(read_csv(dir / "irr_table.csv").size() == 4);
  }

  TEST_CASE("a single-cutoff sweep reproduces the primary analysis") {
    const Dataset ds = synth(400, 9);
    RunConfig cfg;
    cfg.sweep = SweepRange::parse("4.0:4.1:0.5");
    const auto points = run_sweep(cfg, ds);
    REQUIRE(points.size() == 1);
    const auto primary = run_primary(cfg, ds);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(points[0].regions[i].irr->irr == primary.regions[i].irr->irr);
      CHECK(points[0].regions[i].n_pairs == primary.regions[i].n_pairs);
    }
  }

  TEST_CASE("sweep groups are nested and group means move with the cutoff") {
    const Dataset ds = synth(400, 13);
    RunConfig cfg;
    cfg.mode = AnalysisMode::Sweep;
    const auto report = run_analysis(cfg, ds);
    REQUIRE(report.sweep.size() == 9);
    const auto parts = split_by_region(ds);
    for (std::size_t g = 0; g < 3; ++g) {
      for (std::size_t k = 1; k < report.sweep.size(); ++k) {
        const auto& lo = report.sweep[k - 1].regions[g];
        const auto& hi = report.sweep[k].regions[g];
        CHECK(hi.n_treated <= lo.n_treated);
        CHECK(hi.n_treated + hi.n_control == lo.n_treated + lo.n_control);
        if (hi.mean_influence_treated && lo.mean_influence_treated)
          CHECK(*hi.mean_influence_treated >= *lo.mean_influence_treated);
        if (hi.mean_influence_control && lo.mean_influence_control)
          CHECK(*hi.mean_influence_control >= *lo.mean_influence_control);
        // high-exposed at the higher cutoff are high-exposed at the lower one
        const auto& data = parts.at(kAllRegions[g]);
        const auto a = classify(data, report.sweep[k - 1].cutoff);
        const auto b = classify(data, report.sweep[k].cutoff);
        for (std::size_t i = 0; i < data.size(); ++i)
          if (b.assignments[i].treated()) CHECK(a.assignments[i].treated());
      }
    }
    const auto dir = scratch("sweep");
    emit_report(report, dir.string());
    const auto rows = read_csv(dir / "sweep.csv");
    CHECK(rows.size() == 1 + 9 * 3);
    CHECK(rows[0][0] == "cutoff");
    CHECK(rows[1][0] == "3");
  }

  TEST_CASE("a region without contrast fails cleanly") {
    std::vector<ZipRecord> recs;
    for (int i = 0; i < 40; ++i) recs.push_back(oracle::record("z" + std::to_string(100 + i), Region::Northeast, 1.0));
    const Dataset ds(recs, {});
    const auto report = run_primary(RunConfig{}, ds);
    const auto& ne = region_of(report, Region::Northeast);
    CHECK(ne.status == RegionStatus::Failed);
    REQUIRE(ne.error.has_value());
    CHECK(*ne.error == ErrorCode::InsufficientUnits);
    CHECK_FALSE(ne.irr.has_value());
    CHECK(region_of(report, Region::Southeast).status == RegionStatus::Empty);
    CHECK_FALSE(report.flags.empty());
    const auto dir = scratch("fail");
    CHECK_NOTHROW(emit_report(report, dir.string()));
    const auto table = read_csv(dir / "irr_table.csv");
    CHECK(table[2][2].empty());
    CHECK(table[2][7] == "failed");
  }

  TEST_CASE("one stratum equals a direct adjusted Poisson on the kept units") {
    const Dataset ds = synth(500, 21);
    RunConfig cfg;
    cfg.strata = 1;
    const auto report = run_stratified(cfg, ds);
    const auto parts = split_by_region(ds);
    for (const auto& r : report.regions) {
      REQUIRE(r.status == RegionStatus::Ok);
      REQUIRE(r.strata.has_value());
      CHECK(r.strata->sizes.size() == 1);
      const auto& data = parts.at(r.region);
      const auto names = model_covariates(AnalysisMode::Primary);
      std::vector<const ZipRecord*> rows;
      for (const auto& rec : data.records())
        if (r.strata->assignment.count(rec.zip_id)) rows.push_back(&rec);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size() + 1));
      std::vector<double> y, off;
      std::vector<std::string> cols{"e"};
      cols.insert(cols.end(), names.begin(), names.end());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        x(ii, 0) = rows[i]->coal_influence >= cfg.cutoff ? 1.0 : 0.0;
        for (std::size_t j = 0; j < names.size(); ++j)
          x(ii, static_cast<Eigen::Index>(j + 1)) = record_value(*rows[i], names[j]);
        y.push_back(static_cast<double>(rows[i]->ihd_count));
        off.push_back(std::log(rows[i]->person_years));
      }
      const auto direct = fit_poisson(DesignMatrix::with_intercept(cols, x), y, off);
      CHECK(r.irr->log_irr == doctest::Approx(direct.coefficient("e")).epsilon(1e-9));
    }
  }

  TEST_CASE("stratified output files") {
    const Dataset ds = synth(400, 23);
    const auto report = run_stratified(RunConfig{}, ds);
    const auto dir = scratch("strata");
    const auto files = emit_report(report, dir.string());
    CHECK(std::find(files.begin(), files.end(), "strata_NE.csv") != files.end());
    const auto rows = read_csv(dir / "strata_NE.csv");
    const auto& ne = region_of(report, Region::Northeast);
    CHECK(rows.size() == ne.strata->assignment.size() + 1);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const int s = std::stoi(rows[i][1]);
      CHECK(s >= 1);
      CHECK(s <= 5);
    }
  }

  TEST_CASE("stratified and matched estimates agree on well-overlapping data") {
    const Dataset ds = synth(2000, 31);
    const auto m = run_primary(RunConfig{}, ds);
    const auto s = run_stratified(RunConfig{}, ds);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(std::abs(m.regions[i].irr->log_irr - s.regions[i].irr->log_irr) < 0.1);
  }

  TEST_CASE("without confounding, matched SMDs are small and intervals cover the truth") {
    SynthParams p;
    p.confounding_strength = 0.0;
    p.true_log_irr = std::log(1.08);
    int covered = 0, total = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto report = run_primary(RunConfig{}, synth(800, seed, p));
      for (const auto& r : report.regions) {
        REQUIRE(r.status == RegionStatus::Ok);
        CHECK(r.balance->max_abs_matched_smd() < 0.25);
        covered += r.irr->ci_low <= 1.08 && 1.08 <= r.irr->ci_high;
        ++total;
      }
    }
    CHECK(covered >= total * 8 / 10);
  }

  TEST_CASE("secondary matches primary when PM2.5 is unrelated to exposure") {
    double diff = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Dataset ds = synth(1500, 100 + seed);
      const auto a = run_primary(RunConfig{}, ds);
      const auto b = run_secondary(RunConfig{}, ds);
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(b.regions[i].status == RegionStatus::Ok);
        CHECK(b.regions[i].outcome_model->index_of("pm25").has_value());
        diff += b.regions[i].irr->log_irr - a.regions[i].irr->log_irr;
      }
    }
    CHECK(std::abs(diff / 15.0) < 0.02);
  }

  TEST_CASE("DAPS keeps the PS match when PS matching already balances") {
    const Dataset ds = synth(800, 41);
    const auto d = run_daps(RunConfig{}, ds);
    const auto m = run_primary(RunConfig{}, ds);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& r = d.regions[i];
      REQUIRE(r.status == RegionStatus::Ok);
      REQUIRE(r.daps_weight.has_value());
      if (*r.daps_weight == 1.0) {
        CHECK(r.matched->pairs == m.regions[i].matched->pairs);
        CHECK(r.irr->irr == m.regions[i].irr->irr);
      }
    }
    int at_one = 0;
    for (const auto& r : d.regions) at_one += *r.daps_weight == 1.0;
    CHECK(at_one >= 2);
  }

  TEST_CASE("output directory that is a file is an IO failure") {
    const auto p = scratch("blocker");
    { std::ofstream(p) << "x"; }
    AnalysisReport rep;
    try {
      emit_report(rep, p.string());
      FAIL("expected IoFailure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IoFailure);
    }
    fs::remove(p);
  }

  TEST_CASE("load_dataset drops invalid rows and records provenance") {
    const auto dir = scratch("load");
    fs::create_directories(dir);
    const Dataset ds = synth(50, 3);
    {
      std::ofstream out(dir / "zips.csv", std::ios::binary);
      write_zip_table(out, ds);
    }
    RunConfig cfg;
    cfg.input = (dir / "zips.csv").string();
    const Dataset loaded = load_dataset(cfg);
    CHECK(loaded.size() == ds.size());
    CHECK(loaded.records() == ds.records());
    cfg.input.clear();
    CHECK_THROWS_AS(load_dataset(cfg), Error);
  }
}
