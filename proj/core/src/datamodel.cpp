#include "expomatch/datamodel.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include "expomatch/csv.hpp"
#include "expomatch/error.hpp"

namespace expomatch {

std::string_view region_code(Region region) {
  switch (region) {
    case Region::IndustrialMidwest: return "IMW";
    case Region::Northeast: return "NE";
    case Region::Southeast: return "SE";
  }
  return "?";
}

std::optional<Region> parse_region(std::string_view code) {
  code = csv::trim(code);
  if (code == "IMW") return Region::IndustrialMidwest;
  if (code == "NE") return Region::Northeast;
  if (code == "SE") return Region::Southeast;
  return std::nullopt;
}

bool is_proportion_covariate(std::size_t index) {
  const std::string_view name = kCovariateNames.at(index);
  return name.starts_with("Pct") || name.ends_with("_rate") || name == "smokerate2000";
}

std::optional<std::size_t> covariate_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumCovariates; ++i)
    if (kCovariateNames[i] == name) return i;
  return std::nullopt;
}

bool is_record_field(std::string_view name) {
  return covariate_index(name).has_value() || name == "pm25" || name == "coal_influence" ||
         name == "latitude" || name == "longitude" || name == "person_years" || name == "ihd";
}

double record_value(const ZipRecord& r, std::string_view name) {
  if (auto idx = covariate_index(name)) return r.covariates[*idx];
  if (name == "pm25") return r.pm25;
  if (name == "coal_influence") return r.coal_influence;
  if (name == "latitude") return r.latitude;
  if (name == "longitude") return r.longitude;
  if (name == "person_years") return r.person_years;
  if (name == "ihd") return static_cast<double>(r.ihd_count);
  throw Error(ErrorCode::ColumnMismatch, "unknown record field '" + std::string(name) + "'");
}

Dataset::Dataset(std::vector<ZipRecord> records, Provenance provenance)
    : records_(std::move(records)), provenance_(std::move(provenance)) {
  std::sort(records_.begin(), records_.end(),
            [](const ZipRecord& a, const ZipRecord& b) { return a.zip_id < b.zip_id; });
  auto dup = std::adjacent_find(records_.begin(), records_.end(),
                                [](const ZipRecord& a, const ZipRecord& b) { return a.zip_id == b.zip_id; });
  if (dup != records_.end())
    throw Error(ErrorCode::DuplicateKey, "zip_id '" + dup->zip_id + "' appears more than once");
}

const ZipRecord* Dataset::find(std::string_view zip_id) const {
  auto it = std::lower_bound(records_.begin(), records_.end(), zip_id,
                             [](const ZipRecord& r, std::string_view id) { return r.zip_id < id; });
  if (it == records_.end() || it->zip_id != zip_id) return nullptr;
  return &*it;
}

bool Dataset::operator==(const Dataset& other) const {
  return records_ == other.records_ && provenance_.rows_read == other.provenance_.rows_read &&
         provenance_.accepted == other.provenance_.accepted &&
         provenance_.dropped == other.provenance_.dropped;
}

std::array<std::string, kNumCovariates> ColumnSchema::default_covariate_columns() {
  std::array<std::string, kNumCovariates> names;
  for (std::size_t i = 0; i < kNumCovariates; ++i) names[i] = std::string(kCovariateNames[i]);
  return names;
}

void ColumnSchema::remap(std::string_view logical, std::string header) {
  if (logical == "zip") zip = std::move(header);
  else if (logical == "region") region = std::move(header);
  else if (logical == "coal_influence") coal_influence = std::move(header);
  else if (logical == "pm25") pm25 = std::move(header);
  else if (logical == "ihd") ihd = std::move(header);
  else if (logical == "person_years") person_years = std::move(header);
  else if (logical == "lat" || logical == "latitude") latitude = std::move(header);
  else if (logical == "lon" || logical == "longitude") longitude = std::move(header);
  else if (auto idx = covariate_index(logical)) covariates[*idx] = std::move(header);
  else
    throw Error(ErrorCode::InvalidConfig, "unknown column mapping key '" + std::string(logical) + "'");
}

namespace {

struct ColumnPositions {
  std::size_t zip, region, coal, pm25, ihd, py, lat, lon;
  std::array<std::size_t, kNumCovariates> cov;
};

ColumnPositions resolve(const std::vector<std::string>& header, const ColumnSchema& schema) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos.emplace(std::string(csv::trim(header[i])), i);
  std::vector<std::string> missing;
  auto find = [&](const std::string& name) -> std::size_t {
    auto it = pos.find(name);
    if (it == pos.end()) {
      missing.push_back(name);
      return 0;
    }
    return it->second;
  };
  ColumnPositions p{};
  p.zip = find(schema.zip);
  p.region = find(schema.region);
  p.coal = find(schema.coal_influence);
  p.pm25 = find(schema.pm25);
  p.ihd = find(schema.ihd);
  p.py = find(schema.person_years);
  p.lat = find(schema.latitude);
  p.lon = find(schema.longitude);
  for (std::size_t i = 0; i < kNumCovariates; ++i) p.cov[i] = find(schema.covariates[i]);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::MissingColumn, "required column(s) absent: " + list);
  }
  return p;
}

std::optional<ZipRecord> parse_row(const std::vector<std::string>& f, const ColumnPositions& p,
                                   std::string& reason) {
  auto num = [&](std::size_t i, const char* what) -> std::optional<double> {
    if (i >= f.size()) {
      reason = std::string("missing field ") + what;
      return std::nullopt;
    }
    auto v = csv::parse_double(f[i]);
    if (!v) reason = std::string("unparseable ") + what;
    return v;
  };
  ZipRecord r;
  if (p.zip >= f.size() || csv::trim(f[p.zip]).empty()) {
    reason = "missing zip";
    return std::nullopt;
  }
  r.zip_id = std::string(csv::trim(f[p.zip]));
  auto region = p.region < f.size() ? parse_region(f[p.region]) : std::nullopt;
  if (!region) {
    reason = "unrecognized region";
    return std::nullopt;
  }
  r.region = *region;
  auto coal = num(p.coal, "coal_influence");
  auto pm = num(p.pm25, "pm25");
  auto py = num(p.py, "person_years");
  auto lat = num(p.lat, "lat");
  auto lon = num(p.lon, "lon");
  if (!coal || !pm || !py || !lat || !lon) return std::nullopt;
  auto ihd = p.ihd < f.size() ? csv::parse_integer(f[p.ihd]) : std::nullopt;
  if (!ihd) {
    reason = "unparseable ihd";
    return std::nullopt;
  }
  r.coal_influence = *coal;
  r.pm25 = *pm;
  r.person_years = *py;
  r.latitude = *lat;
  r.longitude = *lon;
  r.ihd_count = *ihd;
  for (std::size_t i = 0; i < kNumCovariates; ++i) {
    auto v = num(p.cov[i], kCovariateNames[i].data());
    if (!v) return std::nullopt;
    r.covariates[i] = *v;
  }
  return r;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

Dataset parse_zip_table(std::istream& in, const ColumnSchema& schema, std::string source_name) {
  std::string line;
  if (!csv::next_line(in, line)) throw Error(ErrorCode::MissingColumn, "no header row in " + source_name);
  const auto header = csv::split_line(line);
  const auto positions = resolve(header, schema);

  Provenance prov;
  prov.source = std::move(source_name);
  std::vector<ZipRecord> records;
  std::size_t line_no = 1;
  while (csv::next_line(in, line)) {
    ++line_no;
    ++prov.rows_read;
    std::string reason;
    auto rec = parse_row(csv::split_line(line), positions, reason);
    if (rec) {
      records.push_back(std::move(*rec));
    } else {
      ++prov.dropped;
      prov.warnings.push_back("row " + std::to_string(line_no) + " dropped: " + reason);
    }
  }
  prov.accepted = records.size();
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "no valid rows in " + prov.source);
  return Dataset(std::move(records), std::move(prov));
}

Dataset read_zip_table(const std::string& path, const ColumnSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  Dataset ds = parse_zip_table(in, schema, path);
  Provenance prov = ds.provenance();
  prov.ingested_at = utc_timestamp();
  return Dataset(ds.records(), std::move(prov));
}

void write_zip_table(std::ostream& out, const Dataset& ds, const ColumnSchema& schema) {
  csv::Writer w(out);
  w.field(schema.zip).field(schema.region).field(schema.coal_influence).field(schema.pm25)
      .field(schema.ihd).field(schema.person_years).field(schema.latitude).field(schema.longitude);
  for (const auto& c : schema.covariates) w.field(c);
  w.end_row();
  for (const auto& r : ds.records()) {
    w.field(r.zip_id).field(region_code(r.region)).field(r.coal_influence).field(r.pm25)
        .field(r.ihd_count).field(r.person_years).field(r.latitude).field(r.longitude);
    for (double v : r.covariates) w.field(v);
    w.end_row();
  }
}

std::vector<Violation> validate(const Dataset& ds) {
  std::vector<Violation> out;
  for (const auto& r : ds.records()) {
    auto flag = [&](std::string rule) { out.push_back({r.zip_id, std::move(rule)}); };
    if (r.ihd_count < 0) flag("ihd_count_nonnegative");
    if (!(r.person_years > 0.0)) flag("person_years_positive");
    if (r.coal_influence < 0.0) flag("coal_influence_nonnegative");
    if (r.pm25 < 0.0) flag("pm25_nonnegative");
    for (std::size_t i = 0; i < kNumCovariates; ++i) {
      if (is_proportion_covariate(i) && (r.covariates[i] < 0.0 || r.covariates[i] > 1.0))
        flag("proportion_range:" + std::string(kCovariateNames[i]));
    }
    if (r.latitude < -90.0 || r.latitude > 90.0) flag("latitude_range");
    if (r.longitude < -180.0 || r.longitude > 180.0) flag("longitude_range");
  }
  return out;
}

Dataset drop_invalid(const Dataset& ds) {
  const auto violations = validate(ds);
  if (violations.empty()) return ds;
  std::set<std::string> bad;
  Provenance prov = ds.provenance();
  for (const auto& v : violations) {
    bad.insert(v.zip_id);
    prov.warnings.push_back("zip " + v.zip_id + " dropped: " + v.rule);
  }
  std::vector<ZipRecord> kept;
  for (const auto& r : ds.records())
    if (!bad.count(r.zip_id)) kept.push_back(r);
  prov.dropped += bad.size();
  prov.accepted = kept.size();
  if (kept.empty()) throw Error(ErrorCode::EmptyDataset, "no valid rows after validation");
  return Dataset(std::move(kept), std::move(prov));
}

std::map<Region, Dataset> split_by_region(const Dataset& ds) {
  std::map<Region, std::vector<ZipRecord>> parts;
  for (Region r : kAllRegions) parts[r];
  for (const auto& rec : ds.records()) parts[rec.region].push_back(rec);
  std::map<Region, Dataset> out;
  for (auto& [region, recs] : parts) {
    Provenance prov;
    prov.source = ds.provenance().source + "#" + std::string(region_code(region));
    prov.ingested_at = ds.provenance().ingested_at;
    prov.rows_read = recs.size();
    prov.accepted = recs.size();
    out.emplace(region, Dataset(std::move(recs), std::move(prov)));
  }
  return out;
}

}  // namespace expomatch
