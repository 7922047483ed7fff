#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace expomatch {

enum class Region { IndustrialMidwest, Northeast, Southeast };

inline constexpr std::array<Region, 3> kAllRegions = {
    Region::IndustrialMidwest, Region::Northeast, Region::Southeast};

// Short codes used in files: "IMW", "NE", "SE".
std::string_view region_code(Region region);
std::optional<Region> parse_region(std::string_view code);

inline constexpr std::size_t kNumCovariates = 17;

// Propensity-model covariates, in the order used throughout the library.
inline constexpr std::array<std::string_view, kNumCovariates> kCovariateNames = {
    "PctOccupied",   "PctUrban",  "logPop",       "MedianHHInc", "PctHighSchool", "PctFemale",
    "PctBlack",      "PctPoor",   "PctMovedIn5",  "MedianHValue", "mean_age",     "Female_rate",
    "White_rate",    "avrelh",    "avtmpf",       "smokerate2000", "PctHisp"};

// Proportion-valued covariates that must lie in [0, 1].
bool is_proportion_covariate(std::size_t index);
std::optional<std::size_t> covariate_index(std::string_view name);

struct ZipRecord {
  std::string zip_id;
  Region region = Region::IndustrialMidwest;
  double coal_influence = 0.0;  // ug/m3
  double pm25 = 0.0;            // ug/m3
  long long ihd_count = 0;
  double person_years = 0.0;
  double latitude = 0.0;
  double longitude = 0.0;
  std::array<double, kNumCovariates> covariates{};

  bool operator==(const ZipRecord&) const = default;
};

// Numeric value of a named field: any covariate, "pm25", "coal_influence",
// "latitude", "longitude", "person_years" or "ihd".
double record_value(const ZipRecord& record, std::string_view name);
bool is_record_field(std::string_view name);

struct Provenance {
  std::string source;
  std::string ingested_at;  // ISO-8601 UTC; empty when not stamped
  std::size_t rows_read = 0;
  std::size_t accepted = 0;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

class Dataset {
 public:
  Dataset() = default;
  // Sorts by zip_id and rejects duplicate ids.
  Dataset(std::vector<ZipRecord> records, Provenance provenance);

  const std::vector<ZipRecord>& records() const noexcept { return records_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const ZipRecord& operator[](std::size_t i) const { return records_[i]; }

  const ZipRecord* find(std::string_view zip_id) const;

  // Records and row counts; the source label and timestamp are not compared.
  bool operator==(const Dataset& other) const;

 private:
  std::vector<ZipRecord> records_;
  Provenance provenance_;
};

// Maps logical fields to CSV header names.
struct ColumnSchema {
  std::string zip = "zip";
  std::string region = "region";
  std::string coal_influence = "coal_influence";
  std::string pm25 = "pm25";
  std::string ihd = "ihd";
  std::string person_years = "person_years";
  std::string latitude = "lat";
  std::string longitude = "lon";
  std::array<std::string, kNumCovariates> covariates = default_covariate_columns();

  static std::array<std::string, kNumCovariates> default_covariate_columns();

  // Applies a logical-name -> header override ("zip", "lat", "PctUrban", ...).
  void remap(std::string_view logical, std::string header);
};

Dataset parse_zip_table(std::istream& csv_source, const ColumnSchema& schema = {},
                        std::string source_name = "<stream>");
Dataset read_zip_table(const std::string& path, const ColumnSchema& schema = {});

void write_zip_table(std::ostream& out, const Dataset& ds, const ColumnSchema& schema = {});

struct Violation {
  std::string zip_id;
  std::string rule;
  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate(const Dataset& ds);

// Removes records with any violation; dropped count and warnings go to provenance.
Dataset drop_invalid(const Dataset& ds);

std::map<Region, Dataset> split_by_region(const Dataset& ds);

}  // namespace expomatch
