#include "expomatch/config.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include <openssl/evp.h>

#include "expomatch/csv.hpp"
#include "expomatch/error.hpp"

namespace expomatch {

std::string_view to_string(AnalysisMode mode) {
  switch (mode) {
    case AnalysisMode::Primary: return "primary";
    case AnalysisMode::SecondaryPm25: return "secondary";
    case AnalysisMode::Stratified: return "stratified";
    case AnalysisMode::Daps: return "daps";
    case AnalysisMode::Sweep: return "sweep";
  }
  return "?";
}

AnalysisMode parse_mode(std::string_view text) {
  text = csv::trim(text);
  if (text == "primary") return AnalysisMode::Primary;
  if (text == "secondary" || text == "secondary_pm25") return AnalysisMode::SecondaryPm25;
  if (text == "stratified") return AnalysisMode::Stratified;
  if (text == "daps") return AnalysisMode::Daps;
  if (text == "sweep") return AnalysisMode::Sweep;
  throw Error(ErrorCode::InvalidConfig, "unknown analysis mode '" + std::string(text) + "'");
}

std::vector<double> SweepRange::cutoffs() const {
  if (!(lo < hi) || !(step > 0.0)) throw Error(ErrorCode::InvalidConfig, "sweep needs lo < hi and step > 0");
  std::vector<double> out;
  const auto n = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
  for (long long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

SweepRange SweepRange::parse(std::string_view text) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto colon = text.find(':', start);
    const auto piece = text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start);
    auto v = csv::parse_double(piece);
    if (!v) throw Error(ErrorCode::InvalidConfig, "sweep must be LO:HI:STEP, got '" + std::string(text) + "'");
    parts.push_back(*v);
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts.size() != 3) throw Error(ErrorCode::InvalidConfig, "sweep must be LO:HI:STEP");
  SweepRange r{parts[0], parts[1], parts[2]};
  r.cutoffs();  // validates
  return r;
}

void RunConfig::validate() const {
  if (!(cutoff > 0.0)) throw Error(ErrorCode::InvalidConfig, "cutoff must be positive");
  sweep.cutoffs();
  if (!(caliper_factor > 0.0)) throw Error(ErrorCode::InvalidConfig, "caliper factor must be positive");
  if (!(confidence_level > 0.0 && confidence_level < 1.0))
    throw Error(ErrorCode::InvalidConfig, "confidence level must be in (0,1)");
  if (strata < 1) throw Error(ErrorCode::InvalidConfig, "strata must be at least 1");
  daps_config().validate();
  synth.validate();
}

DapsConfig RunConfig::daps_config() const {
  DapsConfig c;
  c.weight_grid = DapsConfig::default_weight_grid(daps_grid_step);
  c.smd_threshold = daps_smd_threshold;
  c.caliper_factor = caliper_factor;
  return c;
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  const auto num = [](double v) { return csv::format_double(v); };
  kv["input"] = input;
  kv["grid"] = grid;
  kv["mode"] = std::string(to_string(mode));
  kv["cutoff"] = num(cutoff);
  kv["sweep.lo"] = num(sweep.lo);
  kv["sweep.hi"] = num(sweep.hi);
  kv["sweep.step"] = num(sweep.step);
  kv["caliper_factor"] = num(caliper_factor);
  kv["confidence_level"] = num(confidence_level);
  kv["strata"] = std::to_string(strata);
  kv["daps.grid_step"] = num(daps_grid_step);
  kv["daps.smd_threshold"] = num(daps_smd_threshold);
  kv["daps.balance_coordinates"] = daps_balance_coordinates ? "true" : "false";
  kv["daps.full_grid"] = daps_full_grid ? "true" : "false";
  kv["seed"] = std::to_string(seed);
  for (const auto& [k, v] : column_overrides) kv["columns." + k] = v;
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

namespace {

double to_number(std::string_view key, std::string_view value) {
  auto v = csv::parse_double(value);
  if (!v) throw Error(ErrorCode::InvalidConfig, "setting '" + std::string(key) + "' needs a number");
  return *v;
}

long long to_integer(std::string_view key, std::string_view value) {
  auto v = csv::parse_integer(value);
  if (!v) throw Error(ErrorCode::InvalidConfig, "setting '" + std::string(key) + "' needs an integer");
  return *v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw Error(ErrorCode::InvalidConfig, "setting '" + std::string(key) + "' needs true or false");
}

}  // namespace

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  value = csv::trim(value);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
  const std::string v(value);

  if (key == "input") c.input = v;
  else if (key == "grid") c.grid = v;
  else if (key == "mode") c.mode = parse_mode(v);
  else if (key == "cutoff") c.cutoff = to_number(key, v);
  else if (key == "sweep") c.sweep = SweepRange::parse(v);
  else if (key == "sweep.lo") c.sweep.lo = to_number(key, v);
  else if (key == "sweep.hi") c.sweep.hi = to_number(key, v);
  else if (key == "sweep.step") c.sweep.step = to_number(key, v);
  else if (key == "caliper_factor") c.caliper_factor = to_number(key, v);
  else if (key == "confidence_level") c.confidence_level = to_number(key, v);
  else if (key == "strata") c.strata = static_cast<int>(to_integer(key, v));
  else if (key == "daps.grid_step") c.daps_grid_step = to_number(key, v);
  else if (key == "daps.smd_threshold") c.daps_smd_threshold = to_number(key, v);
  else if (key == "daps.balance_coordinates") c.daps_balance_coordinates = to_bool(key, v);
  else if (key == "daps.full_grid") c.daps_full_grid = to_bool(key, v);
  else if (key == "out") c.out = v;
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(key, v));
  else if (key.starts_with("columns.")) {
    const std::string logical(key.substr(8));
    c.schema.remap(logical, v);
    c.column_overrides[logical] = v;
  } else if (key == "synth.n_per_region") c.synth.n_per_region = static_cast<int>(to_integer(key, v));
  else if (key == "synth.true_log_irr") c.synth.true_log_irr = to_number(key, v);
  else if (key == "synth.true_irr") c.synth.true_log_irr = std::log(to_number(key, v));
  else if (key == "synth.confounding_strength") c.synth.confounding_strength = to_number(key, v);
  else if (key == "synth.spatial_confounder_scale") c.synth.spatial_confounder_scale = to_number(key, v);
  else if (key == "synth.baseline_rate") c.synth.baseline_rate = to_number(key, v);
  else if (key == "synth.person_years_lo") c.synth.person_years_lo = to_number(key, v);
  else if (key == "synth.person_years_hi") c.synth.person_years_hi = to_number(key, v);
  else if (key == "synth.cutoff") c.synth.cutoff = to_number(key, v);
  else if (key == "synth.pm25_shift") c.synth.pm25_shift = to_number(key, v);
  else if (key == "synth.pm25_effect") c.synth.pm25_effect = to_number(key, v);
  else
    throw Error(ErrorCode::InvalidConfig, "unknown setting '" + std::string(key) + "'");
}

RunConfig parse_config(std::istream& in, RunConfig c) {
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    // '#' starts a comment unless it sits inside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '"') quoted = !quoted;
      if (text[i] == '#' && !quoted) {
        text = text.substr(0, i);
        break;
      }
    }
    text = csv::trim(text);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']')
        throw Error(ErrorCode::InvalidConfig, "malformed section header on line " + std::to_string(line_no));
      section = std::string(csv::trim(text.substr(1, text.size() - 2)));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::InvalidConfig, "expected key = value on line " + std::to_string(line_no));
    const std::string key(csv::trim(text.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    apply_setting(c, full, text.substr(eq + 1));
  }
  return c;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config " + path);
  return parse_config(in, std::move(base));
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoFailure, "SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace expomatch
