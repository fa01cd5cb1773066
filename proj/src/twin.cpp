#include "ventlab/twin.hpp"

#include <cmath>
#include <string>

#include "ventlab/error.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {
namespace {

void require_in(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi))
    throw ParameterError(std::string(what) + " = " + std::to_string(v) + " outside [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

void require_positive(double v, const char* what) {
  if (!(v > 0)) throw ParameterError(std::string(what) + " must be positive");
}

void check_range(const Range& r, const char* what, double lo = -INFINITY, double hi = INFINITY) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi)
    throw ConfigError(std::string("invalid range for ") + what);
  if (r.lo < lo || r.hi > hi)
    throw ConfigError(std::string("range for ") + what + " leaves [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  if (r.log_uniform && !(r.lo > 0))
    throw ConfigError(std::string("log-uniform range for ") + what + " must be positive");
}

double draw(const Range& r, Rng& rng) {
  const double u = uniform01(rng);
  if (r.log_uniform) {
    const double a = std::log(r.lo);
    const double b = std::log(r.hi);
    return std::exp(a + u * (b - a));
  }
  return r.lo + u * (r.hi - r.lo);
}

Range widen(const Range& r, double f, double floor, double ceil) {
  Range out = r;
  if (r.log_uniform) {
    const double a = std::log(r.lo);
    const double b = std::log(r.hi);
    out.lo = r.lo * std::exp(-f * (b - a));
    out.hi = r.hi * std::exp(f * (b - a));
  } else {
    out.lo = r.lo - f * (r.hi - r.lo);
    out.hi = r.hi + f * (r.hi - r.lo);
  }
  out.lo = std::max(out.lo, floor);
  out.hi = std::min(out.hi, ceil);
  return out;
}

}  // namespace

void validate(const TwinParams& p) {
  require_in(p.compliance_mL_per_cmH2O, 15, 90, "compliance");
  require_in(p.resistance_cmH2O_s_per_L, 5, 30, "resistance");
  require_in(p.base_shunt_fraction, 0.02, 0.45, "base shunt fraction");
  require_in(p.deadspace_mL, 100, 250, "deadspace");
  require_positive(p.vo2_L_per_min, "VO2");
  require_positive(p.vco2_L_per_min, "VCO2");
  require_in(p.respiratory_quotient(), 0.7, 1.0, "respiratory quotient");
  require_positive(p.hemoglobin_g_per_dL, "hemoglobin");
  require_positive(p.cardiac_output_L_per_min, "cardiac output");
  require_positive(p.weight_kg, "weight");
  require_positive(p.age_years, "age");
  for (double sd : p.noise_std)
    if (!(sd >= 0)) throw ParameterError("noise std must be non-negative");
}

void validate(const ParamRanges& r) {
  check_range(r.compliance, "compliance", 15, 90);
  check_range(r.resistance, "resistance", 5, 30);
  check_range(r.shunt, "shunt", 0.02, 0.45);
  check_range(r.deadspace, "deadspace", 100, 250);
  check_range(r.vo2, "vo2", 1e-6);
  check_range(r.rq, "rq", 0.7, 1.0);
  check_range(r.hemoglobin, "hemoglobin", 1e-6);
  check_range(r.cardiac_output, "cardiac_output", 1e-6);
  check_range(r.weight, "weight", 1e-6);
  check_range(r.age, "age", 1e-6);
  if (!(r.male_fraction >= 0 && r.male_fraction <= 1)) throw ConfigError("male_fraction outside [0, 1]");
  check_range(r.hr, "hr");
  check_range(r.sbp, "sbp");
  check_range(r.dbp, "dbp");
  check_range(r.temp, "temp");
  check_range(r.lactate, "lactate", 0);
  check_range(r.na, "na");
  check_range(r.k, "k");
  check_range(r.cl, "cl");
  check_range(r.hco3, "hco3", 1e-6);
  check_range(r.creatinine, "creatinine", 0);
  check_range(r.bun, "bun", 0);
  check_range(r.wbc, "wbc", 0);
  check_range(r.platelets, "platelets", 0);
  check_range(r.gcs, "gcs", 3, 15);
  if (!(r.noise_scale >= 0)) throw ConfigError("noise_scale must be non-negative");
}

ParamRanges extend_ranges(const ParamRanges& r, double f) {
  ParamRanges out = r;
  out.compliance = widen(r.compliance, f, 15, 90);
  out.resistance = widen(r.resistance, f, 5, 30);
  out.shunt = widen(r.shunt, f, 0.02, 0.45);
  out.deadspace = widen(r.deadspace, f, 100, 250);
  out.vo2 = widen(r.vo2, f, 0.05, 1.0);
  out.rq = widen(r.rq, f, 0.7, 1.0);
  out.hemoglobin = widen(r.hemoglobin, f, 4, 20);
  out.cardiac_output = widen(r.cardiac_output, f, 1.5, 12);
  return out;
}

std::vector<TwinParams> spawn_cohort(int n, std::uint64_t seed, const ParamRanges& ranges) {
  if (n < 1) throw ConfigError("cohort size must be at least 1");
  validate(ranges);
  std::vector<TwinParams> cohort;
  cohort.reserve(static_cast<std::size_t>(n));
  const auto noise = default_noise_std();
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {0xc0401ULL, static_cast<std::uint64_t>(i)}));
    TwinParams p;
    // Resample the rare record that falls outside the invariants (possible only
    // through rounding at range edges).
    for (int attempt = 0;; ++attempt) {
      p.compliance_mL_per_cmH2O = draw(ranges.compliance, rng);
      p.resistance_cmH2O_s_per_L = draw(ranges.resistance, rng);
      p.base_shunt_fraction = draw(ranges.shunt, rng);
      p.deadspace_mL = draw(ranges.deadspace, rng);
      p.vo2_L_per_min = draw(ranges.vo2, rng);
      p.vco2_L_per_min = p.vo2_L_per_min * draw(ranges.rq, rng);
      p.hemoglobin_g_per_dL = draw(ranges.hemoglobin, rng);
      p.cardiac_output_L_per_min = draw(ranges.cardiac_output, rng);
      p.weight_kg = draw(ranges.weight, rng);
      p.age_years = draw(ranges.age, rng);
      p.sex = uniform01(rng) < ranges.male_fraction ? Sex::male : Sex::female;
      try {
        validate(p);
        break;
      } catch (const ParameterError&) {
        if (attempt > 100) throw;
      }
    }
    auto& b = p.baseline;
    b[Channel::hr] = draw(ranges.hr, rng);
    b[Channel::sbp] = draw(ranges.sbp, rng);
    b[Channel::dbp] = draw(ranges.dbp, rng);
    b[Channel::temp] = draw(ranges.temp, rng);
    b[Channel::lactate] = draw(ranges.lactate, rng);
    b[Channel::na] = draw(ranges.na, rng);
    b[Channel::k] = draw(ranges.k, rng);
    b[Channel::cl] = draw(ranges.cl, rng);
    b[Channel::hco3] = draw(ranges.hco3, rng);
    b[Channel::creatinine] = draw(ranges.creatinine, rng);
    b[Channel::bun] = draw(ranges.bun, rng);
    b[Channel::wbc] = draw(ranges.wbc, rng);
    b[Channel::platelets] = draw(ranges.platelets, rng);
    b[Channel::gcs] = draw(ranges.gcs, rng);
    b[Channel::hb] = p.hemoglobin_g_per_dL;
    b[Channel::map] = (b[Channel::sbp] + 2.0 * b[Channel::dbp]) / 3.0;
    b[Channel::age] = p.age_years;
    b[Channel::sex] = p.sex == Sex::male ? 1.0 : 0.0;
    b[Channel::weight] = p.weight_kg;
    for (std::size_t c = 0; c < kStateDim; ++c) p.noise_std[c] = ranges.noise_scale * noise[c];
    cohort.push_back(p);
  }
  return cohort;
}

}  // namespace ventlab
