#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spn/common.hpp"

namespace spn {

// One daily weather report from one station, already tagged with its
// patch. Temperatures may arrive in Fahrenheit or Celsius per `unit`.
struct StationRecord {
  std::string date;  // ISO-8601, used only for ordering
  std::string station;
  int patch = 0;
  std::optional<double> t_avg, t_min, t_max;
  std::optional<double> rh_min, rh_max;
  char unit = 'C';
};

// Gap-free per-patch daily series after preprocessing. Temperatures in
// Celsius, humidity in percent; rh is the (min+max)/2 daily value kept
// for reporting.
struct PatchCovariateSeries {
  int patch = 0;
  std::vector<double> t, t_min, t_max;
  std::vector<double> rh, rh_min, rh_max;

  int days() const { return static_cast<int>(t.size()); }
};

struct BasisParams {
  double a_b = 2.71e-4;   // Briere biting scale, degC^-2 day^-1
  double a_m = 2.71e-5;   // Briere migration scale, a_b / 10
  double t_min = 14.67;   // degC
  double t_max = 41.0;    // degC
  double k = 0.1;         // humidity sensitivity
  double rh_opt = 70.0;   // percent
  double psi_ad = 13327.0;
  double ae_ad = 53135.0;
  double gas_r = 8.314;
};

// Evaluated basis values for one patch, one entry per day, all in [0,1].
struct BasisDaily {
  std::vector<double> bb;  // diurnally averaged biting response
  std::vector<double> bm;  // migration response
  std::vector<double> e;   // Eyring mortality response
  std::vector<double> l;   // diurnally averaged logistic humidity response
};

struct MigrationKernelParams {
  double c_s = 1.0;
  double c_i = 1.0;
  double cutoff_miles = 3.0;
  // Boundary reference points per patch, (lat, lon) degrees. Patch gap is
  // the minimal pairwise Haversine distance; identical points give 0.
  std::vector<std::vector<std::pair<double, double>>> patch_coords;
};

double f_to_c(double t_f);

// Preprocessing pipeline: normalize units to Celsius, interpolate missing
// days per station, centered 7-day moving average (window truncated
// symmetrically at the edges), then average stations within each patch.
std::vector<PatchCovariateSeries> preprocess_daily(
    const std::vector<StationRecord>& records, int horizon);

double briere(double t, double a, double t_min, double t_max);
double briere_diurnal_avg(double t, double t_day_min, double t_day_max,
                          double a, double t_min, double t_max);
double eyring(double t, double psi_ad, double ae_ad, double gas_r);
double logistic_rh(double rh, double k, double rh_opt);
double rh_diurnal_logistic_avg(double rh_min, double rh_max, double k,
                               double rh_opt);

double haversine_miles(double lat1, double lon1, double lat2, double lon2);
double min_patch_distance_miles(
    const std::vector<std::pair<double, double>>& a,
    const std::vector<std::pair<double, double>>& b);
double kernel_from_distance(double delta_miles, double c,
                            double cutoff_miles);
double migration_kernel(const MigrationKernelParams& params, int from,
                        int to, double c);

// Seasonal sinusoid plus seeded noise; a stand-in for station data when
// none is supplied. Deterministic given the seed.
std::vector<PatchCovariateSeries> synthetic_covariates(uint64_t seed,
                                                       int horizon,
                                                       int patches);

BasisDaily evaluate_basis(const PatchCovariateSeries& series,
                          const BasisParams& params);

std::vector<StationRecord> read_weather_csv(const std::string& path);

void write_covariate_cache(const std::string& dir,
                           const std::vector<PatchCovariateSeries>& series,
                           const std::vector<BasisDaily>& basis);
void load_covariate_cache(const std::string& dir, int patches,
                          std::vector<PatchCovariateSeries>& series,
                          std::vector<BasisDaily>& basis);

}  // namespace spn
