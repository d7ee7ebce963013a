#pragma once

#include <array>
#include <string>
#include <vector>

#include "spn/covariates.hpp"
#include "spn/petri.hpp"

namespace spn {

// Rates and initial tokens that are held fixed across samples.
struct FixedParams {
  double sigma = 0.10;    // human recovery, day^-1
  double mu_h = 0.01;     // human mortality, day^-1
  double phi_s = 3.51e-4; // human migration, day^-1
  double phi_i = 3.50e-4;
  double phi_r = 3.49e-4;
  int64_t s_h = 4000;
  int64_t i_h = 20;
  int64_t r_h = 20;
  int64_t s_m = 2000;
  int64_t i_m = 10;

  int64_t humans_per_patch() const { return s_h + i_h + r_h; }
  int64_t mosquitoes_per_patch() const { return s_m + i_m; }
};

struct FamilyBounds {
  double lo = 0.0;
  double hi = 1.0;
  double gain() const { return hi - lo; }
};

// Entomological ranges of the three functional rate families.
struct CoefficientBounds {
  FamilyBounds beta_mh{0.01, 0.80};
  FamilyBounds beta_hm{0.072, 0.64};
  FamilyBounds mu_m{0.05, 0.33};

  // degenerate lo == hi is allowed (gain 0 pins the family to its floor)
  void validate() const {
    for (const auto& f : {beta_mh, beta_hm, mu_m})
      if (f.lo > f.hi)
        throw ValidationError("coefficient bounds require min <= max");
  }
};

inline constexpr int kNumCoefficients = 13;

// Order: lambda1..3 (within-patch mosquito->human), gamma1..3 (within
// human->mosquito), delta1..3 (between mosquito->human), eta1..3 (between
// human->mosquito), rho1 (mosquito mortality). Intercepts are the family
// minima and are not estimated.
extern const std::array<const char*, kNumCoefficients> kCoefficientNames;

enum class RateFamily { MosquitoToHuman, HumanToMosquito, MosquitoMortality };

RateFamily coefficient_family(int index);
const FamilyBounds& family_bounds(const CoefficientBounds& bounds,
                                  RateFamily family);

struct CoefficientVector {
  std::array<double, kNumCoefficients> c{};

  double lambda(int k) const { return c[k - 1]; }  // k in 1..3
  double gamma(int k) const { return c[3 + k - 1]; }
  double delta(int k) const { return c[6 + k - 1]; }
  double eta(int k) const { return c[9 + k - 1]; }
  double rho1() const { return c[12]; }
};

// Each coefficient drawn Uniform[0, gain] of its family.
CoefficientVector sample_coefficients(const CoefficientBounds& bounds,
                                      RandomStream& rng);

struct TransmissionRates {
  double mh_within;   // beta_MH_ii
  double hm_within;   // beta_HM_ii
  double mh_between;  // beta_MH_ij, driven by patch j's covariates
  double hm_between;  // beta_HM_ij, driven by patch j's covariates
};

TransmissionRates compute_transmission_rates(const CoefficientVector& theta,
                                             double bb_i, double l_i,
                                             double bb_j, double l_j,
                                             const CoefficientBounds& bounds);

double compute_mortality_rate(const CoefficientVector& theta, double e,
                              const CoefficientBounds& bounds);

// (alpha_S_ij, alpha_I_ij); source-patch basis values.
std::pair<double, double> compute_migration_rates(
    const MigrationKernelParams& kernel, int from, int to, double bm_src,
    double l_src);

enum class IncidenceLaw { FrequencyDependent, MassAction };

struct ModelConfig {
  FixedParams fixed;
  CoefficientBounds bounds;
  BasisParams basis;
  MigrationKernelParams kernel;
  IncidenceLaw incidence = IncidenceLaw::FrequencyDependent;

  ModelConfig() {
    // default two-patch geometry: adjacent patches, zero gap
    kernel.patch_coords = {{{33.45, -112.07}}, {{33.45, -112.07}}};
  }
};

// Places per patch: S_H, I_H, R_H, S_M, I_M, D_H, D_M (14 total).
// 13 transitions per patch: infection (human, mosquito; each with a
// within- and a between-patch hazard term), recovery, three human deaths,
// two mosquito deaths, three human migrations, two mosquito migrations.
PetriNet build_two_patch_net(const ModelConfig& config);

std::vector<std::string> two_patch_place_names();

// Per-day rate assembly over the horizon from the three compute_*
// operations plus the fixed constants.
std::vector<DayRates> make_rate_schedule(
    const CoefficientVector& theta,
    const std::vector<BasisDaily>& basis_by_patch, const ModelConfig& config,
    int horizon);

}  // namespace spn
