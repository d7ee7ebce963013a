#include "spn/model.hpp"

#include <algorithm>
#include <cmath>

namespace spn {

const std::array<const char*, kNumCoefficients> kCoefficientNames = {
    "lambda1", "lambda2", "lambda3", "gamma1", "gamma2", "gamma3",
    "delta1",  "delta2",  "delta3",  "eta1",   "eta2",   "eta3",
    "rho1"};

RateFamily coefficient_family(int index) {
  if (index < 0 || index >= kNumCoefficients)
    throw ValidationError("coefficient index out of range");
  if (index < 3) return RateFamily::MosquitoToHuman;   // lambda
  if (index < 6) return RateFamily::HumanToMosquito;   // gamma
  if (index < 9) return RateFamily::MosquitoToHuman;   // delta
  if (index < 12) return RateFamily::HumanToMosquito;  // eta
  return RateFamily::MosquitoMortality;                // rho1
}

const FamilyBounds& family_bounds(const CoefficientBounds& bounds,
                                  RateFamily family) {
  switch (family) {
    case RateFamily::MosquitoToHuman:
      return bounds.beta_mh;
    case RateFamily::HumanToMosquito:
      return bounds.beta_hm;
    case RateFamily::MosquitoMortality:
      return bounds.mu_m;
  }
  throw ValidationError("bad rate family");
}

CoefficientVector sample_coefficients(const CoefficientBounds& bounds,
                                      RandomStream& rng) {
  bounds.validate();
  CoefficientVector theta;
  for (int i = 0; i < kNumCoefficients; ++i) {
    double gain = family_bounds(bounds, coefficient_family(i)).gain();
    theta.c[i] = rng.uniform() * gain;
  }
  return theta;
}

namespace {

double clamp_to(const FamilyBounds& f, double v) {
  return std::min(f.hi, std::max(f.lo, v));
}

double linear_rate(double intercept, double c1, double c2, double c3,
                   double bb, double l) {
  return intercept + c1 * bb + c2 * l + c3 * (bb * l);
}

}  // namespace

TransmissionRates compute_transmission_rates(const CoefficientVector& theta,
                                             double bb_i, double l_i,
                                             double bb_j, double l_j,
                                             const CoefficientBounds& bounds) {
  const double mh0 = bounds.beta_mh.lo;
  const double hm0 = bounds.beta_hm.lo;
  TransmissionRates out;
  out.mh_within = clamp_to(
      bounds.beta_mh, linear_rate(mh0, theta.lambda(1), theta.lambda(2),
                                  theta.lambda(3), bb_i, l_i));
  out.hm_within = clamp_to(
      bounds.beta_hm, linear_rate(hm0, theta.gamma(1), theta.gamma(2),
                                  theta.gamma(3), bb_i, l_i));
  out.mh_between = clamp_to(
      bounds.beta_mh, linear_rate(mh0, theta.delta(1), theta.delta(2),
                                  theta.delta(3), bb_j, l_j));
  out.hm_between = clamp_to(
      bounds.beta_hm, linear_rate(hm0, theta.eta(1), theta.eta(2),
                                  theta.eta(3), bb_j, l_j));
  return out;
}

double compute_mortality_rate(const CoefficientVector& theta, double e,
                              const CoefficientBounds& bounds) {
  return clamp_to(bounds.mu_m, bounds.mu_m.lo + theta.rho1() * e);
}

std::pair<double, double> compute_migration_rates(
    const MigrationKernelParams& kernel, int from, int to, double bm_src,
    double l_src) {
  double d_s = migration_kernel(kernel, from, to, kernel.c_s);
  double d_i = migration_kernel(kernel, from, to, kernel.c_i);
  return {d_s * bm_src * l_src, d_i * bm_src * l_src};
}

std::vector<std::string> two_patch_place_names() {
  std::vector<std::string> names;
  for (int p = 1; p <= 2; ++p)
    for (const char* base : {"S_H", "I_H", "R_H", "S_M", "I_M", "D_H", "D_M"})
      names.push_back(std::string(base) + "_" + std::to_string(p));
  return names;
}

PetriNet build_two_patch_net(const ModelConfig& config) {
  PetriNet net;
  net.places = two_patch_place_names();

  const auto& fx = config.fixed;
  net.initial.assign(net.places.size(), 0);
  for (int p = 0; p < 2; ++p) {
    net.initial[p * 7 + 0] = fx.s_h;
    net.initial[p * 7 + 1] = fx.i_h;
    net.initial[p * 7 + 2] = fx.r_h;
    net.initial[p * 7 + 3] = fx.s_m;
    net.initial[p * 7 + 4] = fx.i_m;
  }

  auto idx = [&](const char* base, int patch) {
    return net.place_index(std::string(base) + "_" + std::to_string(patch));
  };
  const bool freq = config.incidence == IncidenceLaw::FrequencyDependent;

  for (int i = 1; i <= 2; ++i) {
    int j = 3 - i;
    std::string si = std::to_string(i), sj = std::to_string(j);
    std::vector<int> living_i = {idx("S_H", i), idx("I_H", i), idx("R_H", i)};
    std::vector<int> living_j = {idx("S_H", j), idx("I_H", j), idx("R_H", j)};
    auto norm = [&](const std::vector<int>& v) {
      return freq ? v : std::vector<int>{};
    };

    TransitionSpec inf_h;
    inf_h.id = "infect_H_" + si;
    inf_h.inputs = {{idx("S_H", i), 1}};
    inf_h.outputs = {{idx("I_H", i), 1}};
    inf_h.hazard = {
        {HazardTerm::Kind::Bilinear, "beta_MH_" + si + si, idx("S_H", i),
         idx("I_M", i), norm(living_i)},
        {HazardTerm::Kind::Bilinear, "beta_MH_" + si + sj, idx("S_H", i),
         idx("I_M", j), norm(living_i)}};
    net.transitions.push_back(inf_h);

    TransitionSpec inf_m;
    inf_m.id = "infect_M_" + si;
    inf_m.inputs = {{idx("S_M", i), 1}};
    inf_m.outputs = {{idx("I_M", i), 1}};
    inf_m.hazard = {
        {HazardTerm::Kind::Bilinear, "beta_HM_" + si + si, idx("S_M", i),
         idx("I_H", i), norm(living_i)},
        {HazardTerm::Kind::Bilinear, "beta_HM_" + si + sj, idx("S_M", i),
         idx("I_H", j), norm(living_j)}};
    net.transitions.push_back(inf_m);

    TransitionSpec rec;
    rec.id = "recover_" + si;
    rec.inputs = {{idx("I_H", i), 1}};
    rec.outputs = {{idx("R_H", i), 1}};
    rec.hazard = {{HazardTerm::Kind::PerCapita, "sigma", idx("I_H", i), -1, {}}};
    net.transitions.push_back(rec);

    for (const char* base : {"S_H", "I_H", "R_H"}) {
      TransitionSpec death;
      death.id = std::string("death_") + base + "_" + si;
      death.inputs = {{idx(base, i), 1}};
      death.outputs = {{idx("D_H", i), 1}};
      death.hazard = {
          {HazardTerm::Kind::PerCapita, "mu_H", idx(base, i), -1, {}}};
      net.transitions.push_back(death);
    }

    for (const char* base : {"S_M", "I_M"}) {
      TransitionSpec death;
      death.id = std::string("death_") + base + "_" + si;
      death.inputs = {{idx(base, i), 1}};
      death.outputs = {{idx("D_M", i), 1}};
      death.hazard = {
          {HazardTerm::Kind::PerCapita, "mu_M_" + si, idx(base, i), -1, {}}};
      net.transitions.push_back(death);
    }

    const char* human_rates[3] = {"phi_S", "phi_I", "phi_R"};
    const char* human_places[3] = {"S_H", "I_H", "R_H"};
    for (int k = 0; k < 3; ++k) {
      TransitionSpec mig;
      mig.id = std::string("migrate_") + human_places[k] + "_" + si + "_" + sj;
      mig.inputs = {{idx(human_places[k], i), 1}};
      mig.outputs = {{idx(human_places[k], j), 1}};
      mig.hazard = {{HazardTerm::Kind::PerCapita, human_rates[k],
                     idx(human_places[k], i), -1, {}}};
      net.transitions.push_back(mig);
    }

    TransitionSpec mig_s;
    mig_s.id = "migrate_S_M_" + si + "_" + sj;
    mig_s.inputs = {{idx("S_M", i), 1}};
    mig_s.outputs = {{idx("S_M", j), 1}};
    mig_s.hazard = {{HazardTerm::Kind::PerCapita, "alpha_S_" + si + sj,
                     idx("S_M", i), -1, {}}};
    net.transitions.push_back(mig_s);

    TransitionSpec mig_i;
    mig_i.id = "migrate_I_M_" + si + "_" + sj;
    mig_i.inputs = {{idx("I_M", i), 1}};
    mig_i.outputs = {{idx("I_M", j), 1}};
    mig_i.hazard = {{HazardTerm::Kind::PerCapita, "alpha_I_" + si + sj,
                     idx("I_M", i), -1, {}}};
    net.transitions.push_back(mig_i);
  }

  net.validate();
  return net;
}

std::vector<DayRates> make_rate_schedule(
    const CoefficientVector& theta,
    const std::vector<BasisDaily>& basis_by_patch, const ModelConfig& config,
    int horizon) {
  if (basis_by_patch.size() != 2)
    throw ConfigError("two-patch schedule needs basis series for 2 patches");
  for (const auto& b : basis_by_patch)
    if (static_cast<int>(b.bb.size()) < horizon)
      throw ConfigError("basis series shorter than horizon");

  std::vector<DayRates> schedule(horizon);
  for (int d = 0; d < horizon; ++d) {
    DayRates& r = schedule[d];
    r["sigma"] = config.fixed.sigma;
    r["mu_H"] = config.fixed.mu_h;
    r["phi_S"] = config.fixed.phi_s;
    r["phi_I"] = config.fixed.phi_i;
    r["phi_R"] = config.fixed.phi_r;
    for (int i = 1; i <= 2; ++i) {
      int j = 3 - i;
      const auto& bi = basis_by_patch[i - 1];
      const auto& bj = basis_by_patch[j - 1];
      std::string si = std::to_string(i), sj = std::to_string(j);

      auto tr = compute_transmission_rates(theta, bi.bb[d], bi.l[d], bj.bb[d],
                                           bj.l[d], config.bounds);
      r["beta_MH_" + si + si] = tr.mh_within;
      r["beta_HM_" + si + si] = tr.hm_within;
      r["beta_MH_" + si + sj] = tr.mh_between;
      r["beta_HM_" + si + sj] = tr.hm_between;
      r["mu_M_" + si] = compute_mortality_rate(theta, bi.e[d], config.bounds);

      auto [a_s, a_i] = compute_migration_rates(config.kernel, i - 1, j - 1,
                                                bi.bm[d], bi.l[d]);
      r["alpha_S_" + si + sj] = a_s;
      r["alpha_I_" + si + sj] = a_i;
    }
  }
  return schedule;
}

}  // namespace spn
