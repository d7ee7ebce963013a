#include "spn/covariates.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace spn {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEarthRadiusMiles = 3958.7613;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// days since 1970-01-01 for an ISO-8601 date (civil calendar arithmetic)
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

int64_t parse_iso_date(const std::string& s) {
  int y, m, d;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
      sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
    throw ValidationError("bad ISO-8601 date '" + s + "'");
  return days_from_civil(y, m, d);
}

// linear interpolation over interior gaps, constant extension at the ends
void fill_gaps(std::vector<std::optional<double>>& v,
               const std::string& what) {
  int n = static_cast<int>(v.size());
  int first = -1, last = -1;
  for (int i = 0; i < n; ++i)
    if (v[i]) {
      if (first < 0) first = i;
      last = i;
    }
  if (first < 0)
    throw ValidationError("field entirely missing: " + what);
  for (int i = 0; i < first; ++i) v[i] = *v[first];
  for (int i = last + 1; i < n; ++i) v[i] = *v[last];
  int prev = first;
  for (int i = first + 1; i <= last; ++i) {
    if (!v[i]) continue;
    if (i > prev + 1) {
      double a = *v[prev], b = *v[i];
      for (int k = prev + 1; k < i; ++k)
        v[k] = a + (b - a) * (k - prev) / static_cast<double>(i - prev);
    }
    prev = i;
  }
}

// centered moving average, half-width 3, truncated symmetrically so the
// window stays centered near the edges
std::vector<double> moving_average7(const std::vector<double>& v) {
  int n = static_cast<int>(v.size());
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    int w = std::min({3, i, n - 1 - i});
    double sum = 0.0;
    for (int k = i - w; k <= i + w; ++k) sum += v[k];
    out[i] = sum / (2 * w + 1);
  }
  return out;
}

struct StationSeries {
  std::vector<std::optional<double>> t, t_min, t_max, rh_min, rh_max;
};

}  // namespace

double f_to_c(double t_f) { return (5.0 / 9.0) * (t_f - 32.0); }

std::vector<PatchCovariateSeries> preprocess_daily(
    const std::vector<StationRecord>& records, int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  if (records.empty()) throw ConfigError("no station records");

  int64_t day0 = INT64_MAX;
  for (const auto& r : records) day0 = std::min(day0, parse_iso_date(r.date));

  // collect per (patch, station) series over the horizon
  std::map<std::pair<int, std::string>, StationSeries> stations;
  for (const auto& r : records) {
    int64_t idx = parse_iso_date(r.date) - day0;
    if (idx < 0 || idx >= horizon) continue;
    auto& s = stations[{r.patch, r.station}];
    if (s.t.empty()) {
      s.t.resize(horizon);
      s.t_min.resize(horizon);
      s.t_max.resize(horizon);
      s.rh_min.resize(horizon);
      s.rh_max.resize(horizon);
    }
    auto conv = [&](std::optional<double> v) -> std::optional<double> {
      if (!v) return std::nullopt;
      return r.unit == 'F' ? f_to_c(*v) : *v;
    };
    size_t i = static_cast<size_t>(idx);
    if (r.t_avg) s.t[i] = conv(r.t_avg);
    if (r.t_min) s.t_min[i] = conv(r.t_min);
    if (r.t_max) s.t_max[i] = conv(r.t_max);
    if (r.rh_min) s.rh_min[i] = r.rh_min;
    if (r.rh_max) s.rh_max[i] = r.rh_max;
  }

  // interpolate + smooth per station, then average within each patch
  std::map<int, std::vector<std::array<std::vector<double>, 5>>> by_patch;
  for (auto& [key, s] : stations) {
    const std::string ctx = "patch " + std::to_string(key.first) +
                            " station " + key.second;
    std::array<std::vector<std::optional<double>>*, 5> fields = {
        &s.t, &s.t_min, &s.t_max, &s.rh_min, &s.rh_max};
    static const char* names[5] = {"t_avg", "t_min", "t_max", "rh_min",
                                   "rh_max"};
    std::array<std::vector<double>, 5> smoothed;
    for (int f = 0; f < 5; ++f) {
      fill_gaps(*fields[f], std::string(names[f]) + " at " + ctx);
      std::vector<double> dense(horizon);
      for (int i = 0; i < horizon; ++i) dense[i] = *(*fields[f])[i];
      smoothed[f] = moving_average7(dense);
    }
    by_patch[key.first].push_back(std::move(smoothed));
  }

  std::vector<PatchCovariateSeries> out;
  for (auto& [patch, list] : by_patch) {
    if (list.empty())
      throw ConfigError("patch " + std::to_string(patch) + " has no stations");
    PatchCovariateSeries ps;
    ps.patch = patch;
    ps.t.resize(horizon);
    ps.t_min.resize(horizon);
    ps.t_max.resize(horizon);
    ps.rh.resize(horizon);
    ps.rh_min.resize(horizon);
    ps.rh_max.resize(horizon);
    for (int d = 0; d < horizon; ++d) {
      double acc[5] = {0, 0, 0, 0, 0};
      for (const auto& st : list)
        for (int f = 0; f < 5; ++f) acc[f] += st[f][d];
      double inv = 1.0 / static_cast<double>(list.size());
      ps.t[d] = acc[0] * inv;
      ps.t_min[d] = acc[1] * inv;
      ps.t_max[d] = acc[2] * inv;
      ps.rh_min[d] = acc[3] * inv;
      ps.rh_max[d] = acc[4] * inv;
      ps.rh[d] = 0.5 * (ps.rh_min[d] + ps.rh_max[d]);
    }
    out.push_back(std::move(ps));
  }
  return out;
}

double briere(double t, double a, double t_min, double t_max) {
  if (t <= t_min || t >= t_max) return 0.0;
  return clamp01(a * t * (t - t_min) * std::sqrt(t_max - t));
}

double briere_diurnal_avg(double t, double t_day_min, double t_day_max,
                          double a, double t_min, double t_max) {
  double lo = std::min(t_day_min, t_day_max);
  double hi = std::max(t_day_min, t_day_max);
  double mid = std::min(hi, std::max(lo, t));
  double half = 0.5 * (hi - lo);
  double sum = 0.0;
  for (int h = 0; h < 24; ++h) {
    double t_h = mid + half * std::sin(2.0 * kPi * h / 24.0 - kPi / 2.0);
    sum += briere(t_h, a, t_min, t_max);
  }
  return clamp01(sum / 24.0);
}

double eyring(double t, double psi_ad, double ae_ad, double gas_r) {
  double t_k = t + 273.15;
  return clamp01(psi_ad * t_k * std::exp(-ae_ad / (gas_r * t_k)));
}

double logistic_rh(double rh, double k, double rh_opt) {
  return 1.0 / (1.0 + std::exp(-k * (rh - rh_opt)));
}

double rh_diurnal_logistic_avg(double rh_min, double rh_max, double k,
                               double rh_opt) {
  double lo = std::min(rh_min, rh_max);
  double half = 0.5 * (std::max(rh_min, rh_max) - lo);
  double sum = 0.0;
  for (int h = 0; h < 24; h += 4) {
    double rh_h = lo + half * (1.0 - std::cos(2.0 * kPi * h / 24.0));
    sum += logistic_rh(rh_h, k, rh_opt);
  }
  return clamp01(sum / 6.0);
}

double haversine_miles(double lat1, double lon1, double lat2, double lon2) {
  double p1 = lat1 * kPi / 180.0, p2 = lat2 * kPi / 180.0;
  double dp = p2 - p1, dl = (lon2 - lon1) * kPi / 180.0;
  double a = std::sin(dp / 2) * std::sin(dp / 2) +
             std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * kEarthRadiusMiles * std::asin(std::min(1.0, std::sqrt(a)));
}

double min_patch_distance_miles(
    const std::vector<std::pair<double, double>>& a,
    const std::vector<std::pair<double, double>>& b) {
  if (a.empty() || b.empty())
    throw ConfigError("patch has no reference coordinates");
  double best = INFINITY;
  for (const auto& [la, lo] : a)
    for (const auto& [lb, lob] : b)
      best = std::min(best, haversine_miles(la, lo, lb, lob));
  return best;
}

double kernel_from_distance(double delta_miles, double c,
                            double cutoff_miles) {
  if (c <= 0.0) throw ConfigError("kernel constant must be positive");
  if (delta_miles > cutoff_miles) return 0.0;
  return 1.0 / (c + delta_miles * delta_miles);
}

double migration_kernel(const MigrationKernelParams& params, int from,
                        int to, double c) {
  double delta = min_patch_distance_miles(params.patch_coords.at(from),
                                          params.patch_coords.at(to));
  return kernel_from_distance(delta, c, params.cutoff_miles);
}

std::vector<PatchCovariateSeries> synthetic_covariates(uint64_t seed,
                                                       int horizon,
                                                       int patches) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  std::vector<PatchCovariateSeries> out;
  for (int p = 0; p < patches; ++p) {
    RandomStream rng(derive_seed(seed, static_cast<uint64_t>(p)));
    PatchCovariateSeries ps;
    ps.patch = p + 1;
    ps.t.resize(horizon);
    ps.t_min.resize(horizon);
    ps.t_max.resize(horizon);
    ps.rh.resize(horizon);
    ps.rh_min.resize(horizon);
    ps.rh_max.resize(horizon);

    // annual sinusoid plus synoptic-scale waves and AR(1) day-to-day
    // noise; temperature and humidity waves run on different periods and
    // patch-specific phases so the two covariates decorrelate the way
    // station data does
    double phase = 12.0 * p;
    double phi_t1 = rng.uniform_range(0.0, 2.0 * kPi);
    double phi_t2 = rng.uniform_range(0.0, 2.0 * kPi);
    double phi_rh1 = rng.uniform_range(0.0, 2.0 * kPi);
    double phi_rh2 = rng.uniform_range(0.0, 2.0 * kPi);
    double phi_amp = rng.uniform_range(0.0, 2.0 * kPi);
    double t_ar = 0.0, rh_ar = 0.0;

    for (int d = 0; d < horizon; ++d) {
      double season = 2.0 * kPi * (d - 80.0 - phase) / 365.0;
      double wave = 3.5 * std::sin(2.0 * kPi * d / 9.7 + phi_t1) +
                    2.5 * std::sin(2.0 * kPi * d / 23.3 + phi_t2);
      t_ar = 0.7 * t_ar + rng.normal(0.0, 1.0);
      double base = 22.0 + 9.0 * std::sin(season) + wave + t_ar;
      double half = 5.0 + 1.5 * std::sin(2.0 * kPi * d / 17.3 + phi_amp) +
                    rng.normal(0.0, 0.5);
      half = std::min(9.0, std::max(2.0, half));
      ps.t[d] = base;
      ps.t_min[d] = base - half;
      ps.t_max[d] = base + half;

      double rh_season = 2.0 * kPi * (d - 200.0 - phase) / 365.0;
      double rh_wave = 8.0 * std::sin(2.0 * kPi * d / 13.1 + phi_rh1) +
                       6.0 * std::sin(2.0 * kPi * d / 31.7 + phi_rh2);
      rh_ar = 0.6 * rh_ar + rng.normal(0.0, 2.0);
      double mid = 55.0 + 18.0 * std::sin(rh_season) + rh_wave + rh_ar;
      mid = std::min(95.0, std::max(5.0, mid));
      double spread = 12.0 + rng.normal(0.0, 1.5);
      spread = std::min(30.0, std::max(2.0, spread));
      ps.rh_min[d] = std::max(0.0, mid - spread);
      ps.rh_max[d] = std::min(100.0, mid + spread);
      ps.rh[d] = 0.5 * (ps.rh_min[d] + ps.rh_max[d]);
    }
    out.push_back(std::move(ps));
  }
  return out;
}

BasisDaily evaluate_basis(const PatchCovariateSeries& series,
                          const BasisParams& params) {
  BasisDaily b;
  int n = series.days();
  b.bb.resize(n);
  b.bm.resize(n);
  b.e.resize(n);
  b.l.resize(n);
  for (int d = 0; d < n; ++d) {
    b.bb[d] = briere_diurnal_avg(series.t[d], series.t_min[d],
                                 series.t_max[d], params.a_b, params.t_min,
                                 params.t_max);
    b.bm[d] = briere(series.t[d], params.a_m, params.t_min, params.t_max);
    b.e[d] = eyring(series.t[d], params.psi_ad, params.ae_ad, params.gas_r);
    b.l[d] = rh_diurnal_logistic_avg(series.rh_min[d], series.rh_max[d],
                                     params.k, params.rh_opt);
  }
  return b;
}

std::vector<StationRecord> read_weather_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weather CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty weather CSV");

  auto header = split_csv_line(line);
  static const char* required[] = {"date",  "station", "patch",
                                   "t_avg", "t_min",   "t_max",
                                   "rh_min", "rh_max",  "unit"};
  std::map<std::string, int> col;
  for (size_t i = 0; i < header.size(); ++i) col[header[i]] = static_cast<int>(i);
  for (const char* name : required)
    if (!col.count(name))
      throw ValidationError(std::string("weather CSV missing column '") +
                            name + "'");

  std::vector<StationRecord> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    auto cell = [&](const char* name) -> std::string {
      int i = col[name];
      return i < static_cast<int>(cells.size()) ? cells[i] : "";
    };
    auto num = [&](const char* name) -> std::optional<double> {
      std::string v = cell(name);
      if (v.empty()) return std::nullopt;
      try {
        size_t pos;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::exception&) {
        throw ValidationError("row " + std::to_string(row) + ": bad number '" +
                              v + "' in " + name);
      }
    };
    StationRecord r;
    r.date = cell("date");
    parse_iso_date(r.date);  // validates format
    r.station = cell("station");
    try {
      r.patch = std::stoi(cell("patch"));
    } catch (const std::exception&) {
      throw ValidationError("row " + std::to_string(row) + ": bad patch id");
    }
    r.t_avg = num("t_avg");
    r.t_min = num("t_min");
    r.t_max = num("t_max");
    r.rh_min = num("rh_min");
    r.rh_max = num("rh_max");
    std::string u = cell("unit");
    if (u != "F" && u != "C")
      throw ValidationError("row " + std::to_string(row) +
                            ": unit must be F or C");
    r.unit = u[0];
    for (auto rh : {r.rh_min, r.rh_max})
      if (rh && (*rh < 0.0 || *rh > 100.0))
        throw ValidationError("row " + std::to_string(row) +
                              ": rh outside [0,100]");
    if (r.t_min && r.t_avg && r.t_max &&
        !(*r.t_min <= *r.t_avg && *r.t_avg <= *r.t_max))
      throw ValidationError("row " + std::to_string(row) +
                            ": t_min <= t_avg <= t_max violated");
    out.push_back(std::move(r));
  }
  return out;
}

void write_covariate_cache(const std::string& dir,
                           const std::vector<PatchCovariateSeries>& series,
                           const std::vector<BasisDaily>& basis) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (size_t p = 0; p < series.size(); ++p) {
    const auto& s = series[p];
    const auto& b = basis[p];
    std::ofstream out(fs::path(dir) /
                      ("patch_" + std::to_string(s.patch) + ".csv"));
    out << "day,T,Tmin,Tmax,RH,RHmin,RHmax,Bb,Bm,E,L\n";
    for (int d = 0; d < s.days(); ++d) {
      out << (d + 1) << ',' << format_double(s.t[d]) << ','
          << format_double(s.t_min[d]) << ',' << format_double(s.t_max[d])
          << ',' << format_double(s.rh[d]) << ','
          << format_double(s.rh_min[d]) << ',' << format_double(s.rh_max[d])
          << ',' << format_double(b.bb[d]) << ',' << format_double(b.bm[d])
          << ',' << format_double(b.e[d]) << ',' << format_double(b.l[d])
          << '\n';
    }
  }
}

void load_covariate_cache(const std::string& dir, int patches,
                          std::vector<PatchCovariateSeries>& series,
                          std::vector<BasisDaily>& basis) {
  namespace fs = std::filesystem;
  series.clear();
  basis.clear();
  for (int p = 1; p <= patches; ++p) {
    fs::path file = fs::path(dir) / ("patch_" + std::to_string(p) + ".csv");
    std::ifstream in(file);
    if (!in)
      throw IoError("covariate cache missing: " + file.string());
    std::string line;
    std::getline(in, line);
    PatchCovariateSeries s;
    s.patch = p;
    BasisDaily b;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != 11)
        throw IoError("bad covariate cache row in " + file.string());
      s.t.push_back(std::stod(cells[1]));
      s.t_min.push_back(std::stod(cells[2]));
      s.t_max.push_back(std::stod(cells[3]));
      s.rh.push_back(std::stod(cells[4]));
      s.rh_min.push_back(std::stod(cells[5]));
      s.rh_max.push_back(std::stod(cells[6]));
      b.bb.push_back(std::stod(cells[7]));
      b.bm.push_back(std::stod(cells[8]));
      b.e.push_back(std::stod(cells[9]));
      b.l.push_back(std::stod(cells[10]));
    }
    series.push_back(std::move(s));
    basis.push_back(std::move(b));
  }
}

}  // namespace spn
