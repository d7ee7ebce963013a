#include "spn/config.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace spn {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_paths(const json& j, PathsConfig& p) {
  maybe(j, "weather_csv", p.weather_csv);
  maybe(j, "covariate_dir", p.covariate_dir);
  maybe(j, "dataset_dir", p.dataset_dir);
  maybe(j, "checkpoint", p.checkpoint);
  maybe(j, "evaluate_dir", p.evaluate_dir);
  maybe(j, "report_dir", p.report_dir);
}

void parse_model(const json& j, ModelConfig& m) {
  if (j.contains("fixed")) {
    const auto& f = j.at("fixed");
    maybe(f, "sigma", m.fixed.sigma);
    maybe(f, "mu_H", m.fixed.mu_h);
    maybe(f, "phi_S", m.fixed.phi_s);
    maybe(f, "phi_I", m.fixed.phi_i);
    maybe(f, "phi_R", m.fixed.phi_r);
    maybe(f, "S_H", m.fixed.s_h);
    maybe(f, "I_H", m.fixed.i_h);
    maybe(f, "R_H", m.fixed.r_h);
    maybe(f, "S_M", m.fixed.s_m);
    maybe(f, "I_M", m.fixed.i_m);
  }
  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    auto range = [&](const char* key, FamilyBounds& fb) {
      if (!b.contains(key)) return;
      auto v = b.at(key).get<std::vector<double>>();
      if (v.size() != 2)
        throw ValidationError(std::string("bounds.") + key +
                              " must be [min, max]");
      fb.lo = v[0];
      fb.hi = v[1];
    };
    range("beta_MH", m.bounds.beta_mh);
    range("beta_HM", m.bounds.beta_hm);
    range("mu_M", m.bounds.mu_m);
    m.bounds.validate();
  }
  if (j.contains("basis")) {
    const auto& b = j.at("basis");
    maybe(b, "a_b", m.basis.a_b);
    if (b.contains("a_m"))
      m.basis.a_m = b.at("a_m").get<double>();
    else
      m.basis.a_m = m.basis.a_b / 10.0;
    maybe(b, "T_min", m.basis.t_min);
    maybe(b, "T_max", m.basis.t_max);
    maybe(b, "k", m.basis.k);
    maybe(b, "RH_opt", m.basis.rh_opt);
    maybe(b, "Psi_ad", m.basis.psi_ad);
    maybe(b, "AE_ad", m.basis.ae_ad);
    maybe(b, "R", m.basis.gas_r);
    if (!(m.basis.t_min < m.basis.t_max))
      throw ValidationError("basis requires T_min < T_max");
  }
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    maybe(k, "c_S", m.kernel.c_s);
    maybe(k, "c_I", m.kernel.c_i);
    maybe(k, "cutoff_miles", m.kernel.cutoff_miles);
    if (k.contains("patch_coords")) {
      m.kernel.patch_coords.clear();
      for (const auto& patch : k.at("patch_coords")) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& pt : patch) {
          auto v = pt.get<std::vector<double>>();
          if (v.size() != 2)
            throw ValidationError("patch_coords entries must be [lat, lon]");
          pts.emplace_back(v[0], v[1]);
        }
        m.kernel.patch_coords.push_back(std::move(pts));
      }
    }
  }
  if (j.contains("incidence")) {
    std::string law = j.at("incidence");
    if (law == "frequency_dependent")
      m.incidence = IncidenceLaw::FrequencyDependent;
    else if (law == "mass_action")
      m.incidence = IncidenceLaw::MassAction;
    else
      throw ValidationError("incidence must be frequency_dependent or "
                            "mass_action");
  }
}

json model_to_json(const ModelConfig& m) {
  json coords = json::array();
  for (const auto& patch : m.kernel.patch_coords) {
    json pts = json::array();
    for (const auto& [lat, lon] : patch) pts.push_back({lat, lon});
    coords.push_back(pts);
  }
  return json{
      {"fixed",
       {{"sigma", m.fixed.sigma},
        {"mu_H", m.fixed.mu_h},
        {"phi_S", m.fixed.phi_s},
        {"phi_I", m.fixed.phi_i},
        {"phi_R", m.fixed.phi_r},
        {"S_H", m.fixed.s_h},
        {"I_H", m.fixed.i_h},
        {"R_H", m.fixed.r_h},
        {"S_M", m.fixed.s_m},
        {"I_M", m.fixed.i_m}}},
      {"bounds",
       {{"beta_MH", {m.bounds.beta_mh.lo, m.bounds.beta_mh.hi}},
        {"beta_HM", {m.bounds.beta_hm.lo, m.bounds.beta_hm.hi}},
        {"mu_M", {m.bounds.mu_m.lo, m.bounds.mu_m.hi}}}},
      {"basis",
       {{"a_b", m.basis.a_b},
        {"a_m", m.basis.a_m},
        {"T_min", m.basis.t_min},
        {"T_max", m.basis.t_max},
        {"k", m.basis.k},
        {"RH_opt", m.basis.rh_opt},
        {"Psi_ad", m.basis.psi_ad},
        {"AE_ad", m.basis.ae_ad},
        {"R", m.basis.gas_r}}},
      {"kernel",
       {{"c_S", m.kernel.c_s},
        {"c_I", m.kernel.c_i},
        {"cutoff_miles", m.kernel.cutoff_miles},
        {"patch_coords", coords}}},
      {"incidence", m.incidence == IncidenceLaw::FrequencyDependent
                        ? "frequency_dependent"
                        : "mass_action"}};
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") +
                          e.what());
  }

  RunConfig c;
  maybe(j, "master_seed", c.master_seed);
  maybe(j, "workers", c.workers);
  if (c.workers < 1) throw ValidationError("workers must be >= 1");
  if (j.contains("paths")) parse_paths(j.at("paths"), c.paths);
  if (j.contains("covariates")) {
    const auto& cov = j.at("covariates");
    maybe(cov, "synthetic", c.covariates.synthetic);
    maybe(cov, "horizon", c.covariates.horizon);
    maybe(cov, "patches", c.covariates.patches);
    if (c.covariates.horizon < 1)
      throw ValidationError("covariates.horizon must be >= 1");
    if (c.covariates.patches != 2)
      throw ValidationError("the two-patch model needs exactly 2 patches");
  }
  if (j.contains("model")) parse_model(j.at("model"), c.model);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    maybe(d, "n", c.dataset.n);
    maybe(d, "runs_per_sample", c.dataset.runs_per_sample);
    if (c.dataset.n < 0) throw ValidationError("dataset.n must be >= 0");
    if (c.dataset.runs_per_sample < 1)
      throw ValidationError("dataset.runs_per_sample must be >= 1");
    if (d.contains("dropout")) {
      const auto& dr = d.at("dropout");
      maybe(dr, "p", c.dataset.dropout.p);
      if (c.dataset.dropout.p < 0.0 || c.dataset.dropout.p > 1.0)
        throw ValidationError("dataset.dropout.p must lie in [0,1]");
      if (dr.contains("mode")) {
        std::string mode = dr.at("mode");
        if (mode == "event")
          c.dataset.dropout.mode = DropoutSpec::Mode::EventDrop;
        else if (mode == "cell")
          c.dataset.dropout.mode = DropoutSpec::Mode::CellMask;
        else
          throw ValidationError("dropout.mode must be event or cell");
      }
    }
    if (d.contains("splits"))
      c.dataset.split_fractions = d.at("splits").get<std::vector<double>>();
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    maybe(n, "filters", c.network.filters);
    maybe(n, "kernel", c.network.kernel);
    maybe(n, "blocks", c.network.blocks);
    maybe(n, "dropout", c.network.dropout);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    maybe(t, "batch_size", c.train.batch_size);
    maybe(t, "max_epochs", c.train.max_epochs);
    maybe(t, "patience", c.train.patience);
    maybe(t, "noise_sigma", c.train.noise_sigma);
    maybe(t, "lr", c.train.lr);
    maybe(t, "seed", c.train.seed);
  }
  if (j.contains("uq")) {
    const auto& u = j.at("uq");
    maybe(u, "passes", c.uq.passes);
    maybe(u, "tau_inv", c.uq.tau_inv);
    maybe(u, "use_dropout", c.uq.use_dropout);
    if (u.contains("levels"))
      c.uq.levels = u.at("levels").get<std::vector<double>>();
    c.uq.validate();
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::string text(std::istreambuf_iterator<char>(in), {});
  return run_config_from_json_text(text);
}

namespace {

json identity_json(const RunConfig& c) {
  json j;
  j["master_seed"] = c.master_seed;
  j["covariates"] = {{"synthetic", c.covariates.synthetic},
                     {"horizon", c.covariates.horizon},
                     {"patches", c.covariates.patches}};
  j["model"] = model_to_json(c.model);
  j["dataset"] = {
      {"n", c.dataset.n},
      {"runs_per_sample", c.dataset.runs_per_sample},
      {"dropout",
       {{"p", c.dataset.dropout.p},
        {"mode", c.dataset.dropout.mode == DropoutSpec::Mode::EventDrop
                     ? "event"
                     : "cell"}}},
      {"splits", c.dataset.split_fractions}};
  return j;
}

}  // namespace

std::string dataset_identity_json(const RunConfig& c) {
  return identity_json(c).dump();
}

std::string resolved_config_json(const RunConfig& c) {
  json j;
  j["master_seed"] = c.master_seed;
  j["workers"] = c.workers;
  j["paths"] = {{"weather_csv", c.paths.weather_csv},
                {"covariate_dir", c.paths.covariate_dir},
                {"dataset_dir", c.paths.dataset_dir},
                {"checkpoint", c.paths.checkpoint},
                {"evaluate_dir", c.paths.evaluate_dir},
                {"report_dir", c.paths.report_dir}};
  j["covariates"] = {{"synthetic", c.covariates.synthetic},
                     {"horizon", c.covariates.horizon},
                     {"patches", c.covariates.patches}};
  j["model"] = model_to_json(c.model);
  j["dataset"] = {
      {"n", c.dataset.n},
      {"runs_per_sample", c.dataset.runs_per_sample},
      {"dropout",
       {{"p", c.dataset.dropout.p},
        {"mode", c.dataset.dropout.mode == DropoutSpec::Mode::EventDrop
                     ? "event"
                     : "cell"}}},
      {"splits", c.dataset.split_fractions}};
  j["network"] = {{"filters", c.network.filters},
                  {"kernel", c.network.kernel},
                  {"blocks", c.network.blocks},
                  {"dropout", c.network.dropout}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"noise_sigma", c.train.noise_sigma},
                {"lr", c.train.lr},
                {"seed", c.train.seed}};
  j["uq"] = {{"passes", c.uq.passes},
             {"tau_inv", c.uq.tau_inv},
             {"use_dropout", c.uq.use_dropout},
             {"levels", c.uq.levels}};
  return j.dump(2);
}

void write_resolved_config(const RunConfig& config, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / "resolved_config.json");
  if (!out) throw IoError("cannot write resolved config in " + dir);
  out << resolved_config_json(config) << '\n';
}

}  // namespace spn
