#include "spn/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <thread>

namespace spn {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t sample_seed(uint64_t master_seed, int64_t sample_id, int run) {
  return derive_seed(master_seed, static_cast<uint64_t>(sample_id),
                     1 + 2 * static_cast<uint64_t>(run));
}

namespace {

uint64_t theta_seed(uint64_t master_seed, int64_t sample_id) {
  return derive_seed(master_seed, static_cast<uint64_t>(sample_id), 0);
}

uint64_t dropout_seed(uint64_t master_seed, int64_t sample_id, int run) {
  return derive_seed(master_seed, static_cast<uint64_t>(sample_id),
                     2 + 2 * static_cast<uint64_t>(run));
}

}  // namespace

std::vector<int64_t> Dataset::split_records(int which) const {
  std::vector<int64_t> out;
  for (size_t s = 0; s < manifest.sample_ids.size(); ++s)
    if (manifest.split[s] == which)
      for (int r = 0; r < manifest.runs_per_sample; ++r)
        out.push_back(static_cast<int64_t>(s) * manifest.runs_per_sample + r);
  return out;
}

std::array<double, kNumCoefficients> normalize_targets(
    const CoefficientVector& theta, const CoefficientBounds& bounds) {
  std::array<double, kNumCoefficients> out{};
  for (int i = 0; i < kNumCoefficients; ++i) {
    double gain = family_bounds(bounds, coefficient_family(i)).gain();
    if (theta.c[i] < 0.0 || theta.c[i] > gain + 1e-12)
      throw ValidationError(std::string("coefficient ") +
                            kCoefficientNames[i] + " outside [0, gain]");
    out[i] = gain > 0.0 ? theta.c[i] / gain : 0.0;
  }
  return out;
}

CoefficientVector denormalize_targets(
    const std::array<double, kNumCoefficients>& theta_norm,
    const CoefficientBounds& bounds) {
  CoefficientVector theta;
  for (int i = 0; i < kNumCoefficients; ++i)
    theta.c[i] = theta_norm[i] *
                 family_bounds(bounds, coefficient_family(i)).gain();
  return theta;
}

std::vector<float> normalize_features(const Trajectory& traj,
                                      const DatasetManifest& manifest) {
  std::vector<double> scale(manifest.d_in, 1.0);
  for (int c : manifest.human_columns) scale[c] = manifest.human_total;
  for (int c : manifest.mosquito_columns) scale[c] = manifest.mosquito_total;

  std::vector<float> out(traj.states.size());
  for (size_t i = 0; i < traj.states.size(); ++i)
    out[i] = static_cast<float>(static_cast<double>(traj.states[i]) /
                                scale[i % manifest.d_in]);
  return out;
}

std::vector<double> denormalize_features(const std::vector<float>& x,
                                         const DatasetManifest& manifest) {
  std::vector<double> scale(manifest.d_in, 1.0);
  for (int c : manifest.human_columns) scale[c] = manifest.human_total;
  for (int c : manifest.mosquito_columns) scale[c] = manifest.mosquito_total;

  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<double>(x[i]) * scale[i % manifest.d_in];
  return out;
}

Trajectory apply_event_dropout(const PetriNet& net, const Trajectory& traj,
                               const DropoutSpec& spec, RandomStream& rng) {
  if (spec.p < 0.0 || spec.p > 1.0)
    throw ValidationError("dropout probability outside [0,1]");

  if (spec.mode == DropoutSpec::Mode::CellMask) {
    Trajectory out = traj;
    for (int d = 1; d < out.horizon; ++d)
      for (int c = 0; c < out.num_places; ++c)
        if (rng.uniform() < spec.p) {
          size_t i = static_cast<size_t>(d) * out.num_places + c;
          out.states[i] = out.states[i - out.num_places];
        }
    return out;
  }

  if (!traj.has_events)
    throw ConfigError("event-drop corruption requires an event log");

  // delete events independently, then rebuild the daily snapshots from
  // the survivors; counts are floored at zero where the loss makes a
  // consumption impossible
  Trajectory out;
  out.horizon = traj.horizon;
  out.num_places = traj.num_places;
  out.has_events = true;
  out.states.resize(traj.states.size());

  Marking m = net.initial;
  size_t next = 0;
  for (int d = 1; d <= traj.horizon; ++d) {
    while (next < traj.events.size() && traj.events[next].time < d) {
      const Event& ev = traj.events[next];
      ++next;
      if (rng.uniform() < spec.p) continue;
      out.events.push_back(ev);
      const auto& tr = net.transitions[ev.transition];
      for (const auto& [p, c] : tr.inputs) m[p] = std::max<int64_t>(0, m[p] - c);
      for (const auto& [p, c] : tr.outputs) m[p] += c;
    }
    std::copy(m.begin(), m.end(),
              out.states.begin() + static_cast<size_t>(d - 1) * out.num_places);
  }
  return out;
}

std::vector<int> split_dataset(int64_t n,
                               const std::vector<double>& fractions,
                               uint64_t seed) {
  if (fractions.size() != 3)
    throw ValidationError("expected train/val/test fractions");
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0 || f > 1.0)
      throw ValidationError("split fraction outside [0,1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("split fractions must sum to 1");

  auto n_val = static_cast<int64_t>(std::floor(n * fractions[1]));
  auto n_test = static_cast<int64_t>(std::floor(n * fractions[2]));
  int64_t n_train = n - n_val - n_test;

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng(seed);
  rng.shuffle(order.begin(), order.end());

  std::vector<int> label(n, 0);
  for (int64_t i = 0; i < n; ++i) {
    if (i < n_train)
      label[order[i]] = 0;
    else if (i < n_train + n_val)
      label[order[i]] = 1;
    else
      label[order[i]] = 2;
  }
  return label;
}

Dataset generate_dataset(const ModelConfig& model,
                         const std::vector<PatchCovariateSeries>& covariates,
                         const GenerateOptions& options) {
  model.bounds.validate();
  if (covariates.size() != 2)
    throw ConfigError("two-patch generation needs covariates for 2 patches");
  const int horizon = covariates[0].days();
  if (covariates[1].days() != horizon)
    throw ConfigError("patch covariate series have different lengths");

  PetriNet net = build_two_patch_net(model);
  std::vector<BasisDaily> basis = {evaluate_basis(covariates[0], model.basis),
                                   evaluate_basis(covariates[1], model.basis)};

  Dataset ds;
  auto& mf = ds.manifest;
  mf.n = options.n;
  mf.runs_per_sample = options.runs_per_sample;
  mf.horizon = horizon;
  mf.d_in = static_cast<int>(net.places.size());
  mf.feature_order = net.places;
  mf.human_total = static_cast<double>(model.fixed.humans_per_patch());
  mf.mosquito_total = static_cast<double>(model.fixed.mosquitoes_per_patch());
  for (int c = 0; c < mf.d_in; ++c) {
    if (net.places[c].find("_H_") != std::string::npos)
      mf.human_columns.push_back(c);
    else
      mf.mosquito_columns.push_back(c);
  }
  for (int i = 0; i < kNumCoefficients; ++i)
    mf.target_gains[i] =
        family_bounds(model.bounds, coefficient_family(i)).gain();
  mf.dropout = options.dropout;
  mf.master_seed = options.master_seed;
  // canonical compact form so the stored hash survives a JSON round trip
  mf.config_json = options.config_json.empty()
                       ? "{}"
                       : json::parse(options.config_json).dump();
  mf.config_hash = to_hex(fnv1a64(mf.config_json));
  mf.split_fractions = options.split_fractions;
  mf.split_seed = derive_seed(options.master_seed, 0x5EED, 3);

  const bool need_events = options.dropout.mode == DropoutSpec::Mode::EventDrop &&
                           options.dropout.p > 0.0;
  const int runs = options.runs_per_sample;

  struct Slot {
    bool ok = false;
    std::string error;
    std::vector<SampleRecord> records;
  };
  std::vector<Slot> slots(static_cast<size_t>(options.n));

  auto build_sample = [&](int64_t id) {
    Slot& slot = slots[id];
    try {
      RandomStream trng(theta_seed(options.master_seed, id));
      CoefficientVector theta = sample_coefficients(model.bounds, trng);
      auto theta_norm = normalize_targets(theta, model.bounds);
      auto schedule = make_rate_schedule(theta, basis, model, horizon);
      for (int r = 0; r < runs; ++r) {
        SampleRecord rec;
        rec.sample_id = id;
        rec.run = r;
        rec.seed = sample_seed(options.master_seed, id, r);
        rec.theta_raw = theta.c;
        rec.theta_norm = theta_norm;
        RandomStream sim_rng(rec.seed);
        Trajectory traj = simulate_horizon(net, schedule, sim_rng, need_events);
        if (options.dropout.p > 0.0) {
          RandomStream drop_rng(dropout_seed(options.master_seed, id, r));
          traj = apply_event_dropout(net, traj, options.dropout, drop_rng);
        }
        rec.x = normalize_features(traj, mf);
        slot.records.push_back(std::move(rec));
      }
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.ok = false;
      slot.error = e.what();
      slot.records.clear();
    }
  };

  int workers = std::max(1, options.workers);
  if (workers == 1 || options.n <= 1) {
    for (int64_t id = 0; id < options.n; ++id) build_sample(id);
  } else {
    std::atomic<int64_t> cursor{0};
    auto worker = [&]() {
      for (;;) {
        int64_t id = cursor.fetch_add(1);
        if (id >= options.n) return;
        build_sample(id);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  int64_t failures = 0;
  for (int64_t id = 0; id < options.n; ++id) {
    if (slots[id].ok) {
      mf.sample_ids.push_back(id);
      for (auto& rec : slots[id].records) ds.records.push_back(std::move(rec));
    } else {
      ++failures;
      fprintf(stderr, "sample %lld failed: %s\n",
              static_cast<long long>(id), slots[id].error.c_str());
    }
  }
  if (options.n > 0 &&
      static_cast<double>(failures) > 0.01 * static_cast<double>(options.n))
    throw GenerationFailure("more than 1% of samples failed to generate");

  mf.split = split_dataset(static_cast<int64_t>(mf.sample_ids.size()),
                           mf.split_fractions, mf.split_seed);
  return ds;
}

namespace {

json manifest_to_json(const DatasetManifest& mf) {
  json j;
  j["format"] = "spn-dataset";
  j["version"] = 1;
  j["n"] = mf.n;
  j["runs_per_sample"] = mf.runs_per_sample;
  j["horizon"] = mf.horizon;
  j["d_in"] = mf.d_in;
  j["feature_order"] = mf.feature_order;
  j["human_total"] = mf.human_total;
  j["mosquito_total"] = mf.mosquito_total;
  j["human_columns"] = mf.human_columns;
  j["mosquito_columns"] = mf.mosquito_columns;
  j["target_gains"] = mf.target_gains;
  j["target_names"] = kCoefficientNames;
  j["dropout"] = {{"p", mf.dropout.p},
                  {"mode", mf.dropout.mode == DropoutSpec::Mode::EventDrop
                               ? "event"
                               : "cell"}};
  j["master_seed"] = mf.master_seed;
  j["config_hash"] = mf.config_hash;
  j["config"] = mf.config_json.empty() ? json::object()
                                       : json::parse(mf.config_json);
  j["split_fractions"] = mf.split_fractions;
  j["split_seed"] = mf.split_seed;
  j["split"] = mf.split;
  j["sample_ids"] = mf.sample_ids;
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest mf;
  if (j.at("format") != "spn-dataset")
    throw IoError("not a dataset manifest");
  mf.n = j.at("n");
  mf.runs_per_sample = j.at("runs_per_sample");
  mf.horizon = j.at("horizon");
  mf.d_in = j.at("d_in");
  mf.feature_order = j.at("feature_order").get<std::vector<std::string>>();
  mf.human_total = j.at("human_total");
  mf.mosquito_total = j.at("mosquito_total");
  mf.human_columns = j.at("human_columns").get<std::vector<int>>();
  mf.mosquito_columns = j.at("mosquito_columns").get<std::vector<int>>();
  auto gains = j.at("target_gains").get<std::vector<double>>();
  if (gains.size() != kNumCoefficients)
    throw IoError("manifest target_gains has wrong length");
  std::copy(gains.begin(), gains.end(), mf.target_gains.begin());
  mf.dropout.p = j.at("dropout").at("p");
  mf.dropout.mode = j.at("dropout").at("mode") == "event"
                        ? DropoutSpec::Mode::EventDrop
                        : DropoutSpec::Mode::CellMask;
  mf.master_seed = j.at("master_seed");
  mf.config_hash = j.at("config_hash");
  mf.config_json = j.at("config").dump();
  mf.split_fractions = j.at("split_fractions").get<std::vector<double>>();
  mf.split_seed = j.at("split_seed");
  mf.split = j.at("split").get<std::vector<int>>();
  mf.sample_ids = j.at("sample_ids").get<std::vector<int64_t>>();
  return mf;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& dir) {
  fs::create_directories(dir);

  json j = manifest_to_json(dataset.manifest);
  j["integrity"] = to_hex(fnv1a64(j.dump()));
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << j.dump(2) << '\n';
  }

  {
    std::ofstream out(fs::path(dir) / "samples.bin", std::ios::binary);
    for (const auto& rec : dataset.records) {
      float theta[kNumCoefficients];
      for (int i = 0; i < kNumCoefficients; ++i)
        theta[i] = static_cast<float>(rec.theta_norm[i]);
      out.write(reinterpret_cast<const char*>(theta), sizeof(theta));
      out.write(reinterpret_cast<const char*>(rec.x.data()),
                static_cast<std::streamsize>(rec.x.size() * sizeof(float)));
    }
  }

  {
    std::ofstream out(fs::path(dir) / "samples_preview.csv");
    size_t shown = std::min<size_t>(3, dataset.records.size());
    for (size_t k = 0; k < shown; ++k) {
      const auto& rec = dataset.records[k];
      out << "record," << k << ",sample," << rec.sample_id << ",run,"
          << rec.run << ",seed," << rec.seed << '\n';
      out << "theta_norm";
      for (double v : rec.theta_norm) out << ',' << format_double(v);
      out << '\n';
      out << "day";
      for (const auto& name : dataset.manifest.feature_order) out << ',' << name;
      out << '\n';
      for (int d = 0; d < dataset.manifest.horizon; ++d) {
        out << (d + 1);
        for (int c = 0; c < dataset.manifest.d_in; ++c)
          out << ','
              << format_double(rec.x[static_cast<size_t>(d) *
                                         dataset.manifest.d_in +
                                     c]);
        out << '\n';
      }
    }
  }
}

Dataset load_dataset(const std::string& dir) {
  json j;
  {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("missing manifest.json in " + dir);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw IoError(std::string("corrupt manifest: ") + e.what());
    }
  }
  if (!j.contains("integrity")) throw IoError("manifest missing integrity");
  std::string stored = j.at("integrity");
  j.erase("integrity");
  if (to_hex(fnv1a64(j.dump())) != stored)
    throw IoError("manifest integrity check failed");

  Dataset ds;
  ds.manifest = manifest_from_json(j);
  if (to_hex(fnv1a64(ds.manifest.config_json)) != ds.manifest.config_hash)
    throw IoError("manifest config hash mismatch");

  const auto& mf = ds.manifest;
  std::ifstream in(fs::path(dir) / "samples.bin", std::ios::binary);
  if (!in) throw IoError("missing samples.bin in " + dir);
  in.seekg(0, std::ios::end);
  auto size = static_cast<int64_t>(in.tellg());
  int64_t expected = mf.record_count() * mf.record_floats() * 4;
  if (size != expected)
    throw IoError("samples.bin size " + std::to_string(size) +
                  " does not match manifest (expected " +
                  std::to_string(expected) + ")");
  in.seekg(0);

  for (int64_t s = 0; s < static_cast<int64_t>(mf.sample_ids.size()); ++s) {
    for (int r = 0; r < mf.runs_per_sample; ++r) {
      SampleRecord rec;
      rec.sample_id = mf.sample_ids[s];
      rec.run = r;
      rec.seed = sample_seed(mf.master_seed, rec.sample_id, r);
      float theta[kNumCoefficients];
      in.read(reinterpret_cast<char*>(theta), sizeof(theta));
      for (int i = 0; i < kNumCoefficients; ++i) {
        rec.theta_norm[i] = theta[i];
        rec.theta_raw[i] = theta[i] * mf.target_gains[i];
      }
      rec.x.resize(static_cast<size_t>(mf.horizon) * mf.d_in);
      in.read(reinterpret_cast<char*>(rec.x.data()),
              static_cast<std::streamsize>(rec.x.size() * sizeof(float)));
      if (!in) throw IoError("samples.bin truncated");
      ds.records.push_back(std::move(rec));
    }
  }
  return ds;
}

}  // namespace spn
