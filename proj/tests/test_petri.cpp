#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "spn/model.hpp"
#include "spn/petri.hpp"

using namespace spn;

namespace {

// X --mu--> D, per-capita hazard
PetriNet pure_death_net() {
  PetriNet net;
  net.places = {"X", "D"};
  TransitionSpec t;
  t.id = "die";
  t.inputs = {{0, 1}};
  t.outputs = {{1, 1}};
  t.hazard = {{HazardTerm::Kind::PerCapita, "mu", 0, -1, {}}};
  net.transitions = {t};
  net.initial = {1000, 0};
  net.validate();
  return net;
}

PetriNet ab_net() {
  PetriNet net;
  net.places = {"A", "B"};
  TransitionSpec t;
  t.id = "move";
  t.inputs = {{0, 1}};
  t.outputs = {{1, 1}};
  t.hazard = {{HazardTerm::Kind::PerCapita, "r", 0, -1, {}}};
  net.transitions = {t};
  net.initial = {0, 0};
  net.validate();
  return net;
}

}  // namespace

TEST_CASE("enabled follows the token-count rule") {
  auto net = ab_net();
  Marking m = marking_from_map(net, {{"A", 1}});
  CHECK(enabled(net, m, "move"));

  m = marking_from_map(net, {{"A", 0}});
  CHECK_FALSE(enabled(net, m, "move"));

  PetriNet net2;
  net2.places = {"A", "B", "C"};
  TransitionSpec t;
  t.id = "both";
  t.inputs = {{0, 1}, {1, 1}};
  t.outputs = {{2, 1}};
  t.hazard = {{HazardTerm::Kind::Constant, "r", -1, -1, {}}};
  net2.transitions = {t};
  net2.initial = {0, 0, 0};
  net2.validate();
  Marking m2 = marking_from_map(net2, {{"A", 2}, {"B", 0}});
  CHECK_FALSE(enabled(net2, m2, "both"));

  CHECK_THROWS_AS((void)enabled(net, m, "nope"), StructuralError);
}

TEST_CASE("fire applies the firing equation without mutating the input") {
  auto net = ab_net();
  Marking m = marking_from_map(net, {{"A", 3}, {"B", 0}});
  Marking next = fire(net, m, "move");
  CHECK(next == marking_from_map(net, {{"A", 2}, {"B", 1}}));
  CHECK(m == marking_from_map(net, {{"A", 3}, {"B", 0}}));  // untouched

  // self-loop: consume and produce the same token
  PetriNet loop;
  loop.places = {"A"};
  TransitionSpec t;
  t.id = "noop";
  t.inputs = {{0, 1}};
  t.outputs = {{0, 1}};
  t.hazard = {{HazardTerm::Kind::Constant, "r", -1, -1, {}}};
  loop.transitions = {t};
  loop.initial = {0};
  loop.validate();
  Marking one = {1};
  CHECK(fire(loop, one, 0) == Marking{1});

  // S -> I applied twice by hand
  PetriNet si;
  si.places = {"S", "I"};
  TransitionSpec inf;
  inf.id = "infect";
  inf.inputs = {{0, 1}};
  inf.outputs = {{1, 1}};
  inf.hazard = {{HazardTerm::Kind::Constant, "r", -1, -1, {}}};
  si.transitions = {inf};
  si.initial = {0, 0};
  Marking ms = marking_from_map(si, {{"S", 4000}, {"I", 20}});
  ms = fire(si, ms, 0);
  ms = fire(si, ms, 0);
  CHECK(ms == marking_from_map(si, {{"S", 3998}, {"I", 22}}));

  Marking empty = {0, 0};
  CHECK_THROWS_AS((void)fire(si, empty, 0), ContractError);
}

TEST_CASE("total_hazard sums per-transition hazards") {
  auto net = pure_death_net();
  Marking empty = {0, 0};
  CHECK(total_hazard(net, empty, {{"mu", 0.1}}) == 0.0);

  Marking m = {1000, 0};
  CHECK(total_hazard(net, m, {{"mu", 0.1}}) == doctest::Approx(100.0));

  PetriNet net2;
  net2.places = {"A"};
  TransitionSpec t1, t2;
  t1.id = "a";
  t1.inputs = {{0, 1}};
  t1.outputs = {{0, 1}};
  t1.hazard = {{HazardTerm::Kind::Constant, "r1", -1, -1, {}}};
  t2 = t1;
  t2.id = "b";
  t2.hazard = {{HazardTerm::Kind::Constant, "r2", -1, -1, {}}};
  net2.transitions = {t1, t2};
  net2.initial = {1};
  Marking one = {1};
  CHECK(total_hazard(net2, one, {{"r1", 2.0}, {"r2", 3.0}}) ==
        doctest::Approx(5.0));

  CHECK_THROWS_AS((void)total_hazard(net, m, DayRates{}), ConfigError);
}

TEST_CASE("ssa_day short-circuits when nothing can fire") {
  auto net = pure_death_net();
  Marking m0 = {1000, 0};
  RandomStream rng(1);
  auto [m, events] = ssa_day(net, m0, {{"mu", 0.0}}, 0.0, 1.0, rng);
  CHECK(m == m0);
  CHECK(events.empty());
}

TEST_CASE("ssa_day matches the pure-death analytic mean") {
  auto net = pure_death_net();
  DayRates rates = {{"mu", 0.1}};
  const int replicates = 2000;
  double sum = 0.0;
  for (int i = 0; i < replicates; ++i) {
    RandomStream rng(derive_seed(7, i));
    Marking m = net.initial;
    auto [out, events] = ssa_day(net, m, rates, 0.0, 5.0, rng, false);
    sum += static_cast<double>(out[0]);
  }
  double mean = sum / replicates;
  // E[X(5)] = 1000 exp(-0.5); Var = 1000 p (1-p) with p = exp(-0.5)
  double expected = 1000.0 * std::exp(-0.5);
  double se = std::sqrt(expected * (1.0 - std::exp(-0.5)) / replicates);
  CHECK(std::abs(mean - expected) < 4.0 * se);
}

TEST_CASE("ssa_day is deterministic given the seed") {
  auto net = pure_death_net();
  DayRates rates = {{"mu", 0.1}};
  RandomStream a(42), b(42);
  auto [ma, ea] = ssa_day(net, net.initial, rates, 0.0, 5.0, a);
  auto [mb, eb] = ssa_day(net, net.initial, rates, 0.0, 5.0, b);
  CHECK(ma == mb);
  REQUIRE(ea.size() == eb.size());
  for (size_t i = 0; i < ea.size(); ++i) {
    CHECK(ea[i].time == eb[i].time);
    CHECK(ea[i].transition == eb[i].transition);
  }
}

TEST_CASE("ssa_day rejects negative rates") {
  auto net = pure_death_net();
  RandomStream rng(1);
  CHECK_THROWS_AS(
      (void)ssa_day(net, net.initial, {{"mu", -0.1}}, 0.0, 1.0, rng),
      NumericError);
}

TEST_CASE("simulate_horizon snapshots end-of-day markings") {
  auto net = pure_death_net();
  std::vector<DayRates> schedule(3, {{"mu", 0.0}});
  RandomStream rng(5);
  auto traj = simulate_horizon(net, schedule, rng);
  REQUIRE(traj.horizon == 3);
  for (int d = 1; d <= 3; ++d) {
    CHECK(traj.at(d, 0) == 1000);
    CHECK(traj.at(d, 1) == 0);
  }
}

TEST_CASE("two-patch trajectories conserve species totals") {
  ModelConfig config;
  auto net = build_two_patch_net(config);
  CHECK(net.transitions.size() == 26);  // 2 patches x 13
  CHECK(net.places.size() == 14);

  auto cov = synthetic_covariates(11, 40, 2);
  std::vector<BasisDaily> basis = {evaluate_basis(cov[0], config.basis),
                                   evaluate_basis(cov[1], config.basis)};
  RandomStream coeff_rng(3);
  auto theta = sample_coefficients(config.bounds, coeff_rng);
  auto schedule = make_rate_schedule(theta, basis, config, 40);

  RandomStream rng(9);
  auto traj = simulate_horizon(net, schedule, rng, true);

  std::vector<int> human_cols, mosq_cols;
  for (size_t p = 0; p < net.places.size(); ++p) {
    if (net.places[p].find("_H_") != std::string::npos)
      human_cols.push_back(static_cast<int>(p));
    else
      mosq_cols.push_back(static_cast<int>(p));
  }
  for (int d = 1; d <= traj.horizon; ++d) {
    int64_t humans = 0, mosquitoes = 0;
    for (int c : human_cols) humans += traj.at(d, c);
    for (int c : mosq_cols) mosquitoes += traj.at(d, c);
    CHECK(humans == 8080);
    CHECK(mosquitoes == 4020);
    for (int c = 0; c < traj.num_places; ++c) CHECK(traj.at(d, c) >= 0);
  }
}

TEST_CASE("event replay reproduces every snapshot exactly") {
  ModelConfig config;
  auto net = build_two_patch_net(config);
  auto cov = synthetic_covariates(21, 15, 2);
  std::vector<BasisDaily> basis = {evaluate_basis(cov[0], config.basis),
                                   evaluate_basis(cov[1], config.basis)};
  RandomStream coeff_rng(4);
  auto theta = sample_coefficients(config.bounds, coeff_rng);
  auto schedule = make_rate_schedule(theta, basis, config, 15);

  RandomStream rng(13);
  auto traj = simulate_horizon(net, schedule, rng, true);
  REQUIRE(traj.has_events);

  // every firing obeys m'(p) - m(p) = O(p) - I(p); fire() enforces it
  Marking m = net.initial;
  size_t next_event = 0;
  for (int d = 1; d <= traj.horizon; ++d) {
    while (next_event < traj.events.size() &&
           traj.events[next_event].time < d) {
      m = fire(net, m, traj.events[next_event].transition);
      ++next_event;
    }
    for (int p = 0; p < traj.num_places; ++p) CHECK(m[p] == traj.at(d, p));
  }
  CHECK(next_event == traj.events.size());
}

TEST_CASE("different seeds change the event log but not the shape") {
  ModelConfig config;
  auto net = build_two_patch_net(config);
  auto cov = synthetic_covariates(2, 10, 2);
  std::vector<BasisDaily> basis = {evaluate_basis(cov[0], config.basis),
                                   evaluate_basis(cov[1], config.basis)};
  RandomStream coeff_rng(4);
  auto theta = sample_coefficients(config.bounds, coeff_rng);
  auto schedule = make_rate_schedule(theta, basis, config, 10);

  RandomStream r42(42), r43(43);
  auto a = simulate_horizon(net, schedule, r42, true);
  auto b = simulate_horizon(net, schedule, r43, true);
  CHECK(a.horizon == b.horizon);
  CHECK(a.num_places == b.num_places);
  bool same = a.events.size() == b.events.size();
  if (same)
    for (size_t i = 0; i < a.events.size(); ++i)
      if (a.events[i].time != b.events[i].time ||
          a.events[i].transition != b.events[i].transition) {
        same = false;
        break;
      }
  CHECK_FALSE(same);
}

TEST_CASE("structural validation rejects malformed nets") {
  PetriNet dup;
  dup.places = {"A", "A"};
  dup.initial = {0, 0};
  CHECK_THROWS_AS(dup.validate(), StructuralError);

  PetriNet bad_ref;
  bad_ref.places = {"A"};
  TransitionSpec t;
  t.id = "t";
  t.inputs = {{3, 1}};
  t.outputs = {};
  t.hazard = {{HazardTerm::Kind::Constant, "r", -1, -1, {}}};
  bad_ref.transitions = {t};
  bad_ref.initial = {0};
  CHECK_THROWS_AS(bad_ref.validate(), StructuralError);
}
