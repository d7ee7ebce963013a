#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spn/common.hpp"

namespace spn {

// Token counts aligned with PetriNet::places. All counts stay >= 0: the
// simulator only fires enabled transitions.
using Marking = std::vector<int64_t>;

// One additive hazard contribution. A transition's hazard is the sum of
// its terms; each term is one of a closed set of laws, bound to a named
// daily rate:
//   Constant   r
//   PerCapita  r * X
//   Bilinear   r * X * Y / N   (N = token sum over `norm`; empty -> no
//                               normalization, i.e. mass action; N = 0
//                               guards to hazard 0)
struct HazardTerm {
  enum class Kind { Constant, PerCapita, Bilinear };
  Kind kind = Kind::Constant;
  std::string rate;
  int x = -1;
  int y = -1;
  std::vector<int> norm;
};

struct TransitionSpec {
  std::string id;
  std::vector<std::pair<int, int64_t>> inputs;   // (place, tokens consumed)
  std::vector<std::pair<int, int64_t>> outputs;  // (place, tokens produced)
  std::vector<HazardTerm> hazard;
};

struct PetriNet {
  std::vector<std::string> places;
  std::vector<TransitionSpec> transitions;
  Marking initial;

  int place_index(const std::string& name) const;
  int transition_index(const std::string& id) const;

  // Structural checks: unique identifiers, arcs and hazards reference
  // declared places, initial marking has one count per place.
  void validate() const;
};

// One day's rate values, unit day^-1, keyed by name.
using DayRates = std::map<std::string, double>;

struct Event {
  double time;
  int transition;
};

// End-of-day snapshots for days 1..horizon; the initial marking is not a
// row. Event retention is optional and off by default.
struct Trajectory {
  int horizon = 0;
  int num_places = 0;
  std::vector<int64_t> states;  // horizon x num_places, row-major
  std::vector<Event> events;
  bool has_events = false;

  int64_t at(int day, int place) const {  // day is 1-based
    return states[static_cast<size_t>(day - 1) * num_places + place];
  }
};

Marking marking_from_map(const PetriNet& net,
                         const std::map<std::string, int64_t>& counts);

bool enabled(const PetriNet& net, const Marking& m, int t);
bool enabled(const PetriNet& net, const Marking& m, const std::string& t);

// Firing equation m'(p) = m(p) - I(t)(p) + O(t)(p); the input marking is
// left untouched. Firing a disabled transition is a contract violation.
Marking fire(const PetriNet& net, const Marking& m, int t);
Marking fire(const PetriNet& net, const Marking& m, const std::string& t);

double transition_hazard(const PetriNet& net, const Marking& m,
                         const TransitionSpec& tr, const DayRates& rates);
double total_hazard(const PetriNet& net, const Marking& m,
                    const DayRates& rates);

// Gillespie direct method over [t0, t1) with rates held constant.
// Exponential waiting times at the total hazard, transition chosen
// proportionally to its hazard. Deterministic given the stream.
std::pair<Marking, std::vector<Event>> ssa_day(const PetriNet& net,
                                               const Marking& m0,
                                               const DayRates& rates,
                                               double t0, double t1,
                                               RandomStream& rng,
                                               bool log_events = true);

// Chains ssa_day over days 1..T (T = schedule.size()), snapshotting the
// marking at every day boundary.
Trajectory simulate_horizon(const PetriNet& net,
                            const std::vector<DayRates>& schedule,
                            RandomStream& rng, bool log_events = false);

}  // namespace spn
