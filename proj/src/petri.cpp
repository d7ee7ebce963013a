#include "spn/petri.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace spn {

namespace {

double resolve_rate(const DayRates& rates, const std::string& name) {
  auto it = rates.find(name);
  if (it == rates.end())
    throw ConfigError("no rate binding for '" + name + "'");
  return it->second;
}

double term_value(const HazardTerm& term, const Marking& m, double rate) {
  switch (term.kind) {
    case HazardTerm::Kind::Constant:
      return rate;
    case HazardTerm::Kind::PerCapita:
      return rate * static_cast<double>(m[term.x]);
    case HazardTerm::Kind::Bilinear: {
      double v = rate * static_cast<double>(m[term.x]) *
                 static_cast<double>(m[term.y]);
      if (!term.norm.empty()) {
        int64_t n = 0;
        for (int p : term.norm) n += m[p];
        if (n == 0) return 0.0;
        v /= static_cast<double>(n);
      }
      return v;
    }
  }
  return 0.0;
}

// Per-transition rate values resolved once per day so the inner SSA loop
// does no map lookups.
struct ResolvedHazards {
  std::vector<std::vector<double>> term_rates;  // per transition, per term

  ResolvedHazards(const PetriNet& net, const DayRates& rates) {
    term_rates.resize(net.transitions.size());
    for (size_t t = 0; t < net.transitions.size(); ++t) {
      for (const auto& term : net.transitions[t].hazard)
        term_rates[t].push_back(resolve_rate(rates, term.rate));
    }
  }

  double hazard(const PetriNet& net, const Marking& m, size_t t) const {
    const auto& tr = net.transitions[t];
    double h = 0.0;
    for (size_t k = 0; k < tr.hazard.size(); ++k)
      h += term_value(tr.hazard[k], m, term_rates[t][k]);
    return h;
  }
};

void apply_firing(const TransitionSpec& tr, Marking& m) {
  for (const auto& [p, c] : tr.inputs) m[p] -= c;
  for (const auto& [p, c] : tr.outputs) m[p] += c;
}

}  // namespace

int PetriNet::place_index(const std::string& name) const {
  for (size_t i = 0; i < places.size(); ++i)
    if (places[i] == name) return static_cast<int>(i);
  throw StructuralError("unknown place '" + name + "'");
}

int PetriNet::transition_index(const std::string& id) const {
  for (size_t i = 0; i < transitions.size(); ++i)
    if (transitions[i].id == id) return static_cast<int>(i);
  throw StructuralError("unknown transition '" + id + "'");
}

void PetriNet::validate() const {
  std::set<std::string> seen;
  for (const auto& p : places)
    if (!seen.insert(p).second)
      throw StructuralError("duplicate place '" + p + "'");
  seen.clear();
  for (const auto& t : transitions)
    if (!seen.insert(t.id).second)
      throw StructuralError("duplicate transition '" + t.id + "'");

  auto check_place = [this](int p, const std::string& ctx) {
    if (p < 0 || p >= static_cast<int>(places.size()))
      throw StructuralError("place index out of range in " + ctx);
  };
  for (const auto& t : transitions) {
    for (const auto& [p, c] : t.inputs) {
      check_place(p, t.id);
      if (c <= 0) throw StructuralError("non-positive arc weight in " + t.id);
    }
    for (const auto& [p, c] : t.outputs) {
      check_place(p, t.id);
      if (c <= 0) throw StructuralError("non-positive arc weight in " + t.id);
    }
    for (const auto& term : t.hazard) {
      if (term.kind != HazardTerm::Kind::Constant) check_place(term.x, t.id);
      if (term.kind == HazardTerm::Kind::Bilinear) {
        check_place(term.y, t.id);
        for (int p : term.norm) check_place(p, t.id);
      }
    }
  }
  if (initial.size() != places.size())
    throw StructuralError("initial marking size does not match places");
  for (int64_t c : initial)
    if (c < 0) throw StructuralError("negative initial token count");
}

Marking marking_from_map(const PetriNet& net,
                         const std::map<std::string, int64_t>& counts) {
  Marking m(net.places.size(), 0);
  for (const auto& [name, c] : counts) m[net.place_index(name)] = c;
  return m;
}

bool enabled(const PetriNet& net, const Marking& m, int t) {
  if (t < 0 || t >= static_cast<int>(net.transitions.size()))
    throw StructuralError("transition index out of range");
  for (const auto& [p, c] : net.transitions[t].inputs)
    if (m[p] < c) return false;
  return true;
}

bool enabled(const PetriNet& net, const Marking& m, const std::string& t) {
  return enabled(net, m, net.transition_index(t));
}

Marking fire(const PetriNet& net, const Marking& m, int t) {
  if (!enabled(net, m, t))
    throw ContractError("firing disabled transition '" +
                        net.transitions[t].id + "'");
  Marking out = m;
  apply_firing(net.transitions[t], out);
  return out;
}

Marking fire(const PetriNet& net, const Marking& m, const std::string& t) {
  return fire(net, m, net.transition_index(t));
}

double transition_hazard(const PetriNet& net, const Marking& m,
                         const TransitionSpec& tr, const DayRates& rates) {
  (void)net;
  double h = 0.0;
  for (const auto& term : tr.hazard)
    h += term_value(term, m, resolve_rate(rates, term.rate));
  return h;
}

double total_hazard(const PetriNet& net, const Marking& m,
                    const DayRates& rates) {
  double sum = 0.0;
  for (const auto& tr : net.transitions)
    sum += transition_hazard(net, m, tr, rates);
  return sum;
}

std::pair<Marking, std::vector<Event>> ssa_day(const PetriNet& net,
                                               const Marking& m0,
                                               const DayRates& rates,
                                               double t0, double t1,
                                               RandomStream& rng,
                                               bool log_events) {
  if (!(t1 > t0)) throw ValidationError("ssa_day: t1 must exceed t0");
  ResolvedHazards resolved(net, rates);

  Marking m = m0;
  std::vector<Event> events;
  std::vector<double> hazards(net.transitions.size(), 0.0);
  double clock = t0;

  for (;;) {
    double total = 0.0;
    for (size_t t = 0; t < net.transitions.size(); ++t) {
      double h = resolved.hazard(net, m, t);
      if (!(h >= 0.0) || !std::isfinite(h))
        throw NumericError("hazard of '" + net.transitions[t].id +
                           "' is negative or non-finite");
      hazards[t] = h;
      total += h;
    }
    if (total <= 0.0) break;

    clock += rng.exponential(total);
    if (clock >= t1) break;

    // direct-method selection, proportional to hazard
    double r = rng.uniform() * total;
    size_t chosen = net.transitions.size() - 1;
    double acc = 0.0;
    for (size_t t = 0; t < net.transitions.size(); ++t) {
      acc += hazards[t];
      if (r < acc) {
        chosen = t;
        break;
      }
    }
    apply_firing(net.transitions[chosen], m);
    if (log_events) events.push_back({clock, static_cast<int>(chosen)});
  }
  return {std::move(m), std::move(events)};
}

Trajectory simulate_horizon(const PetriNet& net,
                            const std::vector<DayRates>& schedule,
                            RandomStream& rng, bool log_events) {
  const int horizon = static_cast<int>(schedule.size());
  const int num_places = static_cast<int>(net.places.size());

  Trajectory traj;
  traj.horizon = horizon;
  traj.num_places = num_places;
  traj.has_events = log_events;
  traj.states.resize(static_cast<size_t>(horizon) * num_places);

  Marking m = net.initial;
  for (int d = 0; d < horizon; ++d) {
    auto [next, events] = ssa_day(net, m, schedule[d], d, d + 1.0, rng,
                                  log_events);
    m = std::move(next);
    if (log_events)
      traj.events.insert(traj.events.end(), events.begin(), events.end());
    std::copy(m.begin(), m.end(),
              traj.states.begin() + static_cast<size_t>(d) * num_places);
  }
  return traj;
}

}  // namespace spn
