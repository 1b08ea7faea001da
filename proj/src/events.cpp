#include "atomcount/estimation.hpp"

#include <cmath>

namespace atomcount::est {

AtomEstimate counts_to_atoms(double signal, const MixtureCalibration& cal, double exposure)
{
    AtomEstimate e;
    e.real_atoms = (signal - cal.intercept) / (cal.counts_per_atom_per_second * exposure);
    const double rounded = std::floor(e.real_atoms + 0.5);
    if (rounded < 0) {
        e.clipped_negative = true;
        e.integer_atoms = 0;
    }
    else {
        e.clipped_negative = e.real_atoms < 0;
        e.integer_atoms = static_cast<int>(rounded);
    }
    return e;
}

const char* to_string(EventKind k)
{
    switch (k) {
    case EventKind::loss: return "loss";
    case EventKind::load: return "load";
    case EventKind::survival: return "survival";
    }
    return "?";
}

std::vector<EventRecord> classify_transitions(const TimeTrace& trace, const MixtureCalibration& cal)
{
    std::vector<EventRecord> out;
    const auto& s = trace.samples;
    if (s.size() < 2) return out;
    out.reserve(s.size() - 1);
    int prev = counts_to_atoms(s[0].photoelectrons, cal, s[0].exposure).integer_atoms;
    for (std::size_t j = 1; j < s.size(); ++j) {
        const int next = counts_to_atoms(s[j].photoelectrons, cal, s[j].exposure).integer_atoms;
        EventRecord e;
        e.pair_index = static_cast<std::int64_t>(j - 1);
        e.n_before = prev;
        e.n_after = next;
        e.kind = next < prev ? EventKind::loss : next > prev ? EventKind::load : EventKind::survival;
        out.push_back(e);
        prev = next;
    }
    return out;
}

EventTable tabulate_events(std::span<const EventRecord> events, int max_n_before)
{
    EventTable table;
    for (const auto& e : events) {
        if (e.n_before > max_n_before) continue;
        table[e.n_before][e.n_after - e.n_before] += 1;
    }
    return table;
}

double cycle_time(const TimeTrace& trace)
{
    const auto& s = trace.samples;
    if (s.size() < 2) return trace.params.tau_det + trace.params.tau_hold;
    return (s.back().start_time - s.front().start_time) / static_cast<double>(s.size() - 1);
}

LifetimeEstimate estimate_lifetime(std::int64_t losses, std::int64_t atoms_observed, double cycle)
{
    if (atoms_observed < 1) throw EstimationError("lifetime estimate needs at least one observed atom");
    if (!(cycle > 0)) throw EstimationError("cycle time must be positive");
    LifetimeEstimate e;
    e.losses = losses;
    e.atoms_observed = atoms_observed;
    if (losses == 0) {
        e.one_sided = true;
        e.tau_life = cycle * static_cast<double>(atoms_observed);
        return e;
    }
    const double p_loss = static_cast<double>(losses) / static_cast<double>(atoms_observed);
    e.tau_life = cycle / p_loss;
    // Relative error of a Poisson count carries straight through the inverse.
    e.std_error = e.tau_life / std::sqrt(static_cast<double>(losses));
    return e;
}

LifetimeEstimate estimate_lifetime(std::span<const EventRecord> events, double cycle)
{
    std::int64_t losses = 0, atoms = 0;
    for (const auto& e : events) {
        atoms += e.n_before;
        if (e.kind == EventKind::loss) losses += e.n_before - e.n_after;
    }
    return estimate_lifetime(losses, atoms, cycle);
}

LoadingEstimate estimate_loading_rate(std::int64_t loads, std::int64_t n_pairs, double cycle)
{
    if (n_pairs < 1) throw EstimationError("loading-rate estimate needs at least one image pair");
    if (!(cycle > 0)) throw EstimationError("cycle time must be positive");
    LoadingEstimate e;
    e.loads = loads;
    e.n_pairs = n_pairs;
    const double exposure_time = static_cast<double>(n_pairs) * cycle;
    e.r_load = static_cast<double>(loads) / exposure_time;
    e.std_error = std::sqrt(static_cast<double>(loads)) / exposure_time;
    // Poisson 95% upper limit; -ln(0.05) events when none were seen.
    e.upper_bound_95 = (loads == 0 ? -std::log(0.05) : loads + 1.645 * std::sqrt(static_cast<double>(loads))) /
                       exposure_time;
    e.one_sided = loads == 0;
    return e;
}

LoadingEstimate estimate_loading_rate(std::span<const EventRecord> events, std::int64_t n_pairs, double cycle)
{
    std::int64_t loads = 0;
    for (const auto& e : events) {
        if (e.kind == EventKind::load) loads += e.n_after - e.n_before;
    }
    return estimate_loading_rate(loads, n_pairs, cycle);
}

}  // namespace atomcount::est
