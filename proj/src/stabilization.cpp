#include "atomcount/stabilization.hpp"

#include "atomcount/parallel.hpp"

#include <cmath>

namespace atomcount::stab {

ValidationReport validate(const ControllerConfig& cfg, const DetectionParams& d)
{
    ValidationReport r;
    auto& v = r.violations;
    if (!(cfg.threshold > 0)) v.emplace_back("threshold > 0");
    if (cfg.target < 0) v.emplace_back("target >= 0");
    if (cfg.n_verify < 0) v.emplace_back("n_verify >= 0");
    if (cfg.max_steps < 1) v.emplace_back("max_steps >= 1");
    if (cfg.consecutive_below < 1) v.emplace_back("consecutive_below >= 1");
    if (cfg.pulse.enabled) {
        const auto p = sim::validate(cfg.pulse, d);
        v.insert(v.end(), p.violations.begin(), p.violations.end());
    }
    if (cfg.calibration && !(cfg.calibration->counts_per_atom_per_second > 0)) {
        v.emplace_back("calibration counts_per_atom_per_second > 0");
    }
    return r;
}

const char* to_string(RunStatus s)
{
    return s == RunStatus::stopped ? "stopped" : "exhausted";
}

ControllerRun run_controller(const ControllerConfig& cfg, const sim::SimConfig& sim, std::uint64_t run_index)
{
    require_valid(sim::validate(sim), "simulation config");
    require_valid(validate(cfg, sim.detection), "controller config");

    const auto cal = cfg.calibration ? *cfg.calibration
                                     : est::ideal_calibration(sim::effective_counts_per_atom_per_second(sim),
                                                              sim.detection.tau_det);
    sim::Experiment exp(sim, run_index);
    ControllerRun run;
    run.trace.params = sim.detection;
    run.trace.provenance = SimulatedProvenance{sim.seed, run_index};
    auto& out = run.outcome;
    out.status = RunStatus::exhausted;

    bool pulse_next = false;
    int below = 0;
    int previous = 0;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        if (step > 1) {
            exp.hold(pulse_next ? &cfg.pulse : nullptr);
            if (pulse_next) ++out.pulses_applied;
        }
        const auto sample = exp.expose();
        run.trace.samples.push_back(sample);
        const auto n = est::counts_to_atoms(sample.photoelectrons, cal, sample.exposure);
        if (pulse_next) out.pulsed_transitions.push_back({previous, n.integer_atoms});
        previous = n.integer_atoms;
        out.steps = step;

        if (n.real_atoms < cfg.threshold) {
            if (below == 0) {
                out.threshold_image = sample.index;
                out.reported_number = n.integer_atoms;
                out.reported_real = n.real_atoms;
            }
            ++below;
            pulse_next = false;
            if (below >= cfg.consecutive_below) {
                out.status = RunStatus::stopped;
                break;
            }
        }
        else {
            below = 0;
            out.threshold_image = -1;
            pulse_next = cfg.pulse.enabled;
        }
    }

    if (out.status == RunStatus::stopped) {
        for (int i = 0; i < cfg.n_verify; ++i) {
            exp.hold(nullptr);
            const auto sample = exp.expose();
            run.trace.samples.push_back(sample);
            out.verification_numbers.push_back(
                est::counts_to_atoms(sample.photoelectrons, cal, sample.exposure).integer_atoms);
        }
    }
    return run;
}

std::vector<ControllerRun> run_campaign(const ControllerConfig& cfg, const sim::SimConfig& sim, int n_runs, int jobs)
{
    if (n_runs < 0) throw ValidationError("n_runs >= 0");
    std::vector<ControllerRun> runs(static_cast<std::size_t>(n_runs));
    parallel_for(runs.size(), jobs, [&](std::size_t i) { runs[i] = run_controller(cfg, sim, i); });
    return runs;
}

std::int64_t TransitionTable::total() const
{
    std::int64_t n = 0;
    for (const auto& [in, row] : counts) {
        for (const auto& [o, c] : row) n += c;
    }
    return n;
}

TransitionTable transition_table(std::span<const ControllerRun> runs)
{
    TransitionTable t;
    for (const auto& r : runs) {
        for (const auto& tr : r.outcome.pulsed_transitions) t.add(tr.n_in, tr.n_out);
    }
    return t;
}

SurvivalFit fit_survival_probability(const TransitionTable& t, int n_in_min, int n_in_max)
{
    SurvivalFit f;
    for (const auto& [n_in, row] : t.counts) {
        if (n_in < std::max(n_in_min, 1) || n_in > n_in_max) continue;
        for (const auto& [n_out, c] : row) {
            f.trials += static_cast<std::int64_t>(n_in) * c;
            f.survivors += static_cast<std::int64_t>(n_out) * c;
        }
    }
    if (f.trials == 0) throw EstimationError("survival fit needs at least one transition from a nonempty trap");
    const auto n = static_cast<double>(f.trials);
    f.p_s = static_cast<double>(f.survivors) / n;
    f.std_error = std::sqrt(std::max(f.p_s * (1.0 - f.p_s), 0.0) / n);
    return f;
}

double binomial_pmf(int n, int k, double p)
{
    if (k < 0 || k > n) return 0.0;
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(log_choose + k * std::log(p) + (n - k) * std::log1p(-p));
}

std::vector<double> truncated_final_distribution(double p_s, int pre_threshold_n, int target)
{
    if (!(p_s > 0 && p_s < 1)) throw ValidationError("truncated distribution needs 0 < p_s < 1");
    if (target < 0 || pre_threshold_n <= target) throw ValidationError("truncated distribution needs n > target >= 0");
    std::vector<double> p(static_cast<std::size_t>(target) + 1);
    double norm = 0.0;
    for (int k = 0; k <= target; ++k) {
        p[static_cast<std::size_t>(k)] = binomial_pmf(pre_threshold_n, k, p_s);
        norm += p[static_cast<std::size_t>(k)];
    }
    for (double& x : p) x /= norm;
    return p;
}

double max_fidelity(double p_s, int target)
{
    if (target < 0) throw ValidationError("target >= 0");
    if (p_s >= 1.0) return 1.0;
    if (p_s <= 0.0) return target == 0 ? 1.0 : 0.0;
    return truncated_final_distribution(p_s, target + 1, target)[static_cast<std::size_t>(target)];
}

namespace {

Suppression finish(double mean, double variance, ShotNoiseReference ref, int target)
{
    Suppression s;
    s.mean = mean;
    s.variance = variance;
    const double reference = ref == ShotNoiseReference::sample_mean ? mean : static_cast<double>(target);
    if (!(variance > 0)) {
        s.infinite = true;
        s.db = std::numeric_limits<double>::infinity();
    }
    else {
        s.db = 10.0 * std::log10(reference / variance);
    }
    return s;
}

}  // namespace

Suppression suppression_db(const std::map<int, std::int64_t>& histogram, ShotNoiseReference ref, int target)
{
    std::int64_t n = 0;
    double sum = 0.0;
    for (const auto& [k, c] : histogram) {
        n += c;
        sum += static_cast<double>(k) * c;
    }
    if (n < 2) throw EstimationError("suppression needs at least two runs");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& [k, c] : histogram) ss += c * (k - mean) * (k - mean);
    return finish(mean, ss / static_cast<double>(n - 1), ref, target);
}

Suppression suppression_db(std::span<const double> distribution, ShotNoiseReference ref, int target)
{
    double mass = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < distribution.size(); ++k) {
        mass += distribution[k];
        mean += static_cast<double>(k) * distribution[k];
    }
    if (!(mass > 0)) throw EstimationError("suppression of an empty distribution");
    mean /= mass;
    double var = 0.0;
    for (std::size_t k = 0; k < distribution.size(); ++k) {
        const double d = static_cast<double>(k) - mean;
        var += d * d * distribution[k];
    }
    return finish(mean, var / mass, ref, target);
}

Interval wilson_interval(std::int64_t k, std::int64_t n, double z)
{
    if (n <= 0) return {0.0, 1.0};
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double center = (p + z2 / (2 * nn)) / (1 + z2 / nn);
    const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

StabilizationReport summarize(const std::map<int, std::int64_t>& histogram, int target)
{
    StabilizationReport r;
    r.target = target;
    r.final_number_histogram = histogram;
    for (const auto& [k, c] : histogram) r.n_runs += c;
    if (r.n_runs < 1) throw EstimationError("no completed stabilization runs to summarize");

    const auto it = histogram.find(target);
    const std::int64_t hits = it == histogram.end() ? 0 : it->second;
    const auto n = static_cast<double>(r.n_runs);
    r.fidelity = static_cast<double>(hits) / n;
    r.fidelity_std_error = std::sqrt(r.fidelity * (1 - r.fidelity) / n);
    r.fidelity_interval = wilson_interval(hits, r.n_runs);

    double sum = 0.0;
    for (const auto& [k, c] : histogram) sum += static_cast<double>(k) * c;
    r.mean_final = sum / n;
    if (r.n_runs >= 2) {
        r.suppression = suppression_db(histogram);
        r.variance_final = r.suppression.variance;
    }
    else {
        r.suppression.mean = r.mean_final;
    }
    return r;
}

StabilizationReport summarize(std::span<const ControllerRun> runs, int target)
{
    std::map<int, std::int64_t> histogram;
    std::int64_t exhausted = 0;
    for (const auto& run : runs) {
        if (run.outcome.status == RunStatus::exhausted) {
            ++exhausted;
            continue;
        }
        histogram[run.outcome.reported_number] += 1;
    }
    auto r = summarize(histogram, target);
    r.n_exhausted = exhausted;
    r.transitions = transition_table(runs);
    if (r.transitions.total() > 0) {
        try {
            r.p_survival_fit = fit_survival_probability(r.transitions);
        }
        catch (const EstimationError&) {
            // Only transitions out of an empty trap: nothing to fit.
        }
    }
    return r;
}

}  // namespace atomcount::stab
