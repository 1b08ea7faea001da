#pragma once

#include "atomcount/core.hpp"
#include "atomcount/estimation.hpp"
#include "atomcount/simulator.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace atomcount::stab {

struct ControllerConfig {
    double threshold = 7.5;   // stop once the measured number falls below this
    int target = 7;
    sim::LossPulse pulse{true, 3e-3, 0.0};
    int n_verify = 4;
    int max_steps = 100;
    /// Successive sub-threshold images required before stopping. 1 stops at
    /// the first crossing; 5 is the "hit or undercut for five successive
    /// images" variant.
    int consecutive_below = 1;
    /// Real-time calibration; the simulator's ground-truth scale when unset.
    std::optional<est::MixtureCalibration> calibration;
};

ValidationReport validate(const ControllerConfig& cfg, const DetectionParams& d);

enum class RunStatus { stopped, exhausted };

const char* to_string(RunStatus s);

struct Transition {
    int n_in = 0;
    int n_out = 0;
};

struct StabilizationOutcome {
    RunStatus status = RunStatus::stopped;
    int steps = 0;                       // images up to and including the stop image
    int pulses_applied = 0;
    std::int64_t threshold_image = -1;   // index of the first sub-threshold image that ended the run
    int reported_number = 0;             // integer estimate at threshold_image
    double reported_real = 0.0;
    std::vector<int> verification_numbers;
    std::vector<Transition> pulsed_transitions;  // measured numbers across each loss step
};

struct ControllerRun {
    TimeTrace trace;
    StabilizationOutcome outcome;
};

/// Expose → estimate → pulse-or-stop loop, then n_verify pulse-free images.
ControllerRun run_controller(const ControllerConfig& cfg, const sim::SimConfig& sim, std::uint64_t run_index = 0);

std::vector<ControllerRun> run_campaign(const ControllerConfig& cfg, const sim::SimConfig& sim, int n_runs,
                                        int jobs = 1);

/// counts[n_in][n_out] over single loss steps.
struct TransitionTable {
    std::map<int, std::map<int, std::int64_t>> counts;

    void add(int n_in, int n_out, std::int64_t times = 1) { counts[n_in][n_out] += times; }
    std::int64_t total() const;
};

TransitionTable transition_table(std::span<const ControllerRun> runs);

struct SurvivalFit {
    double p_s = 0.0;
    double std_error = 0.0;
    std::int64_t trials = 0;     // Σ n_in
    std::int64_t survivors = 0;  // Σ n_out
};

/// Joint binomial maximum likelihood over rows with n_in in [n_in_min,
/// n_in_max]: p = Σn_out / Σn_in, error from the Fisher information.
SurvivalFit fit_survival_probability(const TransitionTable& t, int n_in_min = 1,
                                     int n_in_max = std::numeric_limits<int>::max());

/// Binomial pmf C(n,k) p^k (1-p)^(n-k).
double binomial_pmf(int n, int k, double p);

/// Distribution of the first count at or below `target` reached from
/// `pre_threshold_n` in one loss step, indices 0..target.
std::vector<double> truncated_final_distribution(double p_s, int pre_threshold_n, int target);

/// Probability that the last step from target+1 lands exactly on target.
double max_fidelity(double p_s, int target);

enum class ShotNoiseReference { sample_mean, target };

struct Suppression {
    double db = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    bool infinite = false;   // zero variance
};

/// 10·log10(reference / variance) over a histogram of final numbers, using the
/// unbiased sample variance.
Suppression suppression_db(const std::map<int, std::int64_t>& histogram,
                           ShotNoiseReference ref = ShotNoiseReference::sample_mean, int target = 0);

/// Same quantity for an exact distribution p[k] over k = 0..size-1.
Suppression suppression_db(std::span<const double> distribution,
                           ShotNoiseReference ref = ShotNoiseReference::sample_mean, int target = 0);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

/// 68.3 % Wilson score interval for k successes in n trials.
Interval wilson_interval(std::int64_t k, std::int64_t n, double z = 1.0);

struct StabilizationReport {
    std::map<int, std::int64_t> final_number_histogram;
    int target = 0;
    std::int64_t n_runs = 0;       // completed runs
    std::int64_t n_exhausted = 0;
    double fidelity = 0.0;
    double fidelity_std_error = 0.0;
    Interval fidelity_interval;
    Suppression suppression;
    double mean_final = 0.0;
    double variance_final = 0.0;
    std::optional<SurvivalFit> p_survival_fit;
    TransitionTable transitions;
};

/// Throws EstimationError when no run completed.
StabilizationReport summarize(std::span<const ControllerRun> runs, int target);

/// From a bare histogram of final numbers (no transitions).
StabilizationReport summarize(const std::map<int, std::int64_t>& histogram, int target);

}  // namespace atomcount::stab
