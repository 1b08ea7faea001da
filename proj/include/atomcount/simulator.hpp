#pragma once

#include "atomcount/core.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

namespace atomcount::sim {

struct FixedAtoms {
    int count = 0;
    bool operator==(const FixedAtoms&) const = default;
};

struct PoissonAtoms {
    double mean = 0.0;
    bool operator==(const PoissonAtoms&) const = default;
};

/// Uniform integer in [low, high]; broad loading for calibration campaigns.
struct UniformAtoms {
    int low = 0;
    int high = 0;
    bool operator==(const UniformAtoms&) const = default;
};

using InitialAtoms = std::variant<FixedAtoms, PoissonAtoms, UniformAtoms>;

struct SimConfig {
    DetectionParams detection;
    TrapParams trap;
    int n_images = 11;
    InitialAtoms initial_atoms = PoissonAtoms{15.0};
    /// Ground-truth detected rate per atom; η·R_sc when unset.
    std::optional<double> counts_per_atom_per_second;
    std::uint64_t seed = 0;
    /// Linear relative drift of the per-atom rate with campaign time (1/s).
    /// Zero except when exercising self-calibration.
    double scale_drift_per_second = 0.0;
};

/// Engineered loss: each atom survives independently with trap.p_survival,
/// applied at `placement` into the hold period.
struct LossPulse {
    bool enabled = false;
    double duration = 3e-3;
    double placement = 0.0;
};

ValidationReport validate(const SimConfig& cfg);
ValidationReport validate(const LossPulse& pulse, const DetectionParams& d);

double effective_counts_per_atom_per_second(const SimConfig& cfg);

/// Per-run stream seed, a pure function of (seed, run_index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t run_index);

/// Stepwise continuous-time model of one loaded ensemble: atoms are lost at
/// rate 1/τ_life each, arrive at rate R_load, and emit Poisson photoelectrons
/// while present during an exposure.
class Experiment {
public:
    Experiment(const SimConfig& cfg, std::uint64_t run_index);

    /// Acquires the next image starting at the current time.
    ImageSample expose();

    /// Waits tau_hold, optionally applying an engineered loss pulse.
    void hold(const LossPulse* pulse);

    int atoms() const { return atoms_; }
    double time() const { return time_; }
    std::uint64_t run_index() const { return run_index_; }

private:
    struct Evolution {
        double atom_seconds = 0.0;
        int losses = 0;
        int loads = 0;
        std::vector<double> loss_times;
        std::vector<double> load_times;
    };

    Evolution evolve(double duration);
    double rate_scale() const;

    SimConfig cfg_;
    std::uint64_t run_index_;
    std::mt19937_64 rng_;
    double counts_rate_;
    double campaign_offset_;
    int atoms_ = 0;
    double time_ = 0.0;
    std::int64_t next_index_ = 0;
    bool pending_pulse_ = false;
    int atoms_before_pulse_ = 0;
    int atoms_after_pulse_ = 0;
};

/// Throws ValidationError on invalid configuration.
TimeTrace simulate_trace(const SimConfig& cfg, const std::optional<LossPulse>& pulse = std::nullopt,
                         std::uint64_t run_index = 0);

/// Independent runs with derived seeds; `jobs` > 1 runs traces on worker
/// threads with identical results.
std::vector<TimeTrace> simulate_detection_campaign(const SimConfig& cfg, int n_runs,
                                                   const std::optional<LossPulse>& pulse = std::nullopt,
                                                   int jobs = 1);

}  // namespace atomcount::sim
