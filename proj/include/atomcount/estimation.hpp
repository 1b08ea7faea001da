#pragma once

#include "atomcount/core.hpp"
#include "atomcount/physics.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace atomcount::est {

// ---------------------------------------------------------------------------
// Histogram

struct SignalHistogram {
    std::vector<double> bin_edges;        // photoelectrons, size = counts.size() + 1
    std::vector<std::int64_t> counts;
    std::int64_t n_samples = 0;

    std::size_t size() const { return counts.size(); }
    double bin_width() const { return bin_edges.size() > 1 ? bin_edges[1] - bin_edges[0] : 0.0; }
    double center(std::size_t i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }
};

/// Uniform bins of width `bin_width` spanning the data, first bin centered on
/// the smallest value.
SignalHistogram histogram_of(std::span<const double> values, double bin_width);

/// Bin width is (coarse spacing)/bins_per_atom. The coarse spacing is the
/// nominal photoelectrons per atom of the first trace's DetectionParams unless
/// a hint is given.
SignalHistogram build_histogram(std::span<const TimeTrace> traces, int bins_per_atom,
                                std::optional<double> spacing_hint = std::nullopt);

struct SpacingSearch {
    /// Lag window in photoelectrons; zero means "from the first minimum of the
    /// autocorrelation" / "half the histogram span".
    double min_lag = 0.0;
    double max_lag = 0.0;
};

/// Peak-comb period from the maximum of the histogram autocorrelation.
/// Throws EstimationError when no secondary maximum exists.
double estimate_peak_spacing(const SignalHistogram& h, const SpacingSearch& search = {});

// ---------------------------------------------------------------------------
// Gaussian-mixture calibration

struct MixtureCalibration {
    std::vector<double> peak_centers;     // photoelectrons
    std::vector<double> peak_widths;      // photoelectrons (1 sigma)
    std::vector<double> peak_amplitudes;  // counts per bin at the center
    std::vector<double> center_std_errors;
    double counts_per_atom_per_second = 0.0;
    double scale_std_error = 0.0;         // of counts_per_atom_per_second
    double intercept = 0.0;               // photoelectrons
    double intercept_std_error = 0.0;
    double exposure = 0.0;                // s

    // Fit diagnostics.
    double chi2 = 0.0;
    int dof = 0;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
    std::vector<std::string> notes;
    std::vector<double> regression_residuals;  // center − (intercept + i·slope)

    double photoelectrons_per_atom() const { return counts_per_atom_per_second * exposure; }
};

/// Calibration with known scale and zero offset, e.g. for a controller that
/// trusts a previously measured rate.
MixtureCalibration ideal_calibration(double counts_per_atom_per_second, double exposure);

/// Least-squares fit of k Gaussians (free amplitude, center and width each)
/// followed by a linear regression of centers on peak index.
MixtureCalibration fit_mixture(const SignalHistogram& h, int k_peaks, double init_spacing, double exposure);

/// Number of integer levels k whose histogram maximum within ±¼ spacing of
/// intercept + k·spacing stands at least `contrast` times above the lowest
/// bin between it and each neighbour, with at least `min_count` entries.
int count_resolved_peaks(const SignalHistogram& h, double intercept, double spacing, double contrast = 2.0,
                         std::int64_t min_count = 5);

// ---------------------------------------------------------------------------
// Atom-number inference and events

struct AtomEstimate {
    double real_atoms = 0.0;
    int integer_atoms = 0;
    bool clipped_negative = false;
};

/// Nearest nonnegative integer with ties rounded up.
AtomEstimate counts_to_atoms(double signal, const MixtureCalibration& cal, double exposure);

enum class EventKind { loss, load, survival };

const char* to_string(EventKind k);

struct EventRecord {
    std::int64_t pair_index = 0;
    int n_before = 0;
    int n_after = 0;
    EventKind kind = EventKind::survival;

    int magnitude() const { return n_after > n_before ? n_after - n_before : n_before - n_after; }
};

std::vector<EventRecord> classify_transitions(const TimeTrace& trace, const MixtureCalibration& cal);

/// Per initial atom number: occurrences of each change n_after − n_before.
using EventTable = std::map<int, std::map<int, std::int64_t>>;

EventTable tabulate_events(std::span<const EventRecord> events, int max_n_before = 15);

/// Image start-to-start time of a trace; tau_det + tau_hold when fewer than
/// two samples exist.
double cycle_time(const TimeTrace& trace);

struct LifetimeEstimate {
    double tau_life = 0.0;
    double std_error = 0.0;
    bool one_sided = false;   // no loss seen: tau_life is a lower bound
    std::int64_t losses = 0;
    std::int64_t atoms_observed = 0;
};

/// P_loss = lost atoms / atoms present at the first image of each pair;
/// tau_life = cycle / P_loss with Poisson counting error.
LifetimeEstimate estimate_lifetime(std::int64_t losses, std::int64_t atoms_observed, double cycle);
LifetimeEstimate estimate_lifetime(std::span<const EventRecord> events, double cycle);

struct LoadingEstimate {
    double r_load = 0.0;
    double std_error = 0.0;
    bool one_sided = false;   // no load seen
    double upper_bound_95 = 0.0;
    std::int64_t loads = 0;
    std::int64_t n_pairs = 0;
};

LoadingEstimate estimate_loading_rate(std::int64_t loads, std::int64_t n_pairs, double cycle);
LoadingEstimate estimate_loading_rate(std::span<const EventRecord> events, std::int64_t n_pairs, double cycle);

// ---------------------------------------------------------------------------
// Shot-to-shot noise

struct VarianceRow {
    int n_atoms = 0;
    std::int64_t n_pairs = 0;
    double variance = 0.0;    // atoms^2
    double std_error = 0.0;
};

struct VarianceTable {
    std::vector<VarianceRow> rows;
    std::vector<std::string> notices;

    const VarianceRow* find(int n_atoms) const;
};

struct TwoSampleOptions {
    /// Drop pairs whose integer atom numbers differ (they are counted as
    /// loss/load events instead).
    bool exclude_transitions = false;
    std::int64_t min_pairs = 2;
};

/// Half the mean squared successive difference of the calibrated atom
/// signal, grouped by the rounded atom number of the first image in a pair.
VarianceTable two_sample_variance(std::span<const TimeTrace> traces, const MixtureCalibration& cal,
                                  const TwoSampleOptions& options = {});

/// Plain two-sample variance of a real-valued sequence.
double two_sample_variance(std::span<const double> values);

struct NoiseModelFit {
    double alpha = 0.0;
    double alpha_std_error = 0.0;
    double n_max = 0.0;
    double n_max_std_error = 0.0;
    double chi2 = 0.0;
    int dof = 0;
    physics::NoiseCoefficients coefficients;
    std::vector<VarianceRow> rows_used;
    std::vector<std::string> notices;
};

/// Raised when the data cannot separate scattering-rate noise from the fixed
/// terms; carries a one-sided bound.
class AlphaUnidentifiable : public EstimationError {
public:
    AlphaUnidentifiable(const std::string& what, double upper_bound)
        : EstimationError(what), alpha_upper_bound(upper_bound)
    {
    }
    double alpha_upper_bound;
};

/// Loss variance is loss_fraction·N·τ_det/τ_life. One half is the standard
/// single-atom loss term over all pairs. When pairs with an integer step are
/// excluded, only losses in the first half of the first exposure or the
/// second half of the next one remain, which leaves 1/24.
inline constexpr double kLossFractionAllPairs = 0.5;
inline constexpr double kLossFractionStepsExcluded = 1.0 / 24.0;

/// Weighted least squares for alpha alone; bkg, tau_life and the detected
/// per-atom rate stay fixed. The rate defaults to eta·R_sc of `d`. Errors are
/// scaled up by sqrt(chi2/dof) when the fit is worse than its weights imply.
NoiseModelFit fit_noise_model(const VarianceTable& table, const DetectionParams& d, const TrapParams& t,
                              int n_cut = 36, std::optional<double> photoelectron_rate = std::nullopt,
                              double loss_fraction = kLossFractionAllPairs);

// ---------------------------------------------------------------------------
// Integer self-calibration

struct SelfCalibrationOptions {
    int scan_points = 2048;
    double golden_tolerance = 1e-12;  // relative
};

struct SelfCalibration {
    double scale = 0.0;               // photoelectrons per atom
    double objective = 0.0;           // Σ dist(signal/scale, nearest integer)²
    double runner_up_scale = 0.0;
    double runner_up_objective = 0.0; // +inf when the window holds one minimum
    int distinct_levels = 0;
};

/// Scale in nominal·(1 ± window) that puts every signal closest to an integer.
/// Throws EstimationError when the minimum is not unique.
SelfCalibration self_calibrate_integer(std::span<const double> signals, double nominal_scale, double window,
                                       const SelfCalibrationOptions& options = {});

}  // namespace atomcount::est
