#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace atomcount {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Documentation-only constants of the imaging hardware. Images are reduced to
// one integrated count per exposure, so none of these enter a calculation.
inline constexpr double kImagingMagnification = 2.62;
inline constexpr double kPixelLimitedResolution = 5e-6;    // m
inline constexpr double kSaturationIntensity = 3.576;      // mW/cm^2, isotropic

// ---------------------------------------------------------------------------
// Errors. Each maps onto one CLI exit code.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------

/// Optical and timing constants of the detection stage. Frequencies are
/// angular (rad/s).
struct DetectionParams {
    double gamma = kTwoPi * 6e6;
    double detuning = kTwoPi * 6e6;
    double s0 = 6.65;
    double eta = 0.0471;
    double tau_det = 0.09;
    double tau_hold = 0.22;

    bool operator==(const DetectionParams&) const = default;
};

/// Stochastic environment of the trap.
struct TrapParams {
    double tau_life = 540.0;       // s
    double r_load = 0.014;         // atoms/s
    double p_survival = 0.9666;    // per engineered loss step
    double alpha = 7.6e-4;         // s^(1/2)
    double bkg_var_atoms = 8.4e-4; // atoms^2

    bool operator==(const TrapParams&) const = default;
};

/// Values quoted for the reference apparatus.
DetectionParams reference_detection();
TrapParams reference_trap();

struct GroundTruth {
    int atoms_at_start = 0;
    int atoms_at_end = 0;
    int losses_in_exposure = 0;
    int loads_in_exposure = 0;
    std::vector<double> loss_times;    // absolute, s
    std::vector<double> load_times;    // absolute, s
    bool pulse_before = false;         // engineered loss applied in preceding hold
    int atoms_before_pulse = 0;
    int atoms_after_pulse = 0;

    bool operator==(const GroundTruth&) const = default;
};

struct ImageSample {
    std::int64_t index = 0;
    double start_time = 0.0;
    double exposure = 0.0;
    double photoelectrons = 0.0;
    std::optional<GroundTruth> truth;

    bool operator==(const ImageSample&) const = default;
};

struct SimulatedProvenance {
    std::uint64_t seed = 0;
    std::uint64_t run_index = 0;
    bool operator==(const SimulatedProvenance&) const = default;
};

struct IngestedProvenance {
    std::string file;
    bool operator==(const IngestedProvenance&) const = default;
};

using Provenance = std::variant<SimulatedProvenance, IngestedProvenance>;

/// One separately loaded ensemble imaged repeatedly. Pair statistics never
/// cross trace boundaries.
struct TimeTrace {
    std::vector<ImageSample> samples;
    DetectionParams params;
    Provenance provenance = SimulatedProvenance{};

    bool operator==(const TimeTrace&) const = default;
};

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

ValidationReport validate(const DetectionParams& d, const TrapParams& t);
ValidationReport validate(const TimeTrace& trace);

/// Throws ValidationError listing every violation when the report is not empty.
void require_valid(const ValidationReport& report, const std::string& what);

}  // namespace atomcount
