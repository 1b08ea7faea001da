#pragma once

#include "atomcount/core.hpp"

namespace atomcount::physics {

/// Two-level scattering rate Γ/2 · s0 / (1 + s0 + 4Δ²/Γ²), photons/s.
double scattering_rate(const DetectionParams& d);

/// Photoelectrons collected per atom in one exposure: R_sc · τ_det · η.
double photoelectrons_per_atom(const DetectionParams& d);

/// Per-exposure variance contributions in squared atom-number units.
struct NoiseBudget {
    double bkg = 0.0;
    double psn = 0.0;
    double srn = 0.0;
    double loss = 0.0;
    double total = 0.0;
};

/// Coefficients of the noise model σ²(N) = bkg + linear·N + quadratic·N².
struct NoiseCoefficients {
    double bkg = 0.0;
    double linear = 0.0;
    double quadratic = 0.0;

    double total(double n_atoms) const { return bkg + n_atoms * (linear + n_atoms * quadratic); }
};

/// `photoelectron_rate` is the per-atom detected rate (η·R_sc by default, or a
/// calibrated counts/atom/s).
NoiseCoefficients noise_coefficients(double photoelectron_rate, const DetectionParams& d,
                                     const TrapParams& t);
NoiseCoefficients noise_coefficients(const DetectionParams& d, const TrapParams& t);

NoiseBudget noise_budget(double n_atoms, const DetectionParams& d, const TrapParams& t);
NoiseBudget noise_budget(double n_atoms, double photoelectron_rate, const DetectionParams& d,
                         const TrapParams& t);

/// Positive root of σ²(N) = 1. Throws EstimationError when bkg ≥ 1 or when
/// no root exists (both slope terms zero).
double max_resolvable_atoms(const NoiseCoefficients& c);
double max_resolvable_atoms(const DetectionParams& d, const TrapParams& t);

/// d ln R_sc / d s0 and d ln R_sc / dΔ (Δ angular).
double dlog_rate_ds0(const DetectionParams& d);
double dlog_rate_ddetuning(const DetectionParams& d);

struct EquivalentNoise {
    double detuning_noise_hz = 0.0;  // ordinary-frequency laser noise
    double saturation_noise = 0.0;   // absolute deviation of s0
    double saturation_noise_relative = 0.0;  // saturation_noise / s0
};

/// Converts the per-exposure relative rate deviation α/√τ_det into the laser
/// detuning noise or s0 deviation that would produce it on its own.
EquivalentNoise equivalent_noise_sources(double alpha, const DetectionParams& d);

}  // namespace atomcount::physics
