#include "atomcount/physics.hpp"

#include <cmath>

namespace atomcount::physics {

namespace {

double saturation_denominator(const DetectionParams& d)
{
    const double x = d.detuning / d.gamma;
    return 1.0 + d.s0 + 4.0 * x * x;
}

}  // namespace

double scattering_rate(const DetectionParams& d)
{
    return 0.5 * d.gamma * d.s0 / saturation_denominator(d);
}

double photoelectrons_per_atom(const DetectionParams& d)
{
    return scattering_rate(d) * d.tau_det * d.eta;
}

NoiseCoefficients noise_coefficients(double photoelectron_rate, const DetectionParams& d,
                                     const TrapParams& t)
{
    NoiseCoefficients c;
    c.bkg = t.bkg_var_atoms;
    c.linear = 1.0 / (photoelectron_rate * d.tau_det) + d.tau_det / (2.0 * t.tau_life);
    c.quadratic = t.alpha * t.alpha / d.tau_det;
    return c;
}

NoiseCoefficients noise_coefficients(const DetectionParams& d, const TrapParams& t)
{
    return noise_coefficients(d.eta * scattering_rate(d), d, t);
}

NoiseBudget noise_budget(double n_atoms, double photoelectron_rate, const DetectionParams& d,
                         const TrapParams& t)
{
    NoiseBudget b;
    b.bkg = t.bkg_var_atoms;
    b.psn = n_atoms / (photoelectron_rate * d.tau_det);
    b.loss = n_atoms * d.tau_det / (2.0 * t.tau_life);
    b.srn = n_atoms * n_atoms * t.alpha * t.alpha / d.tau_det;
    b.total = b.bkg + b.psn + b.srn + b.loss;
    return b;
}

NoiseBudget noise_budget(double n_atoms, const DetectionParams& d, const TrapParams& t)
{
    return noise_budget(n_atoms, d.eta * scattering_rate(d), d, t);
}

double max_resolvable_atoms(const NoiseCoefficients& c)
{
    const double headroom = 1.0 - c.bkg;
    if (!(headroom > 0)) {
        throw EstimationError("background variance already at or above one atom squared");
    }
    // Root of quadratic·N² + linear·N − headroom = 0 in the cancellation-free
    // form; reduces to headroom/linear when quadratic = 0.
    const double disc = c.linear * c.linear + 4.0 * c.quadratic * headroom;
    const double denom = c.linear + std::sqrt(disc);
    if (!(denom > 0)) throw EstimationError("noise model has no atom-number dependence");
    return 2.0 * headroom / denom;
}

double max_resolvable_atoms(const DetectionParams& d, const TrapParams& t)
{
    return max_resolvable_atoms(noise_coefficients(d, t));
}

double dlog_rate_ds0(const DetectionParams& d)
{
    return 1.0 / d.s0 - 1.0 / saturation_denominator(d);
}

double dlog_rate_ddetuning(const DetectionParams& d)
{
    return -8.0 * d.detuning / (d.gamma * d.gamma * saturation_denominator(d));
}

EquivalentNoise equivalent_noise_sources(double alpha, const DetectionParams& d)
{
    const double relative = alpha / std::sqrt(d.tau_det);
    // Δ = 2πν, so the ordinary-frequency sensitivity carries a factor 2π.
    const double per_hz = std::abs(dlog_rate_ddetuning(d)) * kTwoPi;
    const double per_s0 = std::abs(dlog_rate_ds0(d));
    if (!(per_hz > 0)) throw EstimationError("scattering rate insensitive to detuning at this operating point");
    if (!(per_s0 > 0) || !std::isfinite(per_s0)) {
        throw EstimationError("scattering rate insensitive to s0 at this operating point");
    }
    EquivalentNoise out;
    out.detuning_noise_hz = relative / per_hz;
    out.saturation_noise = relative / per_s0;
    out.saturation_noise_relative = out.saturation_noise / d.s0;
    return out;
}

}  // namespace atomcount::physics
