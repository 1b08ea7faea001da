#include "atomcount/estimation.hpp"

#include <cmath>
#include <map>

namespace atomcount::est {

const VarianceRow* VarianceTable::find(int n_atoms) const
{
    for (const auto& r : rows) {
        if (r.n_atoms == n_atoms) return &r;
    }
    return nullptr;
}

double two_sample_variance(std::span<const double> values)
{
    if (values.size() < 2) throw EstimationError("two-sample variance needs at least one pair");
    double sum = 0.0;
    for (std::size_t j = 1; j < values.size(); ++j) {
        const double d = values[j] - values[j - 1];
        sum += d * d;
    }
    return 0.5 * sum / static_cast<double>(values.size() - 1);
}

VarianceTable two_sample_variance(std::span<const TimeTrace> traces, const MixtureCalibration& cal,
                                  const TwoSampleOptions& options)
{
    struct Accumulator {
        std::int64_t n = 0;
        double sum_sq = 0.0;
    };
    std::map<int, Accumulator> groups;
    std::int64_t total_pairs = 0;
    for (const auto& trace : traces) {
        const auto& s = trace.samples;
        for (std::size_t j = 1; j < s.size(); ++j) {
            const auto a = counts_to_atoms(s[j - 1].photoelectrons, cal, s[j - 1].exposure);
            const auto b = counts_to_atoms(s[j].photoelectrons, cal, s[j].exposure);
            if (options.exclude_transitions && a.integer_atoms != b.integer_atoms) continue;
            const double d = b.real_atoms - a.real_atoms;
            auto& g = groups[a.integer_atoms];
            g.n += 1;
            g.sum_sq += d * d;
            ++total_pairs;
        }
    }
    if (total_pairs == 0) throw EstimationError("two-sample variance needs at least one consecutive pair");

    VarianceTable table;
    for (const auto& [n_atoms, g] : groups) {
        if (g.n < options.min_pairs) {
            table.notices.push_back("N = " + std::to_string(n_atoms) + ": " + std::to_string(g.n) +
                                    " pair(s), omitted");
            continue;
        }
        VarianceRow row;
        row.n_atoms = n_atoms;
        row.n_pairs = g.n;
        row.variance = 0.5 * g.sum_sq / static_cast<double>(g.n);
        row.std_error = row.variance * std::sqrt(2.0 / static_cast<double>(g.n - 1));
        table.rows.push_back(row);
    }
    return table;
}

NoiseModelFit fit_noise_model(const VarianceTable& table, const DetectionParams& d, const TrapParams& t,
                              int n_cut, std::optional<double> photoelectron_rate, double loss_fraction)
{
    NoiseModelFit fit;
    TrapParams fixed = t;
    fixed.alpha = 0.0;
    auto base = photoelectron_rate ? physics::noise_coefficients(*photoelectron_rate, d, fixed)
                                   : physics::noise_coefficients(d, fixed);
    base.linear += (loss_fraction - kLossFractionAllPairs) * d.tau_det / t.tau_life;

    for (const auto& row : table.rows) {
        if (row.n_atoms > n_cut) continue;
        if (!(row.std_error > 0) || !std::isfinite(row.std_error)) {
            fit.notices.push_back("N = " + std::to_string(row.n_atoms) + ": zero standard error, skipped");
            continue;
        }
        fit.rows_used.push_back(row);
    }
    if (fit.rows_used.size() < 3) throw EstimationError("noise-model fit needs at least three populated atom numbers");

    // σ²(N) − bkg − linear·N = β·N²/τ_det with β = α²: linear in β, so the
    // weighted least-squares solution is closed form.
    double sxx = 0.0, sxy = 0.0;
    for (const auto& row : fit.rows_used) {
        const double w = 1.0 / (row.std_error * row.std_error);
        const double x = row.n_atoms * static_cast<double>(row.n_atoms) / d.tau_det;
        const double y = row.variance - base.bkg - base.linear * row.n_atoms;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    if (!(sxx > 0)) throw EstimationError("noise-model fit has no populated nonzero atom number");
    const double beta = sxy / sxx;
    const double beta_se = 1.0 / std::sqrt(sxx);
    if (!(beta > 2.0 * beta_se)) {
        const double bound = std::sqrt(std::max(beta, 0.0) + 2.0 * beta_se);
        throw AlphaUnidentifiable("scattering-rate noise not resolved above photoelectron shot noise; alpha < " +
                                      std::to_string(bound) + " s^1/2",
                                  bound);
    }
    fit.alpha = std::sqrt(beta);
    fit.alpha_std_error = beta_se / (2.0 * fit.alpha);

    fit.coefficients = base;
    fit.coefficients.quadratic = beta / d.tau_det;
    for (const auto& row : fit.rows_used) {
        const double r = (row.variance - fit.coefficients.total(row.n_atoms)) / row.std_error;
        fit.chi2 += r * r;
    }
    fit.dof = static_cast<int>(fit.rows_used.size()) - 1;
    // Loss events leave heavy tails in the per-N variances, so the nominal
    // errors understate the scatter; inflate by the Birge ratio when χ²/dof > 1.
    if (fit.dof > 0 && fit.chi2 > fit.dof) {
        fit.alpha_std_error *= std::sqrt(fit.chi2 / fit.dof);
        fit.notices.push_back("standard errors scaled by sqrt(chi2/dof) = " + std::to_string(std::sqrt(fit.chi2 / fit.dof)));
    }

    fit.n_max = physics::max_resolvable_atoms(fit.coefficients);
    // Implicit differentiation of σ²(N, α) = 1.
    const double n = fit.n_max;
    const double dsig_dalpha = 2.0 * fit.alpha * n * n / d.tau_det;
    const double dsig_dn = fit.coefficients.linear + 2.0 * fit.coefficients.quadratic * n;
    fit.n_max_std_error = std::abs(dsig_dalpha / dsig_dn) * fit.alpha_std_error;
    return fit;
}

}  // namespace atomcount::est
