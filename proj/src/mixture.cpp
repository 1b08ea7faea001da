#include "atomcount/estimation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace atomcount::est {

MixtureCalibration ideal_calibration(double counts_per_atom_per_second, double exposure)
{
    MixtureCalibration cal;
    cal.counts_per_atom_per_second = counts_per_atom_per_second;
    cal.exposure = exposure;
    cal.converged = true;
    return cal;
}

namespace {

struct Seed {
    double center = 0.0;
    double width = 0.0;
    double amplitude = 0.0;
    bool found = false;
};

struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double intercept_se = 0.0;
    double slope_se = 0.0;
};

// Weighted straight line; plain least squares when weights are empty.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w)
{
    double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        s += wi;
        sx += wi * x[i];
        sy += wi * y[i];
        sxx += wi * x[i] * x[i];
        sxy += wi * x[i] * y[i];
    }
    const double det = s * sxx - sx * sx;
    LineFit f;
    f.slope = (s * sxy - sx * sy) / det;
    f.intercept = (sxx * sy - sx * sxy) / det;
    if (w.empty()) {
        // Residual-scaled errors.
        double rss = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - f.intercept - f.slope * x[i];
            rss += r * r;
        }
        const double sigma2 = x.size() > 2 ? rss / static_cast<double>(x.size() - 2) : 0.0;
        f.slope_se = std::sqrt(sigma2 * s / det);
        f.intercept_se = std::sqrt(sigma2 * sxx / det);
    }
    else {
        f.slope_se = std::sqrt(s / det);
        f.intercept_se = std::sqrt(sxx / det);
    }
    return f;
}

// Walks up the comb one peak at a time, predicting the next center from a
// line through the ones already located, so a rough initial spacing suffices.
std::vector<Seed> seed_peaks(const SignalHistogram& h, int k_peaks, double spacing)
{
    const double lo = h.bin_edges.front();
    const double width = h.bin_width();
    const long n = static_cast<long>(h.size());
    std::vector<Seed> seeds(static_cast<std::size_t>(k_peaks));
    std::vector<double> xs, ys;
    double intercept = 0.0;
    double step = spacing;

    for (int k = 0; k < k_peaks; ++k) {
        const double predicted = intercept + k * step;
        Seed& sd = seeds[static_cast<std::size_t>(k)];
        sd.center = predicted;
        sd.width = step / 8.0;
        const long a = std::max<long>(0, static_cast<long>(std::floor((predicted - 0.4 * step - lo) / width)));
        const long b = std::min<long>(n - 1, static_cast<long>(std::floor((predicted + 0.4 * step - lo) / width)));
        if (a > b) continue;
        long arg = a;
        for (long i = a; i <= b; ++i) {
            if (h.counts[static_cast<std::size_t>(i)] > h.counts[static_cast<std::size_t>(arg)]) arg = i;
        }
        if (h.counts[static_cast<std::size_t>(arg)] <= 0) continue;

        // Centroid and spread within ±0.3 spacing of the maximum.
        const double peak_x = h.center(static_cast<std::size_t>(arg));
        double m0 = 0, m1 = 0, m2 = 0;
        for (long i = a; i <= b; ++i) {
            const double x = h.center(static_cast<std::size_t>(i));
            if (std::abs(x - peak_x) > 0.3 * step) continue;
            const double c = static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
            m0 += c;
            m1 += c * x;
            m2 += c * x * x;
        }
        const double mu = m1 / m0;
        const double var = std::max(m2 / m0 - mu * mu, 0.0);
        sd.center = mu;
        sd.width = std::clamp(std::sqrt(var), 0.5 * width, 0.3 * step);
        sd.amplitude = static_cast<double>(h.counts[static_cast<std::size_t>(arg)]);
        sd.found = true;

        xs.push_back(k);
        ys.push_back(mu);
        if (xs.size() >= 2) {
            const auto line = fit_line(xs, ys, {});
            intercept = line.intercept;
            step = line.slope;
        }
        else {
            intercept = mu;
        }
    }
    return seeds;
}

}  // namespace

MixtureCalibration fit_mixture(const SignalHistogram& h, int k_peaks, double init_spacing, double exposure)
{
    if (k_peaks < 2) throw EstimationError("mixture fit needs at least two peaks");
    if (!(init_spacing > 0)) throw EstimationError("initial spacing must be positive");
    if (!(exposure > 0)) throw EstimationError("exposure must be positive");
    if (h.size() < 3) throw EstimationError("histogram too short for a mixture fit");

    MixtureCalibration cal;
    cal.exposure = exposure;

    const auto seeds = seed_peaks(h, k_peaks, init_spacing);
    for (int k = 0; k < k_peaks; ++k) {
        if (!seeds[static_cast<std::size_t>(k)].found) {
            cal.degenerate = true;
            cal.notes.push_back("no histogram peak near index " + std::to_string(k));
        }
    }

    // Fit window: half a spacing beyond the outer seeds.
    const double step = k_peaks > 1 ? (seeds.back().center - seeds.front().center) / (k_peaks - 1) : init_spacing;
    const double x_lo = seeds.front().center - 0.6 * std::abs(step);
    const double x_hi = seeds.back().center + 0.6 * std::abs(step);
    std::vector<double> xs, ys, sig;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double x = h.center(i);
        if (x < x_lo || x > x_hi) continue;
        xs.push_back(x);
        ys.push_back(static_cast<double>(h.counts[i]));
        sig.push_back(std::sqrt(std::max<double>(static_cast<double>(h.counts[i]), 1.0)));
    }
    const int n_par = 3 * k_peaks;
    const auto n_obs = static_cast<Eigen::Index>(xs.size());
    if (n_obs <= n_par) {
        cal.degenerate = true;
        cal.notes.push_back("fewer histogram bins than fit parameters");
    }

    // Parameters: (amplitude, center, width) per peak.
    Eigen::VectorXd p(n_par);
    for (int k = 0; k < k_peaks; ++k) {
        const auto& sd = seeds[static_cast<std::size_t>(k)];
        p(3 * k) = sd.amplitude;
        p(3 * k + 1) = sd.center;
        p(3 * k + 2) = sd.width;
    }

    auto residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(n_obs);
        if (jac) jac->setZero(n_obs, n_par);
        for (Eigen::Index i = 0; i < n_obs; ++i) {
            double model = 0.0;
            for (int k = 0; k < k_peaks; ++k) {
                const double a = q(3 * k), c = q(3 * k + 1), w = std::abs(q(3 * k + 2));
                const double z = (xs[static_cast<std::size_t>(i)] - c) / w;
                if (std::abs(z) > 12) continue;
                const double g = std::exp(-0.5 * z * z);
                model += a * g;
                if (jac) {
                    const double s = 1.0 / sig[static_cast<std::size_t>(i)];
                    (*jac)(i, 3 * k) = s * g;
                    (*jac)(i, 3 * k + 1) = s * a * g * z / w;
                    (*jac)(i, 3 * k + 2) = s * a * g * z * z / w * (q(3 * k + 2) < 0 ? -1.0 : 1.0);
                }
            }
            r(i) = (ys[static_cast<std::size_t>(i)] - model) / sig[static_cast<std::size_t>(i)];
        }
    };

    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    residuals(p, r, &jac);
    double chi2 = r.squaredNorm();
    double lambda = 1e-3;
    constexpr int kMaxIterations = 500;
    int it = 0;
    bool converged = false;
    for (; it < kMaxIterations && !converged; ++it) {
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;
        bool improved = false;
        while (lambda < 1e12) {
            Eigen::MatrixXd a = jtj;
            for (int d = 0; d < n_par; ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-12);
            const Eigen::VectorXd delta = a.ldlt().solve(jtr);
            Eigen::VectorXd trial = p + delta;
            Eigen::VectorXd r_trial;
            residuals(trial, r_trial, nullptr);
            const double chi2_trial = r_trial.squaredNorm();
            if (std::isfinite(chi2_trial) && chi2_trial <= chi2) {
                const double drop = chi2 - chi2_trial;
                const double step_size = delta.cwiseAbs().maxCoeff();
                p = trial;
                residuals(p, r, &jac);
                chi2 = chi2_trial;
                lambda = std::max(lambda * 0.3, 1e-12);
                improved = true;
                if (drop <= 1e-12 * std::max(chi2, 1e-300) || step_size <= 1e-12 * p.cwiseAbs().maxCoeff()) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            // No downhill step at any damping: stationary point.
            converged = true;
        }
    }
    cal.iterations = it;
    cal.converged = converged;
    cal.chi2 = chi2;
    cal.dof = static_cast<int>(n_obs) - n_par;
    if (!converged) {
        std::ostringstream os;
        os << "mixture fit did not converge after " << it << " iterations (chi2 = " << chi2 << ")";
        cal.notes.push_back(os.str());
    }

    // Covariance from the Gauss-Newton normal matrix, scaled by reduced chi2.
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    Eigen::MatrixXd cov;
    if (lu.isInvertible()) {
        cov = lu.inverse();
        if (cal.dof > 0) cov *= std::max(chi2 / cal.dof, 1e-300);
    }
    else {
        cal.degenerate = true;
        cal.notes.push_back("singular normal matrix; some peak parameters are unconstrained");
    }

    for (int k = 0; k < k_peaks; ++k) {
        cal.peak_amplitudes.push_back(p(3 * k));
        cal.peak_centers.push_back(p(3 * k + 1));
        cal.peak_widths.push_back(std::abs(p(3 * k + 2)));
        double se = std::numeric_limits<double>::quiet_NaN();
        if (cov.size() > 0 && cov(3 * k + 1, 3 * k + 1) >= 0) se = std::sqrt(cov(3 * k + 1, 3 * k + 1));
        cal.center_std_errors.push_back(se);
    }

    const double max_amp = *std::max_element(cal.peak_amplitudes.begin(), cal.peak_amplitudes.end());
    for (int k = 0; k < k_peaks; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (!(cal.peak_amplitudes[ku] > 1e-3 * max_amp)) {
            cal.degenerate = true;
            cal.notes.push_back("peak " + std::to_string(k) + " has negligible amplitude");
        }
        if (k + 1 < k_peaks) {
            const double gap = cal.peak_centers[ku + 1] - cal.peak_centers[ku];
            if (!(gap > std::max(cal.peak_widths[ku], cal.peak_widths[ku + 1]))) {
                cal.degenerate = true;
                cal.notes.push_back("peaks " + std::to_string(k) + " and " + std::to_string(k + 1) + " overlap");
            }
        }
    }

    std::vector<double> idx(static_cast<std::size_t>(k_peaks));
    std::vector<double> w;
    for (int k = 0; k < k_peaks; ++k) idx[static_cast<std::size_t>(k)] = k;
    const bool weighted = std::all_of(cal.center_std_errors.begin(), cal.center_std_errors.end(),
                                      [](double se) { return std::isfinite(se) && se > 0; });
    if (weighted) {
        for (double se : cal.center_std_errors) w.push_back(1.0 / (se * se));
    }
    const auto line = fit_line(idx, cal.peak_centers, w);
    cal.intercept = line.intercept;
    cal.intercept_std_error = line.intercept_se;
    cal.counts_per_atom_per_second = line.slope / exposure;
    cal.scale_std_error = line.slope_se / exposure;
    for (int k = 0; k < k_peaks; ++k) {
        cal.regression_residuals.push_back(cal.peak_centers[static_cast<std::size_t>(k)] - line.intercept -
                                           line.slope * k);
    }
    if (!(cal.counts_per_atom_per_second > 0)) {
        cal.degenerate = true;
        cal.notes.push_back("nonpositive calibration slope");
    }
    return cal;
}

}  // namespace atomcount::est
