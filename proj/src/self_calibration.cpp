#include "atomcount/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace atomcount::est {

namespace {

double lattice_misfit(std::span<const double> signals, double scale)
{
    double sum = 0.0;
    for (double s : signals) {
        const double x = s / scale;
        const double d = x - std::round(x);
        sum += d * d;
    }
    return sum;
}

double golden_section(std::span<const double> signals, double a, double b, double rel_tol)
{
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = lattice_misfit(signals, c);
    double fd = lattice_misfit(signals, d);
    for (int i = 0; i < 200 && (b - a) > rel_tol * std::abs(a + b); ++i) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = lattice_misfit(signals, c);
        }
        else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = lattice_misfit(signals, d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

SelfCalibration self_calibrate_integer(std::span<const double> signals, double nominal_scale, double window,
                                       const SelfCalibrationOptions& options)
{
    if (signals.size() < 3) throw EstimationError("self-calibration needs at least three signals");
    if (!(nominal_scale > 0)) throw EstimationError("nominal scale must be positive");
    if (!(window > 0 && window < 1)) throw EstimationError("search window must lie in (0, 1)");
    const int n_grid = std::max(options.scan_points, 8);

    const double lo = nominal_scale * (1.0 - window);
    const double hi = nominal_scale * (1.0 + window);
    const double step = (hi - lo) / (n_grid - 1);
    std::vector<double> grid(static_cast<std::size_t>(n_grid));
    for (int i = 0; i < n_grid; ++i) grid[static_cast<std::size_t>(i)] = lattice_misfit(signals, lo + i * step);

    struct Minimum {
        double scale;
        double objective;
    };
    std::vector<Minimum> minima;
    for (int i = 1; i + 1 < n_grid; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (grid[u] <= grid[u - 1] && grid[u] < grid[u + 1]) {
            const double s = golden_section(signals, lo + (i - 1) * step, lo + (i + 1) * step,
                                            options.golden_tolerance);
            minima.push_back({s, lattice_misfit(signals, s)});
        }
    }
    if (minima.empty()) throw EstimationError("self-calibration: no interior minimum in the search window");
    std::sort(minima.begin(), minima.end(), [](const Minimum& a, const Minimum& b) { return a.objective < b.objective; });

    const auto best_edge = std::min(grid.front(), grid.back());
    if (best_edge < minima.front().objective) {
        throw EstimationError("self-calibration: best lattice fit lies on the window edge; widen the window");
    }

    SelfCalibration out;
    out.scale = minima.front().scale;
    out.objective = minima.front().objective;
    out.runner_up_objective = std::numeric_limits<double>::infinity();
    // Minima closer than half a level at the brightest signal keep the same
    // integer assignment; they are kinks of one basin, not rival lattices.
    double brightest = 0.0;
    for (double s : signals) brightest = std::max(brightest, std::abs(s));
    const double same_basin = std::max(2.0 * step, 0.5 * out.scale * out.scale / std::max(brightest, out.scale));
    for (std::size_t i = 1; i < minima.size(); ++i) {
        if (std::abs(minima[i].scale - out.scale) <= same_basin) continue;
        out.runner_up_scale = minima[i].scale;
        out.runner_up_objective = minima[i].objective;
        break;
    }

    std::set<long> levels;
    for (double s : signals) levels.insert(std::lround(s / out.scale));
    out.distinct_levels = static_cast<int>(levels.size());
    if (out.distinct_levels < 3) {
        throw EstimationError("self-calibration ambiguous: signals span fewer than three integer levels");
    }

    // The misfit is a sum of n squared residuals, so its sampling spread is
    // about objective·sqrt(2/n).
    const double spread = out.objective * std::sqrt(2.0 / static_cast<double>(signals.size()));
    if (out.runner_up_objective - out.objective <= spread) {
        throw EstimationError("self-calibration ambiguous: two lattice scales fit equally well");
    }
    return out;
}

}  // namespace atomcount::est
