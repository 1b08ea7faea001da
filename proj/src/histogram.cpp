#include "atomcount/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace atomcount::est {

SignalHistogram histogram_of(std::span<const double> values, double bin_width)
{
    if (values.empty()) throw EstimationError("histogram of empty input");
    if (!(bin_width > 0) || !std::isfinite(bin_width)) throw EstimationError("histogram bin width must be positive");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it - 0.5 * bin_width;
    const auto n_bins = static_cast<std::size_t>(std::floor((*hi_it - lo) / bin_width)) + 1;

    SignalHistogram h;
    h.bin_edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) h.bin_edges[i] = lo + static_cast<double>(i) * bin_width;
    h.counts.assign(n_bins, 0);
    for (double v : values) {
        auto i = static_cast<std::size_t>(std::floor((v - lo) / bin_width));
        h.counts[std::min(i, n_bins - 1)] += 1;
    }
    h.n_samples = static_cast<std::int64_t>(values.size());
    return h;
}

SignalHistogram build_histogram(std::span<const TimeTrace> traces, int bins_per_atom, std::optional<double> spacing_hint)
{
    if (bins_per_atom < 4) throw EstimationError("bins_per_atom must be at least 4");
    std::vector<double> values;
    for (const auto& t : traces) {
        for (const auto& s : t.samples) values.push_back(s.photoelectrons);
    }
    if (values.empty()) throw EstimationError("no samples to histogram");
    const double spacing = spacing_hint ? *spacing_hint : physics::photoelectrons_per_atom(traces.front().params);
    return histogram_of(values, spacing / bins_per_atom);
}

double estimate_peak_spacing(const SignalHistogram& h, const SpacingSearch& search)
{
    const std::size_t n = h.size();
    const double width = h.bin_width();
    if (n < 3) throw EstimationError("histogram too short for a spacing estimate");

    const double mean = static_cast<double>(std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0})) /
                        static_cast<double>(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<double>(h.counts[i]) - mean;

    std::size_t max_lag = n - 1;
    if (search.max_lag > 0) max_lag = std::min(max_lag, static_cast<std::size_t>(search.max_lag / width));
    std::vector<double> acf(max_lag + 2, 0.0);
    for (std::size_t lag = 0; lag <= max_lag + 1 && lag < n; ++lag) {
        double sum = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) sum += y[i] * y[i + lag];
        acf[lag] = sum;
    }
    if (!(acf[0] > 0)) throw EstimationError("histogram has no structure (flat)");

    std::size_t start = 1;
    if (search.min_lag > 0) {
        start = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(search.min_lag / width)));
    }
    else {
        while (start < max_lag && acf[start + 1] < acf[start]) ++start;
    }
    const double floor_value = acf[start];

    std::vector<std::size_t> maxima;
    std::size_t highest = 0;
    for (std::size_t lag = start + 1; lag <= max_lag; ++lag) {
        if (acf[lag] >= acf[lag - 1] && acf[lag] >= acf[lag + 1]) {
            maxima.push_back(lag);
            if (highest == 0 || acf[lag] > acf[highest]) highest = lag;
        }
    }
    // Harmonics of the period can edge out the fundamental through noise, so
    // take the shortest lag that comes close to the highest maximum.
    std::size_t best = highest;
    for (const auto lag : maxima) {
        if (acf[lag] - floor_value >= 0.7 * (acf[highest] - floor_value)) {
            best = lag;
            break;
        }
    }
    // A genuine period stands well clear of the dip that follows lag zero.
    if (best == 0 || !(acf[best] > 0) || acf[best] - floor_value < 0.05 * acf[0]) {
        throw EstimationError("no secondary autocorrelation maximum: histogram shows no periodic peaks");
    }

    double offset = 0.0;
    const double curvature = acf[best - 1] - 2.0 * acf[best] + acf[best + 1];
    if (curvature < 0) offset = 0.5 * (acf[best - 1] - acf[best + 1]) / curvature;
    return (static_cast<double>(best) + offset) * width;
}

int count_resolved_peaks(const SignalHistogram& h, double intercept, double spacing, double contrast,
                         std::int64_t min_count)
{
    if (h.size() == 0 || !(spacing > 0)) return 0;
    const double lo = h.bin_edges.front();
    const double width = h.bin_width();
    auto bin_of = [&](double x) {
        return static_cast<long>(std::floor((x - lo) / width));
    };
    auto clamp_bin = [&](long i) { return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(h.size()) - 1)); };

    const int k_max = static_cast<int>(std::floor((h.bin_edges.back() - intercept) / spacing + 0.5));
    std::vector<std::int64_t> peak;
    std::vector<std::size_t> peak_bin;
    for (int k = 0; k <= k_max; ++k) {
        const double c = intercept + k * spacing;
        const auto a = clamp_bin(bin_of(c - 0.25 * spacing));
        const auto b = clamp_bin(bin_of(c + 0.25 * spacing));
        std::size_t arg = a;
        for (std::size_t i = a; i <= b; ++i) {
            if (h.counts[i] > h.counts[arg]) arg = i;
        }
        peak.push_back(h.counts[arg]);
        peak_bin.push_back(arg);
    }

    auto valley = [&](std::size_t a, std::size_t b) {
        std::int64_t m = h.counts[a];
        for (std::size_t i = a; i <= b; ++i) m = std::min(m, h.counts[i]);
        return m;
    };

    int resolved = 0;
    for (std::size_t k = 0; k < peak.size(); ++k) {
        if (peak[k] < min_count) continue;
        const double need = static_cast<double>(peak[k]) / contrast;
        bool ok = true;
        if (k > 0) ok = ok && static_cast<double>(valley(peak_bin[k - 1], peak_bin[k])) <= need;
        if (k + 1 < peak.size()) ok = ok && static_cast<double>(valley(peak_bin[k], peak_bin[k + 1])) <= need;
        if (ok) ++resolved;
    }
    return resolved;
}

}  // namespace atomcount::est
