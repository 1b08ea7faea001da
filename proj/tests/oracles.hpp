#pragma once

// Independent reference computations for tests. Nothing here calls the
// library under test.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace oracle {

/// Distribution of survivors among n atoms by enumerating all 2^n
/// survive/lose patterns.
inline std::vector<double> enumerate_survivors(int n, double p)
{
    std::vector<double> dist(static_cast<std::size_t>(n) + 1, 0.0);
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        double w = 1.0;
        int k = 0;
        for (int i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                w *= p;
                ++k;
            }
            else {
                w *= 1 - p;
            }
        }
        dist[static_cast<std::size_t>(k)] += w;
    }
    return dist;
}

/// Enumerated survivors conditioned on landing at or below `target`.
inline std::vector<double> enumerate_truncated(int n, double p, int target)
{
    const auto all = enumerate_survivors(n, p);
    std::vector<double> out(all.begin(), all.begin() + target + 1);
    double z = 0;
    for (double v : out) z += v;
    for (double& v : out) v /= z;
    return out;
}

struct MeanVar {
    double mean = 0;
    double var = 0;
};

inline MeanVar population_moments(const std::vector<double>& p)
{
    MeanVar m;
    for (std::size_t k = 0; k < p.size(); ++k) m.mean += static_cast<double>(k) * p[k];
    for (std::size_t k = 0; k < p.size(); ++k) m.var += p[k] * (static_cast<double>(k) - m.mean) * (static_cast<double>(k) - m.mean);
    return m;
}

/// Sample mean and unbiased variance of a histogram of integers.
inline MeanVar sample_moments(const std::map<int, std::int64_t>& h)
{
    double n = 0, s = 0, ss = 0;
    for (const auto& [k, c] : h) {
        n += static_cast<double>(c);
        s += static_cast<double>(c) * k;
    }
    const double mean = s / n;
    for (const auto& [k, c] : h) ss += static_cast<double>(c) * (k - mean) * (k - mean);
    return {mean, ss / (n - 1)};
}

inline double db(double reference, double variance) { return 10 * std::log10(reference / variance); }

}  // namespace oracle
