#include "atomcount/estimation.hpp"
#include "atomcount/physics.hpp"
#include "atomcount/simulator.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

using namespace atomcount;

namespace {

sim::SimConfig quiet(int atoms)
{
    sim::SimConfig c;
    c.initial_atoms = sim::FixedAtoms{atoms};
    c.trap.tau_life = 1e12;
    c.trap.r_load = 0;
    c.seed = 11;
    return c;
}

struct Moments {
    double mean = 0;
    double var = 0;
    std::size_t n = 0;
};

Moments moments(const std::vector<double>& x)
{
    Moments m;
    m.n = x.size();
    m.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(m.n);
    for (double v : x) m.var += (v - m.mean) * (v - m.mean);
    m.var /= static_cast<double>(m.n - 1);
    return m;
}

std::vector<double> all_signals(const std::vector<TimeTrace>& traces)
{
    std::vector<double> out;
    for (const auto& t : traces) {
        for (const auto& s : t.samples) out.push_back(s.photoelectrons);
    }
    return out;
}

}  // namespace

TEST_CASE("trace shape and timing")
{
    sim::SimConfig c;
    c.seed = 1;
    const auto t = sim::simulate_trace(c);
    REQUIRE(t.samples.size() == 11);
    CHECK(validate(t).ok());
    for (std::size_t i = 0; i < t.samples.size(); ++i) {
        CHECK(t.samples[i].index == static_cast<std::int64_t>(i));
        CHECK(t.samples[i].start_time == doctest::Approx(0.31 * static_cast<double>(i)));
        CHECK(t.samples[i].exposure == 0.09);
        REQUIRE(t.samples[i].truth.has_value());
    }
    CHECK(std::get<SimulatedProvenance>(t.provenance).seed == 1);
}

TEST_CASE("runs are reproducible and independent of the worker count")
{
    sim::SimConfig c;
    c.seed = 99;
    const auto a = sim::simulate_detection_campaign(c, 40, std::nullopt, 1);
    const auto b = sim::simulate_detection_campaign(c, 40, std::nullopt, 4);
    CHECK(a == b);
    CHECK(sim::simulate_trace(c, std::nullopt, 7) == a[7]);
    CHECK_FALSE(a[0] == a[1]);

    std::set<std::uint64_t> seeds;
    for (std::uint64_t r = 0; r < 1000; ++r) seeds.insert(sim::derive_seed(5, r));
    CHECK(seeds.size() == 1000);
    CHECK(sim::derive_seed(5, 0) != sim::derive_seed(6, 0));
}

TEST_CASE("ground truth is a consistent birth-death record")
{
    sim::SimConfig c;
    c.trap.tau_life = 3;
    c.trap.r_load = 2;
    c.seed = 4;
    const sim::LossPulse pulse{true, 3e-3, 0.05};
    for (const auto& t : sim::simulate_detection_campaign(c, 50, pulse)) {
        for (std::size_t i = 0; i < t.samples.size(); ++i) {
            const auto& g = *t.samples[i].truth;
            CHECK(g.atoms_at_end == g.atoms_at_start - g.losses_in_exposure + g.loads_in_exposure);
            CHECK(g.loss_times.size() == static_cast<std::size_t>(g.losses_in_exposure));
            CHECK(g.load_times.size() == static_cast<std::size_t>(g.loads_in_exposure));
            const double t0 = t.samples[i].start_time;
            for (double x : g.loss_times) CHECK((x >= t0 && x <= t0 + 0.09));
            for (double x : g.load_times) CHECK((x >= t0 && x <= t0 + 0.09));
            CHECK(g.pulse_before == (i > 0));
            if (g.pulse_before) CHECK(g.atoms_after_pulse <= g.atoms_before_pulse);
        }
    }
}

TEST_CASE("without loss or loading the atom number is frozen")
{
    auto c = quiet(12);
    for (const auto& t : sim::simulate_detection_campaign(c, 20)) {
        for (const auto& s : t.samples) {
            CHECK(s.truth->atoms_at_start == 12);
            CHECK(s.truth->atoms_at_end == 12);
        }
    }
}

TEST_CASE("photoelectron counts are Poisson when the rate is noiseless")
{
    auto c = quiet(10);
    c.trap.alpha = 0;
    c.trap.bkg_var_atoms = 0;
    c.counts_per_atom_per_second = 2000;   // small mean so the Poisson variance is testable
    const auto m = moments(all_signals(sim::simulate_detection_campaign(c, 2000)));
    const double mu = 10 * 2000 * 0.09;
    CHECK(std::abs(m.mean - mu) < 4 * std::sqrt(mu / static_cast<double>(m.n)));
    // Var of the sample variance for Poisson ≈ 2μ²/(n−1).
    CHECK(std::abs(m.var - mu) < 4 * mu * std::sqrt(2.0 / static_cast<double>(m.n - 1)));
}

TEST_CASE("per-image variance follows the noise budget at fixed N")
{
    for (int n : {0, 5, 20}) {
        auto c = quiet(n);
        const double cps = sim::effective_counts_per_atom_per_second(c);
        auto x = all_signals(sim::simulate_detection_campaign(c, 1500));
        for (double& v : x) v /= cps * c.detection.tau_det;
        const auto m = moments(x);
        const auto b = physics::noise_budget(n, c.detection, c.trap);
        const double expected = b.bkg + b.psn + b.srn;   // no losses
        CAPTURE(n);
        CHECK(std::abs(m.mean - n) < 4 * std::sqrt(expected / static_cast<double>(m.n)));
        CHECK(std::abs(m.var - expected) < 4 * expected * std::sqrt(2.0 / static_cast<double>(m.n - 1)));
    }
}

TEST_CASE("loss pulse survival is Bernoulli per atom")
{
    auto c = quiet(20);
    c.trap.p_survival = 0.8;
    c.n_images = 2;
    std::int64_t before = 0, after = 0;
    for (const auto& t : sim::simulate_detection_campaign(c, 3000, sim::LossPulse{true, 3e-3, 0})) {
        before += t.samples[1].truth->atoms_before_pulse;
        after += t.samples[1].truth->atoms_after_pulse;
    }
    const double p = static_cast<double>(after) / static_cast<double>(before);
    CHECK(std::abs(p - 0.8) < 4 * std::sqrt(0.8 * 0.2 / static_cast<double>(before)));
}

TEST_CASE("exponential decay and constant loading rates")
{
    auto c = quiet(30);
    c.trap.tau_life = 4;
    c.n_images = 6;
    const auto traces = sim::simulate_detection_campaign(c, 2000);
    const double t_end = traces[0].samples.back().start_time + 0.09;
    double sum = 0;
    for (const auto& t : traces) sum += t.samples.back().truth->atoms_at_end;
    const double mean = sum / 2000;
    const double p = std::exp(-t_end / 4);
    CHECK(std::abs(mean - 30 * p) < 4 * std::sqrt(30 * p * (1 - p) / 2000));

    auto l = quiet(0);
    l.trap.r_load = 0.5;
    l.n_images = 6;
    double loads = 0;
    for (const auto& t : sim::simulate_detection_campaign(l, 2000)) loads += t.samples.back().truth->atoms_at_end;
    const double expected = 0.5 * t_end * 2000;
    CHECK(std::abs(loads - expected) < 4 * std::sqrt(expected));
}

TEST_CASE("initial-number distributions")
{
    sim::SimConfig c;
    c.trap.tau_life = 1e12;
    c.trap.r_load = 0;
    c.n_images = 1;
    c.seed = 8;
    c.initial_atoms = sim::PoissonAtoms{15};
    double s = 0;
    for (const auto& t : sim::simulate_detection_campaign(c, 4000)) s += t.samples[0].truth->atoms_at_start;
    CHECK(std::abs(s / 4000 - 15) < 4 * std::sqrt(15.0 / 4000));

    c.initial_atoms = sim::UniformAtoms{3, 6};
    std::set<int> seen;
    for (const auto& t : sim::simulate_detection_campaign(c, 400)) seen.insert(t.samples[0].truth->atoms_at_start);
    CHECK(seen == std::set<int>{3, 4, 5, 6});
}

// Pair variance from losses depends on when the loss falls inside the two
// exposures. With a loss at uniform time in [0, τd + τh + τd] the signal step
// is the fraction of the exposures on either side; averaging gives
// N·λ·(2τd/3 + τh)/2 over all pairs and N·λ·τd/24 when pairs with an integer
// step are dropped.
TEST_CASE("loss contribution to the two-sample variance")
{
    auto c = quiet(10);
    c.trap.tau_life = 20;   // rare enough that double losses are negligible
    c.trap.alpha = 0;
    c.n_images = 2;
    c.seed = 3;
    const auto traces = sim::simulate_detection_campaign(c, 60000);
    const double cps = sim::effective_counts_per_atom_per_second(c);
    const auto cal = est::ideal_calibration(cps, c.detection.tau_det);
    const double base = c.trap.bkg_var_atoms + 10 / (cps * c.detection.tau_det);
    const double lambda = 1 / c.trap.tau_life;
    const double td = c.detection.tau_det, th = c.detection.tau_hold;

    for (bool exclude : {false, true}) {
        est::TwoSampleOptions o;
        o.exclude_transitions = exclude;
        const auto table = est::two_sample_variance(traces, cal, o);
        double weighted = 0;
        std::int64_t pairs = 0;
        for (const auto& r : table.rows) {
            weighted += r.variance * static_cast<double>(r.n_pairs);
            pairs += r.n_pairs;
        }
        const double loss_part = weighted / static_cast<double>(pairs) - base;
        const double predicted = exclude ? 10 * lambda * td / 24 : 0.5 * 10 * lambda * (2 * td / 3 + th);
        CAPTURE(exclude);
        CHECK(loss_part == doctest::Approx(predicted).epsilon(0.1));
    }
}

TEST_CASE("invalid configurations are rejected")
{
    sim::SimConfig c;
    c.detection.eta = 0;
    CHECK_THROWS_AS(sim::simulate_trace(c), ValidationError);
    c = {};
    c.n_images = 0;
    CHECK_THROWS_AS(sim::simulate_trace(c), ValidationError);
    c = {};
    CHECK_THROWS_AS(sim::simulate_trace(c, sim::LossPulse{true, 1.0, 0}), ValidationError);
    c.initial_atoms = sim::UniformAtoms{5, 2};
    CHECK_THROWS_AS(sim::simulate_trace(c), ValidationError);
}
