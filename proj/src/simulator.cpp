#include "atomcount/simulator.hpp"

#include "atomcount/physics.hpp"
#include "atomcount/parallel.hpp"

#include <cmath>

namespace atomcount::sim {

ValidationReport validate(const SimConfig& cfg)
{
    auto r = atomcount::validate(cfg.detection, cfg.trap);
    auto& v = r.violations;
    if (cfg.n_images < 1) v.emplace_back("n_images >= 1");
    if (cfg.counts_per_atom_per_second && !(*cfg.counts_per_atom_per_second > 0)) {
        v.emplace_back("counts_per_atom_per_second > 0");
    }
    if (!std::isfinite(cfg.scale_drift_per_second)) v.emplace_back("scale_drift_per_second finite");
    std::visit(
        [&](const auto& init) {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, FixedAtoms>) {
                if (init.count < 0) v.emplace_back("initial atoms >= 0");
            }
            else if constexpr (std::is_same_v<T, PoissonAtoms>) {
                if (!(init.mean >= 0) || !std::isfinite(init.mean)) v.emplace_back("initial Poisson mean >= 0");
            }
            else {
                if (init.low < 0 || init.high < init.low) v.emplace_back("0 <= initial low <= high");
            }
        },
        cfg.initial_atoms);
    return r;
}

ValidationReport validate(const LossPulse& pulse, const DetectionParams& d)
{
    ValidationReport r;
    if (!(pulse.duration >= 0)) r.violations.emplace_back("pulse duration >= 0");
    if (!(pulse.duration <= d.tau_hold)) r.violations.emplace_back("pulse duration <= tau_hold");
    if (!(pulse.placement >= 0)) r.violations.emplace_back("pulse placement >= 0");
    if (!(pulse.placement + pulse.duration <= d.tau_hold)) {
        r.violations.emplace_back("pulse placement + duration <= tau_hold");
    }
    return r;
}

double effective_counts_per_atom_per_second(const SimConfig& cfg)
{
    if (cfg.counts_per_atom_per_second) return *cfg.counts_per_atom_per_second;
    return cfg.detection.eta * physics::scattering_rate(cfg.detection);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t run_index)
{
    // splitmix64 finalizer over a mix of both inputs.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(seed ^ mix(run_index + 0x632be59bd9b4e019ULL));
}

Experiment::Experiment(const SimConfig& cfg, std::uint64_t run_index)
    : cfg_(cfg),
      run_index_(run_index),
      rng_(derive_seed(cfg.seed, run_index)),
      counts_rate_(effective_counts_per_atom_per_second(cfg)),
      campaign_offset_(static_cast<double>(run_index) * cfg.n_images *
                       (cfg.detection.tau_det + cfg.detection.tau_hold))
{
    std::visit(
        [&](const auto& init) {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, FixedAtoms>) {
                atoms_ = init.count;
            }
            else if constexpr (std::is_same_v<T, PoissonAtoms>) {
                atoms_ = init.mean > 0 ? std::poisson_distribution<int>(init.mean)(rng_) : 0;
            }
            else {
                atoms_ = std::uniform_int_distribution<int>(init.low, init.high)(rng_);
            }
        },
        cfg_.initial_atoms);
}

double Experiment::rate_scale() const
{
    return 1.0 + cfg_.scale_drift_per_second * (campaign_offset_ + time_);
}

Experiment::Evolution Experiment::evolve(double duration)
{
    Evolution ev;
    const double loss_rate = 1.0 / cfg_.trap.tau_life;
    const double load_rate = cfg_.trap.r_load;
    const double end = time_ + duration;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (true) {
        const double total = atoms_ * loss_rate + load_rate;
        if (!(total > 0)) {
            ev.atom_seconds += atoms_ * (end - time_);
            time_ = end;
            break;
        }
        const double wait = std::exponential_distribution<double>(total)(rng_);
        if (time_ + wait >= end) {
            ev.atom_seconds += atoms_ * (end - time_);
            time_ = end;
            break;
        }
        ev.atom_seconds += atoms_ * wait;
        time_ += wait;
        if (unit(rng_) * total < atoms_ * loss_rate) {
            --atoms_;
            ++ev.losses;
            ev.loss_times.push_back(time_);
        }
        else {
            ++atoms_;
            ++ev.loads;
            ev.load_times.push_back(time_);
        }
    }
    return ev;
}

ImageSample Experiment::expose()
{
    const auto& d = cfg_.detection;
    ImageSample s;
    s.index = next_index_++;
    s.start_time = time_;
    s.exposure = d.tau_det;

    GroundTruth truth;
    truth.atoms_at_start = atoms_;
    truth.pulse_before = pending_pulse_;
    truth.atoms_before_pulse = atoms_before_pulse_;
    truth.atoms_after_pulse = atoms_after_pulse_;
    pending_pulse_ = false;

    const double scale = rate_scale();
    Evolution ev = evolve(d.tau_det);

    // White per-exposure multiplier on the scattering rate, truncated at zero.
    const double spread = cfg_.trap.alpha / std::sqrt(d.tau_det);
    double multiplier = 1.0;
    if (spread > 0) {
        std::normal_distribution<double> gauss(1.0, spread);
        do {
            multiplier = gauss(rng_);
        } while (multiplier < 0.0);
    }
    const double mean_counts = counts_rate_ * scale * multiplier * ev.atom_seconds;
    double counts = 0.0;
    if (mean_counts > 0) counts = static_cast<double>(std::poisson_distribution<std::int64_t>(mean_counts)(rng_));

    const double bkg_sd = std::sqrt(cfg_.trap.bkg_var_atoms) * counts_rate_ * d.tau_det;
    if (bkg_sd > 0) counts += std::normal_distribution<double>(0.0, bkg_sd)(rng_);
    s.photoelectrons = counts;

    truth.atoms_at_end = atoms_;
    truth.losses_in_exposure = ev.losses;
    truth.loads_in_exposure = ev.loads;
    truth.loss_times = std::move(ev.loss_times);
    truth.load_times = std::move(ev.load_times);
    s.truth = std::move(truth);
    return s;
}

void Experiment::hold(const LossPulse* pulse)
{
    const double hold = cfg_.detection.tau_hold;
    if (pulse == nullptr || !pulse->enabled) {
        evolve(hold);
        return;
    }
    evolve(pulse->placement);
    atoms_before_pulse_ = atoms_;
    atoms_ = std::binomial_distribution<int>(atoms_, cfg_.trap.p_survival)(rng_);
    atoms_after_pulse_ = atoms_;
    pending_pulse_ = true;
    evolve(hold - pulse->placement);
}

TimeTrace simulate_trace(const SimConfig& cfg, const std::optional<LossPulse>& pulse, std::uint64_t run_index)
{
    require_valid(validate(cfg), "simulation config");
    if (pulse && pulse->enabled) require_valid(validate(*pulse, cfg.detection), "loss pulse");

    Experiment exp(cfg, run_index);
    TimeTrace trace;
    trace.params = cfg.detection;
    trace.provenance = SimulatedProvenance{cfg.seed, run_index};
    trace.samples.reserve(static_cast<std::size_t>(cfg.n_images));
    const LossPulse* p = pulse ? &*pulse : nullptr;
    for (int j = 0; j < cfg.n_images; ++j) {
        if (j > 0) exp.hold(p);
        trace.samples.push_back(exp.expose());
    }
    return trace;
}

std::vector<TimeTrace> simulate_detection_campaign(const SimConfig& cfg, int n_runs,
                                                   const std::optional<LossPulse>& pulse, int jobs)
{
    require_valid(validate(cfg), "simulation config");
    if (n_runs < 0) throw ValidationError("n_runs >= 0");
    std::vector<TimeTrace> out(static_cast<std::size_t>(n_runs));
    parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = simulate_trace(cfg, pulse, i); });
    return out;
}

}  // namespace atomcount::sim
