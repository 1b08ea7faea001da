#include "atomcount/io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>

namespace atomcount {

using nlohmann::json;

void to_json(json& j, const DetectionParams& d)
{
    j = json{{"gamma", d.gamma}, {"detuning", d.detuning}, {"s0", d.s0},
             {"eta", d.eta},     {"tau_det", d.tau_det},   {"tau_hold", d.tau_hold}};
}

void from_json(const json& j, DetectionParams& d)
{
    j.at("gamma").get_to(d.gamma);
    j.at("detuning").get_to(d.detuning);
    j.at("s0").get_to(d.s0);
    j.at("eta").get_to(d.eta);
    j.at("tau_det").get_to(d.tau_det);
    j.at("tau_hold").get_to(d.tau_hold);
}

void to_json(json& j, const TrapParams& t)
{
    j = json{{"tau_life", t.tau_life}, {"r_load", t.r_load}, {"p_survival", t.p_survival},
             {"alpha", t.alpha},       {"bkg_var_atoms", t.bkg_var_atoms}};
}

void from_json(const json& j, TrapParams& t)
{
    j.at("tau_life").get_to(t.tau_life);
    j.at("r_load").get_to(t.r_load);
    j.at("p_survival").get_to(t.p_survival);
    j.at("alpha").get_to(t.alpha);
    j.at("bkg_var_atoms").get_to(t.bkg_var_atoms);
}

void to_json(json& j, const GroundTruth& g)
{
    j = json{{"atoms_at_start", g.atoms_at_start},
             {"atoms_at_end", g.atoms_at_end},
             {"losses_in_exposure", g.losses_in_exposure},
             {"loads_in_exposure", g.loads_in_exposure},
             {"loss_times", g.loss_times},
             {"load_times", g.load_times},
             {"pulse_before", g.pulse_before},
             {"atoms_before_pulse", g.atoms_before_pulse},
             {"atoms_after_pulse", g.atoms_after_pulse}};
}

void from_json(const json& j, GroundTruth& g)
{
    j.at("atoms_at_start").get_to(g.atoms_at_start);
    j.at("atoms_at_end").get_to(g.atoms_at_end);
    j.at("losses_in_exposure").get_to(g.losses_in_exposure);
    j.at("loads_in_exposure").get_to(g.loads_in_exposure);
    j.at("loss_times").get_to(g.loss_times);
    j.at("load_times").get_to(g.load_times);
    j.at("pulse_before").get_to(g.pulse_before);
    j.at("atoms_before_pulse").get_to(g.atoms_before_pulse);
    j.at("atoms_after_pulse").get_to(g.atoms_after_pulse);
}

void to_json(json& j, const ImageSample& s)
{
    j = json{{"index", s.index},
             {"start_time", s.start_time},
             {"exposure", s.exposure},
             {"photoelectrons", s.photoelectrons}};
    if (s.truth) j["truth"] = *s.truth;
}

void from_json(const json& j, ImageSample& s)
{
    j.at("index").get_to(s.index);
    j.at("start_time").get_to(s.start_time);
    j.at("exposure").get_to(s.exposure);
    j.at("photoelectrons").get_to(s.photoelectrons);
    if (j.contains("truth")) s.truth = j.at("truth").get<GroundTruth>();
    else s.truth.reset();
}

void to_json(json& j, const TimeTrace& t)
{
    j = json{{"samples", t.samples}, {"params", t.params}};
    if (const auto* sim = std::get_if<SimulatedProvenance>(&t.provenance)) {
        j["provenance"] = {{"kind", "simulated"}, {"seed", sim->seed}, {"run_index", sim->run_index}};
    }
    else {
        j["provenance"] = {{"kind", "ingested"}, {"file", std::get<IngestedProvenance>(t.provenance).file}};
    }
}

void from_json(const json& j, TimeTrace& t)
{
    j.at("samples").get_to(t.samples);
    j.at("params").get_to(t.params);
    const auto& p = j.at("provenance");
    if (p.at("kind") == "simulated") {
        t.provenance = SimulatedProvenance{p.at("seed").get<std::uint64_t>(), p.at("run_index").get<std::uint64_t>()};
    }
    else {
        t.provenance = IngestedProvenance{p.at("file").get<std::string>()};
    }
}

}  // namespace atomcount

namespace atomcount::io {

json to_json(const est::MixtureCalibration& c)
{
    // Non-finite standard errors (unconstrained peaks) serialize as null.
    return json{{"counts_per_atom_per_second", c.counts_per_atom_per_second},
                {"scale_std_error", c.scale_std_error},
                {"intercept", c.intercept},
                {"intercept_std_error", c.intercept_std_error},
                {"exposure", c.exposure},
                {"photoelectrons_per_atom", c.photoelectrons_per_atom()},
                {"peak_centers", c.peak_centers},
                {"peak_widths", c.peak_widths},
                {"peak_amplitudes", c.peak_amplitudes},
                {"center_std_errors", c.center_std_errors},
                {"regression_residuals", c.regression_residuals},
                {"chi2", c.chi2},
                {"dof", c.dof},
                {"iterations", c.iterations},
                {"converged", c.converged},
                {"degenerate", c.degenerate},
                {"notes", c.notes}};
}

est::MixtureCalibration calibration_from_json(const json& j)
{
    est::MixtureCalibration c;
    j.at("counts_per_atom_per_second").get_to(c.counts_per_atom_per_second);
    j.at("intercept").get_to(c.intercept);
    j.at("exposure").get_to(c.exposure);
    if (j.contains("scale_std_error")) j.at("scale_std_error").get_to(c.scale_std_error);
    if (j.contains("intercept_std_error")) j.at("intercept_std_error").get_to(c.intercept_std_error);
    if (j.contains("peak_centers")) j.at("peak_centers").get_to(c.peak_centers);
    if (j.contains("peak_widths")) j.at("peak_widths").get_to(c.peak_widths);
    if (j.contains("peak_amplitudes")) j.at("peak_amplitudes").get_to(c.peak_amplitudes);
    if (j.contains("converged")) j.at("converged").get_to(c.converged);
    if (j.contains("degenerate")) j.at("degenerate").get_to(c.degenerate);
    return c;
}

json to_json(const est::NoiseModelFit& f)
{
    json rows = json::array();
    for (const auto& r : f.rows_used) {
        rows.push_back({{"n_atoms", r.n_atoms}, {"n_pairs", r.n_pairs}, {"variance", r.variance},
                        {"std_error", r.std_error}});
    }
    return json{{"alpha", f.alpha},
                {"alpha_std_error", f.alpha_std_error},
                {"n_max", f.n_max},
                {"n_max_std_error", f.n_max_std_error},
                {"chi2", f.chi2},
                {"dof", f.dof},
                {"bkg", f.coefficients.bkg},
                {"linear", f.coefficients.linear},
                {"quadratic", f.coefficients.quadratic},
                {"rows_used", rows},
                {"notices", f.notices}};
}

json to_json(const est::LifetimeEstimate& e)
{
    return json{{"tau_life", e.tau_life}, {"std_error", e.std_error}, {"one_sided_lower_bound", e.one_sided},
                {"losses", e.losses},     {"atoms_observed", e.atoms_observed}};
}

json to_json(const est::LoadingEstimate& e)
{
    return json{{"r_load", e.r_load},       {"std_error", e.std_error}, {"one_sided", e.one_sided},
                {"upper_bound_95", e.upper_bound_95}, {"loads", e.loads},         {"n_pairs", e.n_pairs}};
}

json to_json(const stab::StabilizationReport& r)
{
    json hist = json::array();
    for (const auto& [k, c] : r.final_number_histogram) hist.push_back({{"atoms", k}, {"runs", c}});
    json out{{"target", r.target},
             {"n_runs", r.n_runs},
             {"n_exhausted", r.n_exhausted},
             {"final_number_histogram", hist},
             {"fidelity", r.fidelity},
             {"fidelity_std_error", r.fidelity_std_error},
             {"fidelity_interval", {r.fidelity_interval.lower, r.fidelity_interval.upper}},
             {"mean_final", r.mean_final},
             {"variance_final", r.variance_final},
             {"suppression_db", r.suppression.infinite ? json(nullptr) : json(r.suppression.db)},
             {"suppression_infinite", r.suppression.infinite}};
    if (r.p_survival_fit) {
        out["p_survival_fit"] = {{"p_s", r.p_survival_fit->p_s},
                                 {"std_error", r.p_survival_fit->std_error},
                                 {"trials", r.p_survival_fit->trials},
                                 {"survivors", r.p_survival_fit->survivors}};
    }
    else {
        out["p_survival_fit"] = nullptr;
    }
    return out;
}

json to_json(const RunConfig& cfg)
{
    const auto& s = cfg.sim;
    json initial;
    std::visit(
        [&](const auto& init) {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, sim::FixedAtoms>) initial = {{"distribution", "fixed"}, {"count", init.count}};
            else if constexpr (std::is_same_v<T, sim::PoissonAtoms>) initial = {{"distribution", "poisson"}, {"mean", init.mean}};
            else initial = {{"distribution", "uniform"}, {"low", init.low}, {"high", init.high}};
        },
        s.initial_atoms);
    json j{{"run", {{"seed", s.seed}, {"n_runs", cfg.n_runs}, {"n_images", s.n_images}}},
           {"detection", s.detection},
           {"trap", s.trap},
           {"initial", initial},
           {"signal",
            {{"counts_per_atom_per_second", sim::effective_counts_per_atom_per_second(s)},
             {"scale_drift_per_second", s.scale_drift_per_second}}}};
    if (cfg.pulse) {
        j["pulse"] = {{"enabled", cfg.pulse->enabled}, {"duration", cfg.pulse->duration},
                      {"placement", cfg.pulse->placement}};
    }
    const auto& c = cfg.controller;
    j["controller"] = {{"threshold", c.threshold},       {"target", c.target},
                       {"n_verify", c.n_verify},         {"max_steps", c.max_steps},
                       {"consecutive_below", c.consecutive_below},
                       {"pulse_duration", c.pulse.duration}, {"pulse_placement", c.pulse.placement}};
    if (c.calibration) {
        j["controller"]["counts_per_atom_per_second"] = c.calibration->counts_per_atom_per_second;
        j["controller"]["intercept"] = c.calibration->intercept;
    }
    const auto& a = cfg.analysis;
    j["analysis"] = {{"bins_per_atom", a.bins_per_atom},
                     {"k_peaks", a.k_peaks},
                     {"n_cut", a.n_cut},
                     {"max_event_n", a.max_event_n},
                     {"exclude_transitions", a.exclude_transitions},
                     {"self_cal_window", a.self_cal_window}};
    if (a.nominal_photoelectrons_per_atom) {
        j["analysis"]["nominal_photoelectrons_per_atom"] = *a.nominal_photoelectrons_per_atom;
    }
    return j;
}

std::string timestamp_now()
{
    std::time_t t = 0;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
        t = static_cast<std::time_t>(parse_int(epoch, "SOURCE_DATE_EPOCH"));
    }
    else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json write_manifest(const fs::path& out_dir, const Manifest& m, const std::string& started_at)
{
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), out_dir);
        if (rel == fs::path(kManifestName)) continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());

    json outputs = json::array();
    for (const auto& rel : files) {
        outputs.push_back({{"path", rel.generic_string()}, {"sha256", sha256_file(out_dir / rel)}});
    }
    json inputs = json::array();
    for (const auto& in : m.inputs) {
        inputs.push_back({{"path", in.generic_string()}, {"sha256", sha256_file(in)}});
    }
    json body{{"tool", "atomcount"},
              {"version", kToolVersion},
              {"command", m.command},
              {"config", m.config},
              {"seed", m.seed ? json(*m.seed) : json(nullptr)},
              {"timestamps", {{"started", started_at}, {"finished", timestamp_now()}}},
              {"inputs", inputs},
              {"outputs", outputs}};
    write_file(out_dir / kManifestName, body.dump(2) + "\n");
    return body;
}

std::vector<std::string> verify_manifest(const fs::path& out_dir)
{
    const auto body = json::parse(read_file(out_dir / kManifestName));
    std::vector<std::string> bad;
    for (const auto& o : body.at("outputs")) {
        const auto rel = o.at("path").get<std::string>();
        const fs::path p = out_dir / rel;
        if (!fs::exists(p) || sha256_file(p) != o.at("sha256").get<std::string>()) bad.push_back(rel);
    }
    return bad;
}

}  // namespace atomcount::io
