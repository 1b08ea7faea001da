#include "atomcount/cli.hpp"

#include "atomcount/io.hpp"
#include "atomcount/physics.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace atomcount::cli {

namespace {

namespace fs = std::filesystem;
using io::format_double;
using io::json;

struct Options {
    std::string config;
    std::string out;
    std::vector<std::string> in;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> runs;
    std::optional<int> jobs;
    std::string format;
};

/// Thrown for partial analysis failure after all outputs have been written.
class PartialFailure : public EstimationError {
    using EstimationError::EstimationError;
};

std::string run_name(const char* prefix, std::uint64_t run, const char* ext)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05llu.%s", prefix, static_cast<unsigned long long>(run), ext);
    return buf;
}

io::RunConfig resolve_config(const Options& o, bool need_seed)
{
    io::RunConfig cfg = o.config.empty() ? io::RunConfig{} : io::load_config(o.config);
    if (o.seed_override) {
        cfg.sim.seed = *o.seed_override;
        cfg.has_seed = true;
    }
    if (o.runs) cfg.n_runs = *o.runs;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (need_seed && !cfg.has_seed) {
        throw ConfigError("a seed is required: set [run] seed in the config or pass --seed-override");
    }
    if (cfg.n_runs < 1) throw ConfigError("n_runs must be at least 1");
    if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
    return cfg;
}

fs::path prepare_out_dir(const std::string& out)
{
    if (out.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
    return out;
}

std::vector<fs::path> config_inputs(const Options& o)
{
    if (o.config.empty()) return {};
    return {fs::path(o.config)};
}

std::string csv_row(std::initializer_list<std::string> cells)
{
    std::string row;
    for (const auto& c : cells) {
        if (!row.empty()) row += ',';
        row += c;
    }
    return row + '\n';
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Trace files under the given paths; directories contribute every *.csv
/// whose first line is the trace header, in name order.
std::vector<fs::path> collect_trace_files(const std::vector<std::string>& inputs)
{
    if (inputs.empty()) throw ConfigError("--in is required");
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::recursive_directory_iterator(p)) {
                if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
                const auto text = io::read_file(e.path());
                if (text.rfind("run,image,", 0) == 0) found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        }
        else if (fs::exists(p)) {
            files.push_back(p);
        }
        else {
            throw IoError("input not found: " + in);
        }
    }
    if (files.empty()) throw IoError("no trace files found in the given inputs");
    return files;
}

struct LoadedTraces {
    std::vector<TimeTrace> traces;
    std::vector<fs::path> files;
    std::vector<std::string> errors;
};

LoadedTraces load_traces(const std::vector<std::string>& inputs, const DetectionParams& params)
{
    LoadedTraces out;
    for (const auto& f : collect_trace_files(inputs)) {
        try {
            auto t = io::read_trace_file(f, params);
            out.traces.insert(out.traces.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
            out.files.push_back(f);
        }
        catch (const Error& e) {
            out.errors.push_back(f.generic_string() + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const Options& o, std::ostream& out)
{
    const auto started = io::timestamp_now();
    const auto cfg = resolve_config(o, true);
    const auto dir = prepare_out_dir(o.out);
    const bool as_json = o.format == "json";

    const auto traces = sim::simulate_detection_campaign(cfg.sim, cfg.n_runs, cfg.pulse, cfg.jobs);
    for (std::size_t r = 0; r < traces.size(); ++r) {
        if (as_json) io::write_file(dir / run_name("trace", r, "json"), dump(json(traces[r])));
        else io::write_file(dir / run_name("trace", r, "csv"), io::trace_to_csv(traces[r], r));
    }
    io::write_manifest(dir, {"simulate", io::to_json(cfg), cfg.sim.seed, config_inputs(o)}, started);
    out << "wrote " << traces.size() << " trace file(s) to " << dir.generic_string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// analyze

double nominal_spacing(const io::RunConfig& cfg)
{
    if (cfg.analysis.nominal_photoelectrons_per_atom) return *cfg.analysis.nominal_photoelectrons_per_atom;
    return physics::photoelectrons_per_atom(cfg.sim.detection);
}

std::string histogram_csv(const est::SignalHistogram& h, const est::MixtureCalibration* cal)
{
    std::string s = "bin_center,count,model\n";
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double x = h.center(i);
        std::string model;
        if (cal != nullptr) {
            double m = 0.0;
            for (std::size_t k = 0; k < cal->peak_centers.size(); ++k) {
                const double z = (x - cal->peak_centers[k]) / cal->peak_widths[k];
                m += cal->peak_amplitudes[k] * std::exp(-0.5 * z * z);
            }
            model = format_double(m);
        }
        s += csv_row({format_double(x), std::to_string(h.counts[i]), model});
    }
    return s;
}

std::string mixture_csv(const est::MixtureCalibration& cal)
{
    std::string s = "peak,center,width,amplitude,center_std_error,regression_residual\n";
    for (std::size_t k = 0; k < cal.peak_centers.size(); ++k) {
        const auto at = [&](const std::vector<double>& v) { return k < v.size() ? format_double(v[k]) : ""; };
        s += csv_row({std::to_string(k), at(cal.peak_centers), at(cal.peak_widths), at(cal.peak_amplitudes),
                      at(cal.center_std_errors), at(cal.regression_residuals)});
    }
    return s;
}

std::string variance_csv(const est::VarianceTable& t, const physics::NoiseCoefficients* model)
{
    std::string s = "n_atoms,n_pairs,variance,std_error,model\n";
    for (const auto& r : t.rows) {
        s += csv_row({std::to_string(r.n_atoms), std::to_string(r.n_pairs), format_double(r.variance),
                      format_double(r.std_error), model ? format_double(model->total(r.n_atoms)) : ""});
    }
    return s;
}

json events_json(const est::EventTable& table, const est::LifetimeEstimate& life, const est::LoadingEstimate& load,
                 double cycle)
{
    json rows = json::array();
    for (const auto& [n, changes] : table) {
        for (const auto& [delta, count] : changes) rows.push_back({{"n_before", n}, {"change", delta}, {"count", count}});
    }
    return json{{"cycle_time", cycle}, {"lifetime", io::to_json(life)}, {"loading", io::to_json(load)},
                {"event_table", rows}};
}

int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err)
{
    const auto started = io::timestamp_now();
    const auto cfg = resolve_config(o, false);
    const auto dir = prepare_out_dir(o.out);
    const auto& a = cfg.analysis;
    const auto& d = cfg.sim.detection;

    auto loaded = load_traces(o.in, d);
    std::vector<std::string> problems = loaded.errors;
    auto inputs = config_inputs(o);
    inputs.insert(inputs.end(), loaded.files.begin(), loaded.files.end());
    json summary{{"traces", loaded.traces.size()}, {"files", loaded.files.size()}};

    const auto finish = [&]() {
        summary["problems"] = problems;
        io::write_file(dir / "analysis.json", dump(summary));
        io::write_manifest(dir, {"analyze", io::to_json(cfg), std::nullopt, inputs}, started);
        for (const auto& p : problems) err << "warning: " << p << "\n";
        out << "analyzed " << loaded.traces.size() << " trace(s) into " << dir.generic_string() << "\n";
        if (!problems.empty()) throw PartialFailure("analysis completed with " + std::to_string(problems.size()) +
                                                    " problem(s)");
        return kOk;
    };

    if (loaded.traces.empty()) {
        problems.push_back("no valid traces to analyze");
        return finish();
    }

    auto h = est::build_histogram(loaded.traces, a.bins_per_atom, nominal_spacing(cfg));
    std::optional<est::MixtureCalibration> cal;
    std::string refusal;
    try {
        const double spacing = est::estimate_peak_spacing(h);
        auto fit = est::fit_mixture(h, a.k_peaks, spacing, d.tau_det);
        const int resolved = est::count_resolved_peaks(h, fit.intercept, fit.photoelectrons_per_atom());
        summary["resolved_peaks"] = resolved;
        if (fit.degenerate) {
            refusal = "mixture fit is degenerate";
            for (const auto& n : fit.notes) refusal += "; " + n;
        }
        else if (resolved < 3) {
            refusal = "only " + std::to_string(resolved) + " resolved integer peaks (need 3)";
        }
        else {
            cal = fit;
        }
        io::write_file(dir / "mixture.csv", mixture_csv(fit));
    }
    catch (const EstimationError& e) {
        refusal = e.what();
    }
    io::write_file(dir / "histogram.csv", histogram_csv(h, cal ? &*cal : nullptr));

    if (!cal) {
        problems.push_back("calibration refused: " + refusal +
                           ". Supply more traces spanning several atom numbers, or lower k_peaks in [analysis].");
        return finish();
    }
    io::write_file(dir / "calibration.json", dump(io::to_json(*cal)));

    std::vector<est::EventRecord> events;
    std::int64_t pairs = 0;
    for (const auto& t : loaded.traces) {
        auto e = est::classify_transitions(t, *cal);
        pairs += static_cast<std::int64_t>(e.size());
        events.insert(events.end(), e.begin(), e.end());
    }
    const double cycle = est::cycle_time(loaded.traces.front());
    const auto table = est::tabulate_events(events, a.max_event_n);
    std::string ev_csv = "n_before,change,count\n";
    for (const auto& [n, changes] : table) {
        for (const auto& [delta, count] : changes) {
            ev_csv += csv_row({std::to_string(n), std::to_string(delta), std::to_string(count)});
        }
    }
    io::write_file(dir / "events.csv", ev_csv);
    try {
        const auto life = est::estimate_lifetime(events, cycle);
        const auto load = est::estimate_loading_rate(events, pairs, cycle);
        io::write_file(dir / "events.json", dump(events_json(table, life, load, cycle)));
    }
    catch (const EstimationError& e) {
        problems.push_back(std::string("lifetime/loading: ") + e.what());
    }

    est::TwoSampleOptions opts;
    opts.exclude_transitions = a.exclude_transitions;
    const auto var = est::two_sample_variance(loaded.traces, *cal, opts);
    const double loss_fraction = a.exclude_transitions ? est::kLossFractionStepsExcluded : est::kLossFractionAllPairs;
    try {
        const auto fit = est::fit_noise_model(var, d, cfg.sim.trap, a.n_cut, cal->counts_per_atom_per_second,
                                              loss_fraction);
        io::write_file(dir / "variance.csv", variance_csv(var, &fit.coefficients));
        io::write_file(dir / "noise_fit.json", dump(io::to_json(fit)));
        summary["alpha"] = fit.alpha;
        summary["n_max"] = fit.n_max;
    }
    catch (const est::AlphaUnidentifiable& e) {
        io::write_file(dir / "variance.csv", variance_csv(var, nullptr));
        io::write_file(dir / "noise_fit.json",
                       dump(json{{"alpha", nullptr}, {"alpha_upper_bound", e.alpha_upper_bound}, {"error", e.what()}}));
        problems.push_back(std::string("noise fit: ") + e.what());
    }
    catch (const EstimationError& e) {
        io::write_file(dir / "variance.csv", variance_csv(var, nullptr));
        problems.push_back(std::string("noise fit: ") + e.what());
    }
    summary["counts_per_atom_per_second"] = cal->counts_per_atom_per_second;
    return finish();
}

// ---------------------------------------------------------------------------
// stabilize

int cmd_stabilize(const Options& o, std::ostream& out)
{
    const auto started = io::timestamp_now();
    const auto cfg = resolve_config(o, true);
    const auto dir = prepare_out_dir(o.out);
    const bool as_json = o.format == "json";
    const auto& c = cfg.controller;

    const auto runs = stab::run_campaign(c, cfg.sim, cfg.n_runs, cfg.jobs);
    fs::create_directories(dir / "traces");
    std::string outcomes = "run,status,steps,pulses_applied,threshold_image,reported_number,reported_real,verification\n";
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& run = runs[r];
        if (as_json) io::write_file(dir / "traces" / run_name("run", r, "json"), dump(json(run.trace)));
        else io::write_file(dir / "traces" / run_name("run", r, "csv"), io::trace_to_csv(run.trace, r));
        const auto& oc = run.outcome;
        std::string verify;
        for (const int v : oc.verification_numbers) verify += (verify.empty() ? "" : " ") + std::to_string(v);
        outcomes += csv_row({std::to_string(r), stab::to_string(oc.status), std::to_string(oc.steps),
                             std::to_string(oc.pulses_applied), std::to_string(oc.threshold_image),
                             std::to_string(oc.reported_number), format_double(oc.reported_real), verify});
    }
    io::write_file(dir / "outcomes.csv", outcomes);

    const auto report = stab::summarize(runs, c.target);
    std::string tr = "n_in,n_out,count\n";
    for (const auto& [n_in, row] : report.transitions.counts) {
        for (const auto& [n_out, count] : row) {
            tr += csv_row({std::to_string(n_in), std::to_string(n_out), std::to_string(count)});
        }
    }
    io::write_file(dir / "transitions.csv", tr);

    // Prediction: truncated binomial for the final step from target + 1.
    const double p_s = report.p_survival_fit ? report.p_survival_fit->p_s : cfg.sim.trap.p_survival;
    std::vector<double> predicted;
    if (p_s > 0.0 && p_s < 1.0 && c.target >= 0) predicted = stab::truncated_final_distribution(p_s, c.target + 1, c.target);
    int hi = c.target;
    if (!report.final_number_histogram.empty()) hi = std::max(hi, report.final_number_histogram.rbegin()->first);
    std::string hist = "atoms,runs,fraction,predicted\n";
    for (int k = 0; k <= hi; ++k) {
        const auto it = report.final_number_histogram.find(k);
        const std::int64_t n = it == report.final_number_histogram.end() ? 0 : it->second;
        const double frac = report.n_runs > 0 ? static_cast<double>(n) / static_cast<double>(report.n_runs) : 0.0;
        const double pred = static_cast<std::size_t>(k) < predicted.size() ? predicted[static_cast<std::size_t>(k)] : 0.0;
        hist += csv_row({std::to_string(k), std::to_string(n), format_double(frac), format_double(pred)});
    }
    io::write_file(dir / "final_histogram.csv", hist);

    auto rj = io::to_json(report);
    rj["max_fidelity"] = (p_s > 0.0 && p_s <= 1.0) ? json(stab::max_fidelity(p_s, c.target)) : json(nullptr);
    io::write_file(dir / "report.json", dump(rj));
    io::write_manifest(dir, {"stabilize", io::to_json(cfg), cfg.sim.seed, config_inputs(o)}, started);

    out << "runs " << runs.size() << ", exhausted " << report.n_exhausted << ", fidelity "
        << format_double(report.fidelity) << ", suppression "
        << (report.suppression.infinite ? std::string("inf") : format_double(report.suppression.db)) << " dB\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// calibrate

int cmd_calibrate(const Options& o, std::ostream& out, std::ostream& err)
{
    const auto started = io::timestamp_now();
    const auto cfg = resolve_config(o, false);
    const auto dir = prepare_out_dir(o.out);
    const auto& d = cfg.sim.detection;

    auto loaded = load_traces(o.in, d);
    std::vector<std::string> problems = loaded.errors;
    auto inputs = config_inputs(o);
    inputs.insert(inputs.end(), loaded.files.begin(), loaded.files.end());

    const double nominal = nominal_spacing(cfg);
    std::string csv = "trace,scale,counts_per_atom_per_second,objective,runner_up_scale,runner_up_objective,"
                      "distinct_levels,status\n";
    json rows = json::array();
    for (std::size_t i = 0; i < loaded.traces.size(); ++i) {
        const auto& t = loaded.traces[i];
        std::vector<double> signals;
        for (const auto& s : t.samples) signals.push_back(s.photoelectrons);
        const double exposure = t.samples.empty() ? d.tau_det : t.samples.front().exposure;
        try {
            const auto sc = est::self_calibrate_integer(signals, nominal, cfg.analysis.self_cal_window);
            csv += csv_row({std::to_string(i), format_double(sc.scale), format_double(sc.scale / exposure),
                            format_double(sc.objective), format_double(sc.runner_up_scale),
                            format_double(sc.runner_up_objective), std::to_string(sc.distinct_levels), "ok"});
            rows.push_back({{"trace", i},
                            {"scale", sc.scale},
                            {"counts_per_atom_per_second", sc.scale / exposure},
                            {"objective", sc.objective},
                            {"distinct_levels", sc.distinct_levels}});
        }
        catch (const EstimationError& e) {
            csv += csv_row({std::to_string(i), "", "", "", "", "", "", "refused"});
            rows.push_back({{"trace", i}, {"error", e.what()}});
            problems.push_back("trace " + std::to_string(i) + ": " + e.what());
        }
    }
    io::write_file(dir / "self_calibration.csv", csv);
    io::write_file(dir / "self_calibration.json",
                   dump(json{{"nominal_scale", nominal}, {"window", cfg.analysis.self_cal_window}, {"runs", rows},
                             {"problems", problems}}));
    io::write_manifest(dir, {"calibrate", io::to_json(cfg), std::nullopt, inputs}, started);
    for (const auto& p : problems) err << "warning: " << p << "\n";
    out << "self-calibrated " << loaded.traces.size() << " trace(s)\n";
    if (!problems.empty()) throw PartialFailure("self-calibration refused for some traces");
    return kOk;
}

// ---------------------------------------------------------------------------
// noisefit

est::VarianceTable read_variance_csv(const fs::path& path)
{
    const auto text = io::read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("n_atoms,n_pairs,variance,std_error", 0) != 0) {
        throw IoError(path.generic_string() + ": missing variance header (n_atoms,n_pairs,variance,std_error)");
    }
    est::VarianceTable t;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        const auto ctx = path.filename().string() + ":" + std::to_string(line_no);
        if (cells.size() < 4) throw IoError(ctx + ": expected at least 4 columns");
        est::VarianceRow r;
        r.n_atoms = static_cast<int>(io::parse_int(cells[0], ctx));
        r.n_pairs = io::parse_int(cells[1], ctx);
        r.variance = io::parse_double(cells[2], ctx);
        r.std_error = io::parse_double(cells[3], ctx);
        t.rows.push_back(r);
    }
    return t;
}

int cmd_noisefit(const Options& o, std::ostream& out)
{
    const auto started = io::timestamp_now();
    const auto cfg = resolve_config(o, false);
    if (o.in.size() != 1) throw ConfigError("noisefit takes exactly one --in variance table");
    const auto dir = prepare_out_dir(o.out);
    const auto& d = cfg.sim.detection;
    const auto& t = cfg.sim.trap;

    const auto table = read_variance_csv(o.in.front());
    const double rate = sim::effective_counts_per_atom_per_second(cfg.sim);
    const double loss_fraction =
        cfg.analysis.exclude_transitions ? est::kLossFractionStepsExcluded : est::kLossFractionAllPairs;
    auto inputs = config_inputs(o);
    inputs.emplace_back(o.in.front());

    const auto fit = est::fit_noise_model(table, d, t, cfg.analysis.n_cut, rate, loss_fraction);
    io::write_file(dir / "noise_fit.json", dump(io::to_json(fit)));

    // Budget split at the fitted alpha, loss term scaled to the fitted fraction.
    TrapParams fitted = t;
    fitted.alpha = fit.alpha;
    std::string curve = "n_atoms,bkg,psn,srn,loss,total\n";
    const int n_hi = std::max(cfg.analysis.n_cut, static_cast<int>(std::ceil(std::min(fit.n_max, 1000.0))));
    for (int n = 0; n <= n_hi; ++n) {
        const auto b = physics::noise_budget(n, rate, d, fitted);
        curve += csv_row({std::to_string(n), format_double(b.bkg), format_double(b.psn), format_double(b.srn),
                          format_double(b.loss * loss_fraction / est::kLossFractionAllPairs),
                          format_double(fit.coefficients.total(n))});
    }
    io::write_file(dir / "noise_model.csv", curve);
    io::write_manifest(dir, {"noisefit", io::to_json(cfg), std::nullopt, inputs}, started);
    out << "alpha " << format_double(fit.alpha) << " +- " << format_double(fit.alpha_std_error) << ", n_max "
        << format_double(fit.n_max) << " +- " << format_double(fit.n_max_std_error) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const Options& o, std::ostream& out)
{
    if (o.in.size() != 1) throw ConfigError("report takes exactly one --in output directory");
    const fs::path dir(o.in.front());
    if (!fs::exists(dir / io::kManifestName)) throw IoError("no manifest in " + dir.generic_string());
    const auto manifest = json::parse(io::read_file(dir / io::kManifestName));
    const auto bad = io::verify_manifest(dir);

    json summary{{"directory", dir.generic_string()},
                 {"command", manifest.at("command")},
                 {"seed", manifest.at("seed")},
                 {"outputs", manifest.at("outputs").size()},
                 {"digest_mismatches", bad}};
    for (const char* name : {"report.json", "noise_fit.json", "calibration.json", "events.json", "analysis.json"}) {
        if (fs::exists(dir / name)) summary["reports"][name] = json::parse(io::read_file(dir / name));
    }

    if (o.format == "json") {
        out << dump(summary);
    }
    else {
        out << "command: " << manifest.at("command").get<std::string>() << "\n";
        out << "outputs: " << manifest.at("outputs").size() << " file(s), "
            << (bad.empty() ? "all digests match" : std::to_string(bad.size()) + " digest mismatch(es)") << "\n";
        if (summary.contains("reports")) {
            for (const auto& [name, body] : summary["reports"].items()) {
                out << name << ":\n";
                for (const auto& [k, v] : body.items()) {
                    if (v.is_primitive()) out << "  " << k << " = " << v.dump() << "\n";
                }
            }
        }
    }
    if (!bad.empty()) throw IoError("digest mismatch in " + dir.generic_string());
    return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Simulation and analysis of single-atom-resolved fluorescence counting", "atomcount"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(io::kToolVersion));

    Options o;
    const auto add_common = [&](CLI::App* sub, bool config_required, bool with_in, bool with_out) {
        auto* c = sub->add_option("--config", o.config, "run configuration file");
        if (config_required) c->required();
        if (with_in) sub->add_option("--in", o.in, "input trace files or directories")->required();
        if (with_out) sub->add_option("--out", o.out, "output directory")->required();
    };

    auto* simulate = app.add_subcommand("simulate", "simulate detection traces");
    add_common(simulate, true, false, true);
    simulate->add_option("--seed-override", o.seed_override, "replace the configured seed");
    simulate->add_option("--runs", o.runs, "number of runs");
    simulate->add_option("--jobs", o.jobs, "worker threads");
    simulate->add_option("--format", o.format, "trace format")->check(CLI::IsMember({"csv", "json"}));

    auto* analyze = app.add_subcommand("analyze", "calibrate, count events and fit the noise model");
    add_common(analyze, false, true, true);

    auto* stabilize = app.add_subcommand("stabilize", "run the closed-loop number stabilization");
    add_common(stabilize, true, false, true);
    stabilize->add_option("--seed-override", o.seed_override, "replace the configured seed");
    stabilize->add_option("--runs", o.runs, "number of runs");
    stabilize->add_option("--jobs", o.jobs, "worker threads");
    stabilize->add_option("--format", o.format, "trace format")->check(CLI::IsMember({"csv", "json"}));

    auto* calibrate = app.add_subcommand("calibrate", "per-trace integer self-calibration");
    add_common(calibrate, false, true, true);

    auto* noisefit = app.add_subcommand("noisefit", "fit the noise model to a variance table");
    add_common(noisefit, false, true, true);

    auto* report = app.add_subcommand("report", "summarize an output directory and verify digests");
    report->add_option("--in", o.in, "output directory")->required();
    report->add_option("--format", o.format, "summary format")->check(CLI::IsMember({"text", "json"}));

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(o, out);
        if (analyze->parsed()) return cmd_analyze(o, out, err);
        if (stabilize->parsed()) return cmd_stabilize(o, out);
        if (calibrate->parsed()) return cmd_calibrate(o, out, err);
        if (noisefit->parsed()) return cmd_noisefit(o, out);
        if (report->parsed()) return cmd_report(o, out);
    }
    catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    }
    catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidation;
    }
    catch (const EstimationError& e) {
        err << "analysis incomplete: " << e.what() << "\n";
        return kPartial;
    }
    catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIo;
    }
    catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIo;
    }
    catch (const json::exception& e) {
        err << "I/O error: malformed JSON: " << e.what() << "\n";
        return kIo;
    }
    catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}

}  // namespace atomcount::cli
