#include "atomcount/io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <map>
#include <set>
#include <sstream>

namespace atomcount::io {

namespace pt = boost::property_tree;

namespace {

// Known keys per section; anything else is a typo and rejected.
const std::map<std::string, std::set<std::string>>& schema()
{
    static const std::map<std::string, std::set<std::string>> s = {
        {"run", {"seed", "n_runs", "n_images", "jobs"}},
        {"detection", {"gamma_hz", "detuning_hz", "s0", "eta", "tau_det", "tau_hold"}},
        {"trap", {"tau_life", "r_load", "p_survival", "alpha", "bkg_var_atoms"}},
        {"initial", {"distribution", "count", "mean", "low", "high"}},
        {"signal", {"counts_per_atom_per_second", "scale_drift_per_second"}},
        {"pulse", {"enabled", "duration", "placement"}},
        {"controller",
         {"threshold", "target", "n_verify", "max_steps", "consecutive_below", "counts_per_atom_per_second",
          "intercept"}},
        {"analysis",
         {"bins_per_atom", "k_peaks", "n_cut", "max_event_n", "exclude_transitions", "self_cal_window",
          "nominal_photoelectrons_per_atom"}},
    };
    return s;
}

class Reader {
public:
    Reader(const pt::ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key) const
    {
        const auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return *v;
    }

    void real(const std::string& section, const std::string& key, double& out) const
    {
        if (auto v = raw(section, key)) out = number(section, key, *v);
    }

    std::optional<double> optional_real(const std::string& section, const std::string& key) const
    {
        if (auto v = raw(section, key)) return number(section, key, *v);
        return std::nullopt;
    }

    template <typename Int>
    void integer(const std::string& section, const std::string& key, Int& out) const
    {
        if (auto v = raw(section, key)) {
            try {
                out = static_cast<Int>(parse_int(*v, where(section, key)));
            }
            catch (const IoError& e) {
                throw ConfigError(e.what());
            }
        }
    }

    void flag(const std::string& section, const std::string& key, bool& out) const
    {
        if (auto v = raw(section, key)) {
            if (*v == "true" || *v == "1" || *v == "yes") out = true;
            else if (*v == "false" || *v == "0" || *v == "no") out = false;
            else throw ConfigError(where(section, key) + ": expected true/false, got '" + *v + "'");
        }
    }

    std::string where(const std::string& section, const std::string& key) const
    {
        return source_ + ": [" + section + "] " + key;
    }

private:
    double number(const std::string& section, const std::string& key, const std::string& v) const
    {
        try {
            return parse_double(v, where(section, key));
        }
        catch (const IoError& e) {
            throw ConfigError(e.what());
        }
    }

    const pt::ptree& tree_;
    std::string source_;
};

// Strips trailing "; comment" / "# comment" so units can be annotated inline.
std::string strip_inline_comments(const std::string& text)
{
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        auto first = line.find_first_not_of(" \t");
        if (first != std::string::npos && line[first] != ';' && line[first] != '#') {
            const auto cut = line.find_first_of(";#", first);
            if (cut != std::string::npos) line.erase(cut);
        }
        out << line << '\n';
    }
    return out.str();
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& source)
{
    pt::ptree tree;
    try {
        std::istringstream in(strip_inline_comments(text));
        pt::ini_parser::read_ini(in, tree);
    }
    catch (const pt::ini_parser_error& e) {
        throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }

    for (const auto& [section, body] : tree) {
        const auto known = schema().find(section);
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(source + ": key '" + section + "' outside of any [section]");
        }
        if (known == schema().end()) throw ConfigError(source + ": unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            if (!known->second.contains(key)) throw ConfigError(source + ": unknown key '" + key + "' in [" + section + "]");
        }
    }

    const Reader r(tree, source);
    RunConfig cfg;
    auto& s = cfg.sim;

    if (r.raw("run", "seed")) {
        r.integer("run", "seed", s.seed);
        cfg.has_seed = true;
    }
    r.integer("run", "n_runs", cfg.n_runs);
    r.integer("run", "n_images", s.n_images);
    r.integer("run", "jobs", cfg.jobs);

    auto& d = s.detection;
    if (auto g = r.optional_real("detection", "gamma_hz")) d.gamma = kTwoPi * *g;
    if (auto g = r.optional_real("detection", "detuning_hz")) d.detuning = kTwoPi * *g;
    r.real("detection", "s0", d.s0);
    r.real("detection", "eta", d.eta);
    r.real("detection", "tau_det", d.tau_det);
    r.real("detection", "tau_hold", d.tau_hold);

    auto& t = s.trap;
    r.real("trap", "tau_life", t.tau_life);
    r.real("trap", "r_load", t.r_load);
    r.real("trap", "p_survival", t.p_survival);
    r.real("trap", "alpha", t.alpha);
    r.real("trap", "bkg_var_atoms", t.bkg_var_atoms);

    if (auto dist = r.raw("initial", "distribution")) {
        if (*dist == "fixed") {
            sim::FixedAtoms f;
            r.integer("initial", "count", f.count);
            s.initial_atoms = f;
        }
        else if (*dist == "poisson") {
            sim::PoissonAtoms p;
            r.real("initial", "mean", p.mean);
            s.initial_atoms = p;
        }
        else if (*dist == "uniform") {
            sim::UniformAtoms u;
            r.integer("initial", "low", u.low);
            r.integer("initial", "high", u.high);
            s.initial_atoms = u;
        }
        else {
            throw ConfigError(r.where("initial", "distribution") + ": expected fixed, poisson or uniform");
        }
    }

    s.counts_per_atom_per_second = r.optional_real("signal", "counts_per_atom_per_second");
    r.real("signal", "scale_drift_per_second", s.scale_drift_per_second);

    if (r.raw("pulse", "enabled") || r.raw("pulse", "duration") || r.raw("pulse", "placement")) {
        sim::LossPulse p;
        p.enabled = true;
        r.flag("pulse", "enabled", p.enabled);
        r.real("pulse", "duration", p.duration);
        r.real("pulse", "placement", p.placement);
        cfg.pulse = p;
        cfg.controller.pulse = p;
        cfg.controller.pulse.enabled = true;
    }

    auto& c = cfg.controller;
    r.real("controller", "threshold", c.threshold);
    r.integer("controller", "target", c.target);
    r.integer("controller", "n_verify", c.n_verify);
    r.integer("controller", "max_steps", c.max_steps);
    r.integer("controller", "consecutive_below", c.consecutive_below);
    if (auto cps = r.optional_real("controller", "counts_per_atom_per_second")) {
        auto cal = est::ideal_calibration(*cps, d.tau_det);
        r.real("controller", "intercept", cal.intercept);
        c.calibration = cal;
    }

    auto& a = cfg.analysis;
    r.integer("analysis", "bins_per_atom", a.bins_per_atom);
    r.integer("analysis", "k_peaks", a.k_peaks);
    r.integer("analysis", "n_cut", a.n_cut);
    r.integer("analysis", "max_event_n", a.max_event_n);
    r.flag("analysis", "exclude_transitions", a.exclude_transitions);
    r.real("analysis", "self_cal_window", a.self_cal_window);
    a.nominal_photoelectrons_per_atom = r.optional_real("analysis", "nominal_photoelectrons_per_atom");
    return cfg;
}

RunConfig load_config(const fs::path& path)
{
    std::string text;
    try {
        text = read_file(path);
    }
    catch (const IoError&) {
        throw ConfigError("cannot read config file " + path.string());
    }
    return parse_config_text(text, path.filename().string());
}

}  // namespace atomcount::io
