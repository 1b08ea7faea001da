#include "atomcount/core.hpp"

#include <cmath>
#include <sstream>

namespace atomcount {

DetectionParams reference_detection() { return DetectionParams{}; }

TrapParams reference_trap() { return TrapParams{}; }

namespace {

void check(std::vector<std::string>& out, bool ok, const char* rule)
{
    if (!ok) out.emplace_back(rule);
}

}  // namespace

ValidationReport validate(const DetectionParams& d, const TrapParams& t)
{
    ValidationReport r;
    auto& v = r.violations;
    // Written as negated "good" conditions so NaN fails every check.
    check(v, d.gamma > 0, "gamma > 0");
    check(v, std::isfinite(d.detuning), "detuning finite");
    check(v, d.s0 >= 0 && std::isfinite(d.s0), "s0 >= 0");
    check(v, d.eta > 0, "0 < eta");
    check(v, d.eta <= 1, "eta <= 1");
    check(v, d.tau_det > 0, "tau_det > 0");
    check(v, d.tau_hold >= 0, "tau_hold >= 0");

    check(v, t.tau_life > 0, "tau_life > 0");
    check(v, t.r_load >= 0, "r_load >= 0");
    check(v, t.p_survival >= 0, "0 <= p_survival");
    check(v, t.p_survival <= 1, "p_survival <= 1");
    check(v, t.alpha >= 0, "alpha >= 0");
    check(v, t.bkg_var_atoms >= 0, "bkg_var_atoms >= 0");
    return r;
}

ValidationReport validate(const TimeTrace& trace)
{
    ValidationReport r;
    constexpr double kSlack = 1e-9;
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        const auto& s = trace.samples[i];
        if (!(s.exposure > 0)) {
            r.violations.push_back("sample " + std::to_string(i) + ": exposure > 0");
        }
        if (i == 0) continue;
        const auto& prev = trace.samples[i - 1];
        if (s.index <= prev.index) {
            r.violations.push_back("sample " + std::to_string(i) + ": indices strictly increasing");
        }
        if (!(s.start_time > prev.start_time)) {
            r.violations.push_back("sample " + std::to_string(i) + ": start times strictly increasing");
        }
        else if (s.start_time - (prev.start_time + prev.exposure) < trace.params.tau_hold - kSlack) {
            r.violations.push_back("sample " + std::to_string(i) + ": separated by >= tau_hold");
        }
    }
    return r;
}

void require_valid(const ValidationReport& report, const std::string& what)
{
    if (report.ok()) return;
    std::ostringstream msg;
    msg << what << " invalid:";
    for (const auto& v : report.violations) msg << " [" << v << "]";
    throw ValidationError(msg.str());
}

}  // namespace atomcount
