#pragma once

#include "atomcount/core.hpp"
#include "atomcount/estimation.hpp"
#include "atomcount/simulator.hpp"
#include "atomcount/stabilization.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace atomcount {

// Found by argument-dependent lookup from nlohmann::json.
void to_json(nlohmann::json& j, const DetectionParams& d);
void from_json(const nlohmann::json& j, DetectionParams& d);
void to_json(nlohmann::json& j, const TrapParams& t);
void from_json(const nlohmann::json& j, TrapParams& t);
void to_json(nlohmann::json& j, const GroundTruth& g);
void from_json(const nlohmann::json& j, GroundTruth& g);
void to_json(nlohmann::json& j, const ImageSample& s);
void from_json(const nlohmann::json& j, ImageSample& s);
void to_json(nlohmann::json& j, const TimeTrace& t);
void from_json(const nlohmann::json& j, TimeTrace& t);

}  // namespace atomcount

namespace atomcount::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Numbers

/// Shortest text that parses back to the identical double.
std::string format_double(double v);

/// Strict full-string parse; throws IoError with `context` on failure.
double parse_double(std::string_view text, std::string_view context);
std::int64_t parse_int(std::string_view text, std::string_view context);

// ---------------------------------------------------------------------------
// Trace files: one comma-separated row per image.

inline constexpr std::string_view kTraceHeader =
    "run,image,start_time,exposure,photoelectrons,atoms_start,atoms_end,losses_in_exposure,loads_in_exposure,"
    "pulse_before";

std::string trace_to_csv(const TimeTrace& trace, std::uint64_t run);

/// Ground-truth columns may be empty for ingested data. Rows are grouped into
/// one trace per run id, in order of first appearance.
std::vector<TimeTrace> traces_from_csv(std::string_view text, const DetectionParams& params,
                                       const std::string& source);
std::vector<TimeTrace> read_trace_file(const fs::path& path, const DetectionParams& params);

// ---------------------------------------------------------------------------
// Files and digests

std::string read_file(const fs::path& path);

/// Writes through a temporary sibling and renames into place.
void write_file(const fs::path& path, std::string_view content);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);

// ---------------------------------------------------------------------------
// Run configuration (INI-style `key = value` sections)

struct AnalysisOptions {
    int bins_per_atom = 40;
    int k_peaks = 20;
    int n_cut = 36;
    int max_event_n = 15;
    bool exclude_transitions = true;
    double self_cal_window = 0.1;
    std::optional<double> nominal_photoelectrons_per_atom;
};

struct RunConfig {
    sim::SimConfig sim;
    std::optional<sim::LossPulse> pulse;
    stab::ControllerConfig controller;
    AnalysisOptions analysis;
    int n_runs = 1;
    int jobs = 1;
    bool has_seed = false;
};

/// Throws ConfigError on unreadable/unknown/malformed entries. Frequencies are
/// given in Hz (`gamma_hz`, `detuning_hz`) and stored as angular frequency.
RunConfig parse_config_text(const std::string& text, const std::string& source);
RunConfig load_config(const fs::path& path);

/// Resolved configuration as written into manifests.
json to_json(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// JSON forms of the domain types

json to_json(const est::MixtureCalibration& c);
est::MixtureCalibration calibration_from_json(const json& j);
json to_json(const est::NoiseModelFit& f);
json to_json(const est::LifetimeEstimate& e);
json to_json(const est::LoadingEstimate& e);
json to_json(const stab::StabilizationReport& r);

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
    std::string command;
    json config;
    std::optional<std::uint64_t> seed;
    std::vector<fs::path> inputs;   // absolute or relative to the cwd
};

inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kToolVersion = "1.0.0";

/// Writes manifest.json last, with digests of every other regular file in
/// `out_dir` and of the inputs. Returns the manifest body.
json write_manifest(const fs::path& out_dir, const Manifest& m, const std::string& started_at);

/// UTC ISO-8601 time; SOURCE_DATE_EPOCH overrides the clock when set.
std::string timestamp_now();

/// Recomputes output digests; returns the list of mismatching files.
std::vector<std::string> verify_manifest(const fs::path& out_dir);

}  // namespace atomcount::io
