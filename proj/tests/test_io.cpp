#include "atomcount/io.hpp"

#include <doctest.h>

#include <bit>
#include <cstdlib>
#include <limits>
#include <random>

using namespace atomcount;
using namespace atomcount::io;

namespace {

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("atomcount_test_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TimeTrace simulated(std::uint64_t seed)
{
    sim::SimConfig c;
    c.trap.tau_life = 2;
    c.trap.r_load = 1;
    c.seed = seed;
    return sim::simulate_trace(c, sim::LossPulse{true, 3e-3, 0.01}, 3);
}

}  // namespace

TEST_CASE("doubles round-trip bit-exactly through text")
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20000; ++i) {
        const double v = std::bit_cast<double>(rng());
        if (!std::isfinite(v)) continue;
        CHECK(std::bit_cast<std::uint64_t>(parse_double(format_double(v), "t")) == std::bit_cast<std::uint64_t>(v));
    }
    for (double v : {0.0, -0.0, 0.1, 1e-310, std::numeric_limits<double>::max()}) {
        CHECK(std::bit_cast<std::uint64_t>(parse_double(format_double(v), "t")) == std::bit_cast<std::uint64_t>(v));
    }
    CHECK(parse_double(" +2.5 ", "t") == 2.5);
    CHECK_THROWS_AS(parse_double("2.5x", "t"), IoError);
    CHECK_THROWS_AS(parse_double("", "t"), IoError);
    CHECK(parse_int("-42", "t") == -42);
    CHECK_THROWS_AS(parse_int("4.2", "t"), IoError);
}

TEST_CASE("trace CSV round trip")
{
    const auto t = simulated(5);
    const auto back = traces_from_csv(trace_to_csv(t, 3), t.params, "mem.csv");
    REQUIRE(back.size() == 1);
    REQUIRE(back[0].samples.size() == t.samples.size());
    for (std::size_t i = 0; i < t.samples.size(); ++i) {
        const auto& a = t.samples[i];
        const auto& b = back[0].samples[i];
        CHECK(a.index == b.index);
        CHECK(a.start_time == b.start_time);
        CHECK(a.exposure == b.exposure);
        CHECK(a.photoelectrons == b.photoelectrons);
        CHECK(a.truth->atoms_at_start == b.truth->atoms_at_start);
        CHECK(a.truth->atoms_at_end == b.truth->atoms_at_end);
        CHECK(a.truth->losses_in_exposure == b.truth->losses_in_exposure);
        CHECK(a.truth->pulse_before == b.truth->pulse_before);
    }
    CHECK(std::get<IngestedProvenance>(back[0].provenance).file == "mem.csv");
}

TEST_CASE("ingested CSV without ground truth and with several runs")
{
    const std::string text =
        "run,image,start_time,exposure,photoelectrons\n"
        "0,0,0,0.09,100\n"
        "1,0,0,0.09,5\n"
        "0,1,0.31,0.09,200\n";
    const auto t = traces_from_csv(text, DetectionParams{}, "x");
    REQUIRE(t.size() == 2);
    CHECK(t[0].samples.size() == 2);
    CHECK_FALSE(t[0].samples[0].truth.has_value());
}

TEST_CASE("malformed trace files are rejected")
{
    const DetectionParams d;
    CHECK_THROWS_AS(traces_from_csv("", d, "x"), IoError);
    CHECK_THROWS_AS(traces_from_csv("a,b,c\n1,2,3\n", d, "x"), IoError);
    CHECK_THROWS_AS(traces_from_csv("run,image,start_time,exposure,photoelectrons\n0,0,0,0.09\n", d, "x"), IoError);
    CHECK_THROWS_AS(traces_from_csv("run,image,start_time,exposure,photoelectrons\n0,0,0,0.09,abc\n", d, "x"),
                    IoError);
    // Images closer than the hold time violate the trace invariants.
    CHECK_THROWS_AS(
        traces_from_csv("run,image,start_time,exposure,photoelectrons\n0,0,0,0.09,1\n0,1,0.1,0.09,1\n", d, "x"),
        ValidationError);
}

TEST_CASE("JSON round trip of every domain type")
{
    const auto t = simulated(8);
    const json j = t;
    const auto back = json::parse(j.dump()).get<TimeTrace>();
    CHECK(back == t);

    TimeTrace ingested;
    ingested.provenance = IngestedProvenance{"file.csv"};
    CHECK(json(ingested).get<TimeTrace>() == ingested);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 200; ++i) {
        DetectionParams d{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
        TrapParams p{u(rng), u(rng), u(rng), u(rng), u(rng)};
        CHECK(json::parse(json(d).dump()).get<DetectionParams>() == d);
        CHECK(json::parse(json(p).dump()).get<TrapParams>() == p);
    }
}

TEST_CASE("calibration JSON round trip")
{
    auto cal = est::ideal_calibration(600123.456789, 0.09);
    cal.intercept = 17.25;
    cal.peak_centers = {1.5, 54000.25};
    const auto back = calibration_from_json(json::parse(to_json(cal).dump()));
    CHECK(back.counts_per_atom_per_second == cal.counts_per_atom_per_second);
    CHECK(back.intercept == cal.intercept);
    CHECK(back.peak_centers == cal.peak_centers);
}

TEST_CASE("config parsing")
{
    const auto cfg = parse_config_text(
        "[run]\nseed = 7   ; fixed\nn_runs = 3\n"
        "[detection]\ndetuning_hz = 5e6\ntau_det = 0.1\n"
        "[initial]\ndistribution = fixed\ncount = 9\n"
        "[pulse]\nduration = 0.002\n"
        "[controller]\nthreshold = 4.5\ntarget = 4\n"
        "[analysis]\nexclude_transitions = false\n",
        "mem.ini");
    CHECK(cfg.has_seed);
    CHECK(cfg.sim.seed == 7);
    CHECK(cfg.n_runs == 3);
    CHECK(cfg.sim.detection.detuning == doctest::Approx(kTwoPi * 5e6));
    CHECK(cfg.sim.detection.tau_det == 0.1);
    CHECK(std::get<sim::FixedAtoms>(cfg.sim.initial_atoms).count == 9);
    REQUIRE(cfg.pulse.has_value());
    CHECK(cfg.pulse->enabled);
    CHECK(cfg.controller.pulse.duration == 0.002);
    CHECK(cfg.controller.threshold == 4.5);
    CHECK_FALSE(cfg.analysis.exclude_transitions);

    const auto empty = parse_config_text("", "e");
    CHECK_FALSE(empty.has_seed);
    CHECK(empty.sim.detection == DetectionParams{});

    CHECK_THROWS_AS(parse_config_text("[run]\nsede = 1\n", "x"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[bogus]\na = 1\n", "x"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[trap]\nalpha = fast\n", "x"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[initial]\ndistribution = gaussian\n", "x"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[pulse]\nenabled = maybe\n", "x"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("seed = 1\n", "x"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/atomcount.ini"), ConfigError);
}

TEST_CASE("sha256 digests")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("manifest covers every output and detects tampering")
{
    const auto dir = scratch("manifest");
    write_file(dir / "a.csv", "x,y\n1,2\n");
    fs::create_directories(dir / "sub");
    write_file(dir / "sub" / "b.json", "{}\n");
    setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    const auto body = write_manifest(dir, {"test", json::object(), 5, {}}, timestamp_now());
    CHECK(body["timestamps"]["started"] == "2023-11-14T22:13:20Z");
    REQUIRE(body["outputs"].size() == 2);
    CHECK(body["outputs"][0]["path"] == "a.csv");
    CHECK(body["outputs"][1]["path"] == "sub/b.json");
    CHECK(body["outputs"][0]["sha256"] == sha256_hex("x,y\n1,2\n"));
    CHECK(verify_manifest(dir).empty());

    write_file(dir / "a.csv", "tampered\n");
    CHECK(verify_manifest(dir) == std::vector<std::string>{"a.csv"});
    unsetenv("SOURCE_DATE_EPOCH");
    fs::remove_all(dir);
}

TEST_CASE("write_file reports unwritable paths")
{
    CHECK_THROWS_AS(write_file("/nonexistent/dir/file.txt", "x"), IoError);
    CHECK_THROWS_AS(read_file("/nonexistent/file.txt"), IoError);
}
