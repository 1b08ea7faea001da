#include "atomcount/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

namespace atomcount::io {

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

double parse_double(std::string_view text, std::string_view context)
{
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw IoError(std::string(context) + ": not a number: '" + std::string(text) + "'");
    }
    return v;
}

std::int64_t parse_int(std::string_view text, std::string_view context)
{
    text = trim(text);
    std::int64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw IoError(std::string(context) + ": not an integer: '" + std::string(text) + "'");
    }
    return v;
}

std::string trace_to_csv(const TimeTrace& trace, std::uint64_t run)
{
    std::string out(kTraceHeader);
    out += '\n';
    for (const auto& s : trace.samples) {
        out += std::to_string(run);
        out += ',';
        out += std::to_string(s.index);
        out += ',';
        out += format_double(s.start_time);
        out += ',';
        out += format_double(s.exposure);
        out += ',';
        out += format_double(s.photoelectrons);
        if (s.truth) {
            const auto& g = *s.truth;
            out += ',' + std::to_string(g.atoms_at_start) + ',' + std::to_string(g.atoms_at_end) + ',' +
                   std::to_string(g.losses_in_exposure) + ',' + std::to_string(g.loads_in_exposure) + ',' +
                   (g.pulse_before ? "1" : "0");
        }
        else {
            out += ",,,,,";
        }
        out += '\n';
    }
    return out;
}

std::vector<TimeTrace> traces_from_csv(std::string_view text, const DetectionParams& params, const std::string& source)
{
    std::vector<TimeTrace> traces;
    std::unordered_map<std::int64_t, std::size_t> by_run;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t n_columns = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') continue;

        std::vector<std::string_view> cells;
        for (std::size_t pos = 0;;) {
            const auto comma = line.find(',', pos);
            cells.push_back(trim(line.substr(pos, comma - pos)));
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (!header_seen) {
            header_seen = true;
            n_columns = cells.size();
            if (n_columns < 5 || cells[0] != "run" || cells[1] != "image" || cells[4] != "photoelectrons") {
                throw IoError(source + ": missing trace header (run,image,start_time,exposure,photoelectrons,...)");
            }
            continue;
        }
        const std::string ctx = source + ":" + std::to_string(line_no);
        if (cells.size() != n_columns) throw IoError(ctx + ": expected " + std::to_string(n_columns) + " columns");

        const auto run = parse_int(cells[0], ctx);
        ImageSample s;
        s.index = parse_int(cells[1], ctx);
        s.start_time = parse_double(cells[2], ctx);
        s.exposure = parse_double(cells[3], ctx);
        s.photoelectrons = parse_double(cells[4], ctx);
        if (n_columns >= 10 && !cells[5].empty()) {
            GroundTruth g;
            g.atoms_at_start = static_cast<int>(parse_int(cells[5], ctx));
            g.atoms_at_end = static_cast<int>(parse_int(cells[6], ctx));
            g.losses_in_exposure = static_cast<int>(parse_int(cells[7], ctx));
            g.loads_in_exposure = static_cast<int>(parse_int(cells[8], ctx));
            g.pulse_before = parse_int(cells[9], ctx) != 0;
            s.truth = g;
        }

        auto [it, inserted] = by_run.try_emplace(run, traces.size());
        if (inserted) {
            TimeTrace t;
            t.params = params;
            t.provenance = IngestedProvenance{source};
            traces.push_back(std::move(t));
        }
        traces[it->second].samples.push_back(std::move(s));
    }
    if (!header_seen) throw IoError(source + ": empty trace file");
    for (const auto& t : traces) require_valid(validate(t), source);
    return traces;
}

std::vector<TimeTrace> read_trace_file(const fs::path& path, const DetectionParams& params)
{
    return traces_from_csv(read_file(path), params, path.filename().string());
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return ss.str();
}

void write_file(const fs::path& path, std::string_view content)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw IoError("sha256 failed");
    }
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path)
{
    return sha256_hex(read_file(path));
}

}  // namespace atomcount::io
