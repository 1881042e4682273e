#pragma once

// Artifact files: provenance header, write-then-rename output, and the line
// formats for event logs and player tables.

#include "guardian/domain.hpp"
#include "guardian/errors.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace guardian {

// ============================================================================
// NUMBER FORMATTING
// ============================================================================

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("not a number: '" + std::string(s) + "'");
    return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
    Int v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// FNV-1a, used for config fingerprints.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ============================================================================
// PROVENANCE HEADER
// ============================================================================

struct ArtifactHeader {
    std::string kind;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] std::string line() const {
        return "# guardian " + kind + " v1 config=" + hex64(config_hash) + " seed=" + std::to_string(seed);
    }

    friend bool operator==(const ArtifactHeader&, const ArtifactHeader&) = default;
};

inline ArtifactHeader parse_header(std::string_view line) {
    std::istringstream in{std::string(line)};
    std::string hash, tag, kind, version, cfg, seed;
    in >> hash >> tag >> kind >> version >> cfg >> seed;
    if (hash != "#" || tag != "guardian" || version != "v1" || cfg.rfind("config=", 0) != 0 || seed.rfind("seed=", 0) != 0)
        throw InputError("malformed artifact header: " + std::string(line));
    ArtifactHeader h;
    h.kind = kind;
    h.config_hash = std::stoull(cfg.substr(7), nullptr, 16);
    h.seed = std::stoull(seed.substr(5));
    return h;
}

inline ArtifactHeader read_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("missing input file: " + path.string());
    std::string line;
    std::getline(in, line);
    return parse_header(line);
}

// Checks that an input artifact has the expected kind and provenance.
inline void require_header(const std::filesystem::path& path, const ArtifactHeader& expected) {
    const auto got = read_header(path);
    if (got.kind != expected.kind)
        throw InputError(path.string() + ": expected a '" + expected.kind + "' artifact, found '" + got.kind + "'");
    if (got.config_hash != expected.config_hash || got.seed != expected.seed)
        throw InputError(path.string() + ": artifact was produced by a different config (config=" +
                         hex64(got.config_hash) + " seed=" + std::to_string(got.seed) + ")");
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("missing input file: " + path.string());
    return in;
}

// ============================================================================
// ATOMIC OUTPUT
// ============================================================================

// Writes to a sibling temporary file and renames it into place on commit().
// An uncommitted writer removes its temporary on destruction, so a failed
// stage never leaves a partial artifact behind.
class AtomicFile {
public:
    explicit AtomicFile(std::filesystem::path target)
        : target_(std::move(target)), tmp_(target_.string() + ".tmp") {
        if (target_.has_parent_path()) std::filesystem::create_directories(target_.parent_path());
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot open for writing: " + tmp_.string());
    }
    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;

    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

    std::ofstream& stream() { return out_; }

    void commit() {
        out_.flush();
        if (!out_) throw std::runtime_error("write failed: " + tmp_.string());
        out_.close();
        std::filesystem::rename(tmp_, target_);
        committed_ = true;
    }

private:
    std::filesystem::path target_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

// ============================================================================
// EVENT LOG FORMAT
// ============================================================================
//
// One event per line: day, hour, layer, actor, target, violation (0/1),
// tab-separated. Lines starting with '#' are headers.

inline void write_event_line(std::string& buf, const InteractionEvent& e) {
    char num[24];
    auto put_int = [&](std::int64_t v) {
        buf.append(num, std::to_chars(num, num + sizeof num, v).ptr);
        buf += '\t';
    };
    put_int(e.day);
    put_int(e.hour);
    buf += layer_name(e.layer);
    buf += '\t';
    put_int(e.actor);
    put_int(e.target);
    buf += e.violation ? '1' : '0';
    buf += '\n';
}

inline InteractionEvent parse_event_line(std::string_view line) {
    const auto f = split_tabs(line);
    if (f.size() != 6) throw std::invalid_argument("event line needs 6 fields: '" + std::string(line) + "'");
    InteractionEvent e;
    e.day = parse_int<int>(f[0]);
    const int hour = parse_int<int>(f[1]);
    if (hour < 0 || hour > 23) throw std::invalid_argument("event hour out of range");
    e.hour = static_cast<std::uint8_t>(hour);
    e.layer = parse_layer(f[2]);
    e.actor = parse_int<PlayerId>(f[3]);
    e.target = parse_int<PlayerId>(f[4]);
    if (f[5] != "0" && f[5] != "1") throw std::invalid_argument("violation flag must be 0 or 1");
    e.violation = f[5] == "1";
    validate(e);
    return e;
}

inline void write_events(std::ostream& out, std::span<const InteractionEvent> events) {
    std::string buf;
    buf.reserve(1 << 20);
    for (const auto& e : events) {
        write_event_line(buf, e);
        if (buf.size() > (1 << 20) - 128) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

// Reads events after the header; `covered_days` marks trailing empty days.
inline EventLog read_events(std::istream& in, Day covered_days = 0) {
    EventLog log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        log.append(parse_event_line(line));
    }
    if (covered_days > log.covered_days()) log.mark_day(covered_days - 1);
    return log;
}

// ============================================================================
// PLAYER TABLE FORMAT
// ============================================================================

inline void write_players(std::ostream& out, std::span<const PlayerRecord> players) {
    out << "player_id\tgender\tage\tinstall_day\tpenalized\tpredator_propensity\tvictim_susceptibility\tresponsiveness\n";
    for (const auto& p : players)
        out << p.id << '\t' << gender_name(p.gender) << '\t' << p.age << '\t' << p.install_day << '\t'
            << (p.penalized ? 1 : 0) << '\t' << format_double(p.predator_propensity) << '\t'
            << format_double(p.victim_susceptibility) << '\t' << format_double(p.responsiveness) << '\n';
}

inline std::vector<PlayerRecord> read_players(std::istream& in) {
    std::vector<PlayerRecord> players;
    std::string line;
    bool seen_columns = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!seen_columns) {
            seen_columns = true;
            continue;
        }
        const auto f = split_tabs(line);
        if (f.size() != 8) throw std::invalid_argument("player line needs 8 fields");
        PlayerRecord p;
        p.id = parse_int<PlayerId>(f[0]);
        p.gender = parse_gender(f[1]);
        p.age = parse_int<int>(f[2]);
        p.install_day = parse_int<int>(f[3]);
        p.penalized = f[4] == "1";
        p.predator_propensity = parse_double(f[5]);
        p.victim_susceptibility = parse_double(f[6]);
        p.responsiveness = parse_double(f[7]);
        if (p.id != players.size()) throw std::invalid_argument("player ids must be dense and ordered");
        players.push_back(p);
    }
    return players;
}

}  // namespace guardian
