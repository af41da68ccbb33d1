#pragma once

#include <cctype>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "phil/errors.hpp"
#include "phil/format.hpp"
#include "phil/loop.hpp"
#include "phil/netem.hpp"
#include "phil/simulate.hpp"
#include "phil/stability.hpp"

/// Scenario files: the complete description of one study - bench circuit,
/// interface algorithm, margin, run mode, grids, co-simulation wiring - in a
/// strict `key = value` text format with [section] headers and full-line `#`
/// comments. Parsing is all-or-nothing: every key must be known, every value
/// well-formed, and every cross-field invariant satisfied, or the parser
/// reports the complete list of problems with line numbers. A typo that
/// silently changed the physics would be the worst possible failure mode for
/// a testbench, so nothing is ignored and nothing is guessed.

namespace phil {

enum class RunMode { analyze, simulate, sweep, cosim };
enum class MasterKind { lockstep, hub, conservative };
enum class NetworkPlacement { none, command, feedback };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::analyze: return "analyze";
        case RunMode::simulate: return "simulate";
        case RunMode::sweep: return "sweep";
        case RunMode::cosim: return "cosim";
    }
    return "?";
}

inline const char* to_string(MasterKind m) {
    switch (m) {
        case MasterKind::lockstep: return "lockstep";
        case MasterKind::hub: return "hub";
        case MasterKind::conservative: return "conservative";
    }
    return "?";
}

inline const char* to_string(NetworkPlacement p) {
    switch (p) {
        case NetworkPlacement::none: return "none";
        case NetworkPlacement::command: return "command";
        case NetworkPlacement::feedback: return "feedback";
    }
    return "?";
}

/// Evenly spaced grid including both endpoints.
inline std::vector<double> linspace(double lo, double hi, int count) {
    if (count < 2) throw ConfigError("linspace: need at least 2 points");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        out[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    out.front() = lo;
    out.back() = hi;
    return out;
}

struct RunParams {
    double dt_s = 0.0;
    double duration_s = 0.0;

    friend bool operator==(const RunParams&, const RunParams&) = default;
};

struct SweepParams {
    double ratio_min = 0.0;
    double ratio_max = 0.0;
    int ratio_count = 0;
    double delay_min_s = 0.0;
    double delay_max_s = 0.0;
    int delay_count = 0;

    std::vector<double> ratios() const { return linspace(ratio_min, ratio_max, ratio_count); }
    std::vector<double> delays() const { return linspace(delay_min_s, delay_max_s, delay_count); }

    friend bool operator==(const SweepParams&, const SweepParams&) = default;
};

struct HubLag {
    std::string unit;
    std::size_t steps = 0;

    friend bool operator==(const HubLag&, const HubLag&) = default;
};

struct CosimParams {
    MasterKind master = MasterKind::lockstep;
    double dt_s = 0.0;
    double end_time_s = 0.0;
    NetworkPlacement placement = NetworkPlacement::none;
    std::vector<HubLag> lags;  // hub master only

    friend bool operator==(const CosimParams&, const CosimParams&) = default;
};

struct Scenario {
    RunMode mode = RunMode::analyze;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    double epsilon = 0.0;
    PhilLoop loop;
    std::optional<RunParams> run;
    std::optional<SweepParams> sweep;
    std::optional<CosimParams> cosim;
    std::optional<NetworkSpec> network;

    /// The master seed feeds every stochastic element; keep them in lockstep.
    void set_seed(std::uint64_t s) {
        seed = s;
        if (network) network->seed = s;
    }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

struct ScnEntry {
    std::string value;
    int line = 0;
    bool used = false;
};

struct ScnSection {
    int line = 0;   // header line; 0 for the top-level pseudo-section
    bool used = false;
    std::map<std::string, std::vector<ScnEntry>> keys;
};

/// Line-tracked scenario document plus the error sink every stage feeds.
/// Reading a key marks it consumed; whatever is left at the end is unknown.
class ScenarioReader {
  public:
    explicit ScenarioReader(const std::string& text) { lex(text); }

    void fail(int line, const std::string& msg) {
        errors_.push_back("line " + std::to_string(line) + ": " + msg);
    }
    void fail(const std::string& msg) { errors_.push_back(msg); }
    bool clean() const { return errors_.empty(); }

    bool has_section(const std::string& name) const { return sections_.count(name) != 0; }

    /// Marks the section consumed (so it no longer counts as unknown) and
    /// returns whether it exists.
    bool open_section(const std::string& name) {
        auto it = sections_.find(name);
        if (it == sections_.end()) return false;
        it->second.used = true;
        return true;
    }

    int section_line(const std::string& name) const {
        auto it = sections_.find(name);
        return it == sections_.end() ? 0 : it->second.line;
    }

    /// Single-valued key: at most one occurrence. Returns nullptr if absent.
    const ScnEntry* take_one(const std::string& section, const std::string& key) {
        std::vector<ScnEntry>* entries = find(section, key);
        if (!entries) return nullptr;
        for (ScnEntry& e : *entries) e.used = true;
        if (entries->size() > 1) {
            fail(entries->back().line, "key '" + qualified(section, key) + "' given " +
                                           std::to_string(entries->size()) +
                                           " times (first at line " + std::to_string(entries->front().line) + ")");
            return nullptr;
        }
        return &entries->front();
    }

    /// Repeatable key: every occurrence, in file order.
    std::vector<const ScnEntry*> take_repeat(const std::string& section, const std::string& key) {
        std::vector<const ScnEntry*> out;
        std::vector<ScnEntry>* entries = find(section, key);
        if (!entries) return out;
        for (ScnEntry& e : *entries) {
            e.used = true;
            out.push_back(&e);
        }
        return out;
    }

    std::optional<double> take_double(const std::string& section, const std::string& key) {
        const ScnEntry* e = take_one(section, key);
        if (!e) return std::nullopt;
        return parse_double(*e, qualified(section, key));
    }

    double take_double_or(const std::string& section, const std::string& key, double fallback) {
        std::optional<double> v = take_double(section, key);
        return v ? *v : fallback;
    }

    std::optional<double> require_double(const std::string& section, const std::string& key) {
        if (!find(section, key)) {
            fail(section_line(section), "[" + section + "] is missing required key '" + key + "'");
            return std::nullopt;
        }
        return take_double(section, key);
    }

    std::optional<int> take_int(const std::string& section, const std::string& key) {
        const ScnEntry* e = take_one(section, key);
        if (!e) return std::nullopt;
        return parse_int(*e, qualified(section, key));
    }

    std::optional<int> require_int(const std::string& section, const std::string& key) {
        if (!find(section, key)) {
            fail(section_line(section), "[" + section + "] is missing required key '" + key + "'");
            return std::nullopt;
        }
        return take_int(section, key);
    }

    std::optional<std::uint64_t> take_u64(const std::string& section, const std::string& key) {
        const ScnEntry* e = take_one(section, key);
        if (!e) return std::nullopt;
        errno = 0;
        const char* begin = e->value.c_str();
        char* end = nullptr;
        const unsigned long long v = std::strtoull(begin, &end, 10);
        if (end == begin || *end != '\0' || errno == ERANGE || e->value.front() == '-') {
            fail(e->line, "'" + qualified(section, key) + "': expected an unsigned integer, got '" + e->value + "'");
            return std::nullopt;
        }
        return static_cast<std::uint64_t>(v);
    }

    std::optional<std::string> take_string(const std::string& section, const std::string& key) {
        const ScnEntry* e = take_one(section, key);
        if (!e) return std::nullopt;
        return e->value;
    }

    /// Word from a closed set; the error names every admissible value.
    template <typename T>
    std::optional<T> take_enum(const std::string& section, const std::string& key,
                               const std::vector<std::pair<std::string, T>>& table) {
        const ScnEntry* e = take_one(section, key);
        if (!e) return std::nullopt;
        for (const auto& [name, v] : table)
            if (e->value == name) return v;
        std::string allowed;
        for (const auto& [name, v] : table) {
            if (!allowed.empty()) allowed += " | ";
            allowed += name;
        }
        fail(e->line, "'" + qualified(section, key) + "': expected one of " + allowed + ", got '" + e->value + "'");
        return std::nullopt;
    }

    std::optional<double> parse_double(const ScnEntry& e, const std::string& who) {
        errno = 0;
        const char* begin = e.value.c_str();
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
            fail(e.line, "'" + who + "': expected a finite number, got '" + e.value + "'");
            return std::nullopt;
        }
        return v;
    }

    std::optional<int> parse_int(const ScnEntry& e, const std::string& who) {
        errno = 0;
        const char* begin = e.value.c_str();
        char* end = nullptr;
        const long v = std::strtol(begin, &end, 10);
        if (end == begin || *end != '\0' || errno == ERANGE || v > 1000000000L || v < -1000000000L) {
            fail(e.line, "'" + who + "': expected an integer, got '" + e.value + "'");
            return std::nullopt;
        }
        return static_cast<int>(v);
    }

    /// Everything never consumed is a typo by definition (strict mode).
    void report_leftovers() {
        for (const auto& [name, section] : sections_) {
            if (!section.used && !name.empty()) {
                fail(section.line, "unknown section [" + name + "]");
                continue;
            }
            for (const auto& [key, entries] : section.keys)
                for (const ScnEntry& e : entries)
                    if (!e.used) fail(e.line, "unknown key '" + qualified(name, key) + "'");
        }
    }

    [[noreturn]] void throw_errors() const {
        std::string all = "scenario has " + std::to_string(errors_.size()) +
                          (errors_.size() == 1 ? " problem:" : " problems:");
        for (const std::string& e : errors_) all += "\n  " + e;
        throw ConfigError(all);
    }

  private:
    static std::string qualified(const std::string& section, const std::string& key) {
        return section.empty() ? key : section + "." + key;
    }

    std::vector<ScnEntry>* find(const std::string& section, const std::string& key) {
        auto sit = sections_.find(section);
        if (sit == sections_.end()) return nullptr;
        auto kit = sit->second.keys.find(key);
        if (kit == sit->second.keys.end()) return nullptr;
        return &kit->second;
    }

    void lex(const std::string& text) {
        sections_[""].used = true;  // top level always exists
        std::string current;
        std::istringstream in(text);
        std::string raw;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            const std::string s = trim(raw);
            if (s.empty() || s.front() == '#') continue;
            if (s.front() == '[') {
                if (s.back() != ']' || s.size() < 3) {
                    fail(line, "malformed section header '" + s + "'");
                    continue;
                }
                const std::string name = trim(s.substr(1, s.size() - 2));
                if (name.empty()) {
                    fail(line, "empty section name");
                    continue;
                }
                auto [it, fresh] = sections_.try_emplace(name);
                if (fresh) {
                    it->second.line = line;
                } else {
                    fail(line, "duplicate section [" + name + "] (first at line " +
                                   std::to_string(it->second.line) + ")");
                }
                current = name;
                continue;
            }
            const std::size_t eq = s.find('=');
            if (eq == std::string::npos) {
                fail(line, "expected 'key = value' or '[section]', got '" + s + "'");
                continue;
            }
            const std::string key = trim(s.substr(0, eq));
            const std::string value = trim(s.substr(eq + 1));
            if (key.empty()) {
                fail(line, "missing key before '='");
                continue;
            }
            if (value.empty()) {
                fail(line, "key '" + qualified(current, key) + "' has an empty value");
                continue;
            }
            sections_[current].keys[key].push_back({value, line, false});
        }
    }

    std::map<std::string, ScnSection> sections_;
    std::vector<std::string> errors_;
};

/// "delay/dt not integer" check with a line to point at. Positive dt assumed
/// checked by the caller.
inline void check_delay_divides(ScenarioReader& r, int line, const char* what, double delay_s, double dt_s) {
    try {
        delay_to_samples(delay_s, dt_s);
    } catch (const ConfigError&) {
        r.fail(line, std::string(what) + " = " + format_g17(delay_s) + " s with dt = " + format_g17(dt_s) +
                         " s: delay/dt not integer");
    }
}

inline Impedance read_impedance(ScenarioReader& r, const std::string& section) {
    Impedance z;
    if (!r.open_section(section)) {
        r.fail("missing required section [" + section + "]");
        return z;
    }
    const auto kind = r.take_enum<ImpedanceKind>(section, "kind",
                                                 {{"resistive", ImpedanceKind::resistive},
                                                  {"series_rl", ImpedanceKind::series_rl},
                                                  {"parallel_rc", ImpedanceKind::parallel_rc}});
    z.kind = kind.value_or(ImpedanceKind::resistive);
    z.resistance_ohm = r.require_double(section, "resistance_ohm").value_or(1.0);

    const bool wants_l = kind && *kind == ImpedanceKind::series_rl;
    const bool wants_c = kind && *kind == ImpedanceKind::parallel_rc;
    if (wants_l) {
        z.inductance_h = r.require_double(section, "inductance_h").value_or(1.0);
    } else if (const ScnEntry* e = r.take_one(section, "inductance_h")) {
        r.fail(e->line, "'" + section + ".inductance_h' only applies to kind = series_rl");
    }
    if (wants_c) {
        z.capacitance_f = r.require_double(section, "capacitance_f").value_or(1.0);
    } else if (const ScnEntry* e = r.take_one(section, "capacitance_f")) {
        r.fail(e->line, "'" + section + ".capacitance_f' only applies to kind = parallel_rc");
    }
    if (kind) {
        try {
            z.validate(section);
        } catch (const ConfigError& err) {
            r.fail(r.section_line(section), err.what());
        }
    }
    return z;
}

}  // namespace detail

/// Parse and fully validate a scenario document. Throws ConfigError carrying
/// the complete list of problems (one per line, each with a line reference)
/// if anything at all is wrong; otherwise every invariant the runner relies
/// on has already been checked.
inline Scenario parse_scenario(const std::string& text) {
    using detail::ScnEntry;
    detail::ScenarioReader r(text);
    Scenario s;

    // --- top level -------------------------------------------------------
    s.mode = r.take_enum<RunMode>("", "mode",
                                  {{"analyze", RunMode::analyze},
                                   {"simulate", RunMode::simulate},
                                   {"sweep", RunMode::sweep},
                                   {"cosim", RunMode::cosim}})
                 .value_or(RunMode::analyze);
    s.out_dir = r.take_string("", "out_dir").value_or("out");
    s.seed = r.take_u64("", "seed").value_or(0);

    // --- [source] ---------------------------------------------------------
    if (r.open_section("source")) {
        s.loop.simulated_side.source.f0_hz = r.require_double("source", "fundamental_hz").value_or(50.0);
        if (!(s.loop.simulated_side.source.f0_hz > 0.0))
            r.fail(r.section_line("source"), "source.fundamental_hz must be positive");
        std::set<int> seen_orders;
        for (const ScnEntry* e : r.take_repeat("source", "harmonic")) {
            const std::vector<std::string> tok = detail::split_ws(e->value);
            if (tok.size() != 2 && tok.size() != 3) {
                r.fail(e->line, "'source.harmonic': expected '<order> <amplitude_v> [phase_rad]', got '" +
                                    e->value + "'");
                continue;
            }
            HarmonicComponent h;
            const auto order = r.parse_int({tok[0], e->line}, "source.harmonic order");
            const auto amp = r.parse_double({tok[1], e->line}, "source.harmonic amplitude");
            const auto phase = tok.size() == 3 ? r.parse_double({tok[2], e->line}, "source.harmonic phase")
                                               : std::optional<double>(0.0);
            if (!order || !amp || !phase) continue;
            if (*order < 1) {
                r.fail(e->line, "'source.harmonic': order must be a positive integer, got " + tok[0]);
                continue;
            }
            if (!seen_orders.insert(*order).second) {
                r.fail(e->line, "'source.harmonic': duplicate order " + tok[0]);
                continue;
            }
            h.order = *order;
            h.amplitude_v = *amp;
            h.phase_rad = *phase;
            s.loop.simulated_side.source.harmonics.push_back(h);
        }
    } else {
        r.fail("missing required section [source]");
    }

    // --- circuit elements --------------------------------------------------
    s.loop.simulated_side.source_impedance = detail::read_impedance(r, "simulated");
    s.loop.hut = detail::read_impedance(r, "hut");

    // --- [amplifier] -------------------------------------------------------
    if (r.open_section("amplifier")) {
        s.loop.amplifier.gain = r.take_double_or("amplifier", "gain", 1.0);
        if (const auto bw = r.take_double("amplifier", "bandwidth_hz")) {
            s.loop.amplifier.bandwidth_hz = *bw;  // omitted = ideal flat amplifier
        }
        s.loop.amplifier.delay_s = r.take_double_or("amplifier", "delay_s", 0.0);
        if (const auto sat = r.take_double("amplifier", "saturation_v")) s.loop.amplifier.saturation_v = *sat;
        try {
            s.loop.amplifier.validate();
        } catch (const ConfigError& err) {
            r.fail(r.section_line("amplifier"), err.what());
        }
    }

    // --- [interface] -------------------------------------------------------
    if (r.open_section("interface")) {
        const auto kind = r.take_enum<InterfaceKind>("interface", "kind",
                                                     {{"itm", InterfaceKind::itm_voltage},
                                                      {"feedback_filter", InterfaceKind::feedback_filter},
                                                      {"shifting_impedance", InterfaceKind::shifting_impedance}});
        s.loop.interface_algorithm.kind = kind.value_or(InterfaceKind::itm_voltage);
        const bool wants_cutoff = kind && *kind == InterfaceKind::feedback_filter;
        const bool wants_shift = kind && *kind == InterfaceKind::shifting_impedance;
        if (wants_cutoff) {
            s.loop.interface_algorithm.cutoff_hz =
                r.require_double("interface", "cutoff_hz").value_or(1.0);
        } else if (const ScnEntry* e = r.take_one("interface", "cutoff_hz")) {
            r.fail(e->line, "'interface.cutoff_hz' only applies to kind = feedback_filter");
        }
        if (wants_shift) {
            s.loop.interface_algorithm.z_shift_ohm =
                r.require_double("interface", "shift_ohm").value_or(0.0);
        } else if (const ScnEntry* e = r.take_one("interface", "shift_ohm")) {
            r.fail(e->line, "'interface.shift_ohm' only applies to kind = shifting_impedance");
        }
        if (kind) {
            try {
                s.loop.interface_algorithm.validate();
            } catch (const ConfigError& err) {
                r.fail(r.section_line("interface"), err.what());
            }
        }
    }

    // --- [sensor] ----------------------------------------------------------
    if (r.open_section("sensor")) {
        s.loop.sensor_delay_s = r.take_double_or("sensor", "delay_s", 0.0);
        if (s.loop.sensor_delay_s < 0.0)
            r.fail(r.section_line("sensor"), "sensor.delay_s must be nonnegative");
    }

    // --- [disturbance] -----------------------------------------------------
    if (r.open_section("disturbance")) {
        Disturbance d;
        d.amplitude_v = r.require_double("disturbance", "amplitude_v").value_or(0.0);
        d.freq_hz = r.require_double("disturbance", "freq_hz").value_or(1.0);
        d.phase_rad = r.take_double_or("disturbance", "phase_rad", 0.0);
        if (!(d.freq_hz > 0.0)) r.fail(r.section_line("disturbance"), "disturbance.freq_hz must be positive");
        s.loop.disturbance = d;
    }

    // --- [compensation] ----------------------------------------------------
    bool phase_advance_on = false;
    if (r.open_section("compensation")) {
        phase_advance_on = r.take_enum<bool>("compensation", "phase_advance", {{"on", true}, {"off", false}})
                               .value_or(false);
        if (const auto order = r.take_int("compensation", "extrapolator_order")) {
            if (*order != 0 && *order != 1) {
                r.fail(r.section_line("compensation"), "compensation.extrapolator_order must be 0 or 1");
            } else {
                s.loop.extrapolator = Extrapolator{*order, 0.0};  // horizon filled in below
            }
        }
    }

    // --- [stability] -------------------------------------------------------
    if (r.open_section("stability")) {
        s.epsilon = r.take_double_or("stability", "epsilon", 0.0);
        if (s.epsilon < 0.0)
            r.fail(r.section_line("stability"),
                   "stability.epsilon must satisfy epsilon >= 0, got " + format_g17(s.epsilon));
    }

    // --- [run] -------------------------------------------------------------
    if (r.open_section("run")) {
        RunParams run;
        run.dt_s = r.require_double("run", "dt_s").value_or(1.0);
        run.duration_s = r.require_double("run", "duration_s").value_or(1.0);
        if (!(run.dt_s > 0.0)) r.fail(r.section_line("run"), "run.dt_s must be positive");
        if (!(run.duration_s > 0.0)) r.fail(r.section_line("run"), "run.duration_s must be positive");
        s.run = run;
    }

    // --- [sweep] -----------------------------------------------------------
    if (r.open_section("sweep")) {
        SweepParams sw;
        sw.ratio_min = r.require_double("sweep", "ratio_min").value_or(0.1);
        sw.ratio_max = r.require_double("sweep", "ratio_max").value_or(2.0);
        sw.ratio_count = r.require_int("sweep", "ratio_count").value_or(2);
        sw.delay_min_s = r.require_double("sweep", "delay_min_s").value_or(1e-4);
        sw.delay_max_s = r.require_double("sweep", "delay_max_s").value_or(5e-3);
        sw.delay_count = r.require_int("sweep", "delay_count").value_or(2);
        const int line = r.section_line("sweep");
        if (!(sw.ratio_min > 0.0)) r.fail(line, "sweep.ratio_min must be positive");
        if (!(sw.ratio_max > sw.ratio_min)) r.fail(line, "sweep.ratio_max must exceed sweep.ratio_min");
        if (sw.ratio_count < 2) r.fail(line, "sweep.ratio_count must be at least 2");
        if (!(sw.delay_min_s > 0.0)) r.fail(line, "sweep.delay_min_s must be positive");
        if (!(sw.delay_max_s > sw.delay_min_s)) r.fail(line, "sweep.delay_max_s must exceed sweep.delay_min_s");
        if (sw.delay_count < 2) r.fail(line, "sweep.delay_count must be at least 2");
        s.sweep = sw;
    }

    // --- [cosim] -----------------------------------------------------------
    if (r.open_section("cosim")) {
        CosimParams co;
        co.master = r.take_enum<MasterKind>("cosim", "master",
                                            {{"lockstep", MasterKind::lockstep},
                                             {"hub", MasterKind::hub},
                                             {"conservative", MasterKind::conservative}})
                        .value_or(MasterKind::lockstep);
        co.dt_s = r.require_double("cosim", "dt_s").value_or(1.0);
        co.end_time_s = r.require_double("cosim", "end_time_s").value_or(1.0);
        co.placement = r.take_enum<NetworkPlacement>("cosim", "network",
                                                     {{"none", NetworkPlacement::none},
                                                      {"command", NetworkPlacement::command},
                                                      {"feedback", NetworkPlacement::feedback}})
                           .value_or(NetworkPlacement::none);
        if (!(co.dt_s > 0.0)) r.fail(r.section_line("cosim"), "cosim.dt_s must be positive");
        if (!(co.end_time_s > 0.0)) r.fail(r.section_line("cosim"), "cosim.end_time_s must be positive");

        std::set<std::string> lag_units;
        for (const ScnEntry* e : r.take_repeat("cosim", "lag")) {
            const std::vector<std::string> tok = detail::split_ws(e->value);
            if (tok.size() != 2) {
                r.fail(e->line, "'cosim.lag': expected '<unit> <steps>', got '" + e->value + "'");
                continue;
            }
            if (co.master != MasterKind::hub) {
                r.fail(e->line, "'cosim.lag' entries only apply to master = hub");
                continue;
            }
            if (tok[0] != "sim" && tok[0] != "hw") {
                r.fail(e->line, "'cosim.lag': unknown unit '" + tok[0] + "' (the bench has units sim, hw)");
                continue;
            }
            if (!lag_units.insert(tok[0]).second) {
                r.fail(e->line, "'cosim.lag': duplicate entry for unit '" + tok[0] + "'");
                continue;
            }
            const auto steps = r.parse_int({tok[1], e->line}, "cosim.lag steps");
            if (!steps) continue;
            if (*steps < 0) {
                r.fail(e->line, "'cosim.lag': steps must be nonnegative, got " + tok[1]);
                continue;
            }
            co.lags.push_back({tok[0], static_cast<std::size_t>(*steps)});
        }
        if (co.placement != NetworkPlacement::none && co.master != MasterKind::conservative)
            r.fail(r.section_line("cosim"),
                   "cosim.network placement needs master = conservative (lockstep and hub exchange "
                   "continuous samples every step; the network unit is message-only)");
        s.cosim = co;
    }

    // --- [network] ---------------------------------------------------------
    if (r.open_section("network")) {
        NetworkSpec net;
        net.base_latency_s = r.require_double("network", "base_latency_s").value_or(0.0);
        net.jitter_s = r.take_double_or("network", "jitter_s", 0.0);
        net.loss_probability = r.take_double_or("network", "loss_probability", 0.0);
        net.seed = s.seed;
        const int line = r.section_line("network");
        try {
            net.validate();
        } catch (const ConfigError& err) {
            r.fail(line, err.what());
        }
        if (!(net.base_latency_s - net.jitter_s > 0.0))
            r.fail(line, "network lookahead (base_latency_s - jitter_s) must be positive; the "
                         "conservative master cannot schedule around a zero-lookahead link");
        s.network = net;
    }

    // --- cross-field requirements per mode ----------------------------------
    const bool uses_network = s.cosim && s.cosim->placement != NetworkPlacement::none;
    if (uses_network && !s.network)
        r.fail(r.section_line("cosim"), "cosim.network placement '" + std::string(to_string(s.cosim->placement)) +
                                            "' needs a [network] section");
    if (s.network && !uses_network)
        r.fail(r.section_line("network"),
               "[network] section given but nothing uses it (set cosim.network = command | feedback)");

    switch (s.mode) {
        case RunMode::analyze:
            break;
        case RunMode::simulate:
            if (!s.run) r.fail("simulate mode needs a [run] section");
            if (s.loop.simulated_side.source.harmonics.empty())
                r.fail("simulate mode needs at least one source.harmonic");
            break;
        case RunMode::sweep:
            if (!s.sweep) r.fail("sweep mode needs a [sweep] section");
            break;
        case RunMode::cosim:
            if (!s.cosim) r.fail("cosim mode needs a [cosim] section");
            if (s.loop.simulated_side.source.harmonics.empty())
                r.fail("cosim mode needs at least one source.harmonic");
            break;
    }

    if (phase_advance_on && s.loop.simulated_side.source.harmonics.empty())
        r.fail(r.section_line("compensation"),
               "compensation.phase_advance = on needs at least one source.harmonic");

    // Delay grids: every declared transport must be a whole number of steps
    // of whichever dt this mode runs at.
    std::optional<double> dt;
    if (s.mode == RunMode::simulate && s.run) dt = s.run->dt_s;
    if (s.mode == RunMode::cosim && s.cosim) dt = s.cosim->dt_s;
    if (dt && *dt > 0.0) {
        const int line = s.mode == RunMode::simulate ? r.section_line("run") : r.section_line("cosim");
        detail::check_delay_divides(r, line, "amplifier.delay_s", s.loop.amplifier.delay_s, *dt);
        detail::check_delay_divides(r, line, "sensor.delay_s", s.loop.sensor_delay_s, *dt);
        if (s.mode == RunMode::cosim && s.cosim && s.cosim->end_time_s > 0.0) {
            try {
                delay_to_samples(s.cosim->end_time_s, *dt);
            } catch (const ConfigError&) {
                r.fail(line, "cosim.end_time_s = " + format_g17(s.cosim->end_time_s) + " s with dt = " +
                                 format_g17(*dt) + " s: end_time/dt not integer");
            }
        }
    }

    r.report_leftovers();
    if (!r.clean()) r.throw_errors();

    // Compensation is derived from the now-complete loop: the plan covers the
    // declared harmonics, the predictor spans the declared transport.
    if (phase_advance_on)
        s.loop.phase_advance = design_phase_advance(s.loop.simulated_side.source.f0_hz,
                                                    s.loop.simulated_side.source.harmonic_orders(),
                                                    s.loop.total_delay_s());
    if (s.loop.extrapolator) s.loop.extrapolator->horizon_s = s.loop.total_delay_s();

    // Whole-loop semantic net, then a dry check of whatever the mode will run.
    try {
        validate_loop(s.loop);
        if (s.mode == RunMode::simulate) {
            check_run_args(s.loop, s.run->dt_s, s.run->duration_s);
            if (!(s.loop.total_delay_s() > 0.0))
                throw ConfigError("simulate mode needs a positive total loop delay "
                                  "(a zero-delay loop closes algebraically; only the reference solver does that)");
        }
        if (s.mode == RunMode::cosim) check_run_args(s.loop, s.cosim->dt_s, s.cosim->end_time_s);
        if (s.mode == RunMode::sweep) check_sweep_template(s.loop);
    } catch (const ConfigError& err) {
        r.fail(err.what());
        r.throw_errors();
    }
    return s;
}

/// Canonical text form: parse(serialize(s)) == s for any s whose compensation
/// came from the standard designs (which is everything parse_scenario
/// produces). Numbers carry 17 significant digits so doubles survive exactly.
inline std::string serialize_scenario(const Scenario& s) {
    std::string out;
    auto line = [&out](const std::string& l) { out += l + "\n"; };
    auto num = [&line](const std::string& key, double v) { line(key + " = " + format_g17(v)); };

    line(std::string("mode = ") + to_string(s.mode));
    line("out_dir = " + s.out_dir);
    line("seed = " + format_u64(s.seed));

    line("");
    line("[source]");
    num("fundamental_hz", s.loop.simulated_side.source.f0_hz);
    for (const HarmonicComponent& h : s.loop.simulated_side.source.harmonics)
        line("harmonic = " + std::to_string(h.order) + " " + format_g17(h.amplitude_v) + " " +
             format_g17(h.phase_rad));

    auto impedance = [&](const char* name, const Impedance& z) {
        line("");
        line(std::string("[") + name + "]");
        switch (z.kind) {
            case ImpedanceKind::resistive:
                line("kind = resistive");
                num("resistance_ohm", z.resistance_ohm);
                break;
            case ImpedanceKind::series_rl:
                line("kind = series_rl");
                num("resistance_ohm", z.resistance_ohm);
                num("inductance_h", z.inductance_h);
                break;
            case ImpedanceKind::parallel_rc:
                line("kind = parallel_rc");
                num("resistance_ohm", z.resistance_ohm);
                num("capacitance_f", z.capacitance_f);
                break;
        }
    };
    impedance("simulated", s.loop.simulated_side.source_impedance);
    impedance("hut", s.loop.hut);

    line("");
    line("[amplifier]");
    num("gain", s.loop.amplifier.gain);
    if (std::isfinite(s.loop.amplifier.bandwidth_hz)) num("bandwidth_hz", s.loop.amplifier.bandwidth_hz);
    num("delay_s", s.loop.amplifier.delay_s);
    if (s.loop.amplifier.saturation_v) num("saturation_v", *s.loop.amplifier.saturation_v);

    line("");
    line("[interface]");
    switch (s.loop.interface_algorithm.kind) {
        case InterfaceKind::itm_voltage:
            line("kind = itm");
            break;
        case InterfaceKind::feedback_filter:
            line("kind = feedback_filter");
            num("cutoff_hz", s.loop.interface_algorithm.cutoff_hz);
            break;
        case InterfaceKind::shifting_impedance:
            line("kind = shifting_impedance");
            num("shift_ohm", s.loop.interface_algorithm.z_shift_ohm);
            break;
    }

    line("");
    line("[sensor]");
    num("delay_s", s.loop.sensor_delay_s);

    if (s.loop.disturbance) {
        line("");
        line("[disturbance]");
        num("amplitude_v", s.loop.disturbance->amplitude_v);
        num("freq_hz", s.loop.disturbance->freq_hz);
        num("phase_rad", s.loop.disturbance->phase_rad);
    }

    if (s.loop.phase_advance || s.loop.extrapolator) {
        line("");
        line("[compensation]");
        line(std::string("phase_advance = ") + (s.loop.phase_advance ? "on" : "off"));
        if (s.loop.extrapolator)
            line("extrapolator_order = " + std::to_string(s.loop.extrapolator->order));
    }

    line("");
    line("[stability]");
    num("epsilon", s.epsilon);

    if (s.run) {
        line("");
        line("[run]");
        num("dt_s", s.run->dt_s);
        num("duration_s", s.run->duration_s);
    }

    if (s.sweep) {
        line("");
        line("[sweep]");
        num("ratio_min", s.sweep->ratio_min);
        num("ratio_max", s.sweep->ratio_max);
        line("ratio_count = " + std::to_string(s.sweep->ratio_count));
        num("delay_min_s", s.sweep->delay_min_s);
        num("delay_max_s", s.sweep->delay_max_s);
        line("delay_count = " + std::to_string(s.sweep->delay_count));
    }

    if (s.cosim) {
        line("");
        line("[cosim]");
        line(std::string("master = ") + to_string(s.cosim->master));
        num("dt_s", s.cosim->dt_s);
        num("end_time_s", s.cosim->end_time_s);
        line(std::string("network = ") + to_string(s.cosim->placement));
        for (const HubLag& l : s.cosim->lags)
            line("lag = " + l.unit + " " + format_u64(l.steps));
    }

    if (s.network) {
        line("");
        line("[network]");
        num("base_latency_s", s.network->base_latency_s);
        num("jitter_s", s.network->jitter_s);
        num("loss_probability", s.network->loss_probability);
    }
    return out;
}

}  // namespace phil
