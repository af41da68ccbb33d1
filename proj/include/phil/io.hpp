#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "phil/errors.hpp"
#include "phil/format.hpp"
#include "phil/simulate.hpp"
#include "phil/stability.hpp"

/// CSV builders for every artifact the front end emits, plus the atomic file
/// writer. Builders return the complete file as a string: byte-determinism is
/// then a plain string comparison, and writing is a single rename away.
///
/// Shared conventions: '#'-prefixed header comments first, then one header
/// row, then data rows; every number printed with 17 significant digits and a
/// '.' decimal separator; final line newline-terminated.

namespace phil {

/// Time series, one row per sample: time first, then every channel.
inline std::string trace_csv(const Trace& trace, const std::vector<std::string>& channel_names,
                             const std::vector<const std::vector<double>*>& channels) {
    if (channel_names.size() != channels.size() || channels.empty())
        throw ConfigError("trace_csv: channel names and columns must match and be nonempty");
    const std::size_t rows = channels.front()->size();
    for (const std::vector<double>* c : channels)
        if (c->size() != rows) throw ConfigError("trace_csv: channels have different lengths");

    std::string out = "# diverged = ";
    out += trace.diverged ? "true" : "false";
    out += "\ntime_s";
    for (const std::string& name : channel_names) out += "," + name;
    out += "\n";
    for (std::size_t k = 0; k < rows; ++k) {
        out += format_g17(static_cast<double>(k) * trace.dt_s);
        for (const std::vector<double>* c : channels) out += "," + format_g17((*c)[k]);
        out += "\n";
    }
    return out;
}

/// The full three-channel bench trace.
inline std::string trace_csv(const Trace& trace) {
    return trace_csv(trace, {"v_coupling", "i_feedback", "v_command"},
                     {&trace.v_coupling, &trace.i_feedback, &trace.v_command});
}

inline std::string verdict_csv(const StabilityVerdict& v) {
    std::string out = "classification,worst_magnitude,gain_margin_db\n";
    out += std::string(to_string(v.classification)) + "," + format_g17(v.worst_magnitude_at_crossover) + "," +
           format_g17(v.gain_margin_db) + "\n";
    return out;
}

inline std::string frequency_response_csv(const std::vector<FrequencyPoint>& points) {
    std::string out = "omega_rad_s,magnitude,phase_rad\n";
    for (const FrequencyPoint& p : points)
        out += format_g17(p.omega_rad_s) + "," + format_g17(p.magnitude) + "," + format_g17(p.phase_rad) + "\n";
    return out;
}

/// Per-harmonic errors versus the directly-coupled reference, RMS in the
/// header comments. A trace that diverged has no steady-state window to
/// measure, so the caller skips this file's data rows via `skipped_reason`.
inline std::string accuracy_csv(const AccuracyReport& rep) {
    std::string out;
    out += "# rms_error_v_coupling = " + format_g17(rep.rms_error_v_coupling) + "\n";
    out += "# rms_error_i_feedback = " + format_g17(rep.rms_error_i_feedback) + "\n";
    out += "# window_begin_sample = " + format_u64(rep.window_begin) + "\n";
    out += "# window_sample_count = " + format_u64(rep.window_count) + "\n";
    out += "harmonic_order,magnitude_ratio_error,phase_error_deg\n";
    for (const HarmonicError& e : rep.per_harmonic)
        out += std::to_string(e.order) + "," + format_g17(e.magnitude_ratio_error) + "," +
               format_g17(e.phase_error_deg) + "\n";
    return out;
}

inline std::string accuracy_csv_skipped(const std::string& reason) {
    return "# skipped: " + reason + "\nharmonic_order,magnitude_ratio_error,phase_error_deg\n";
}

inline std::string stability_map_csv(const StabilityMap& map) {
    std::string out = "ratio,delay_s,classification,worst_magnitude,gain_margin_db\n";
    for (const MapCell& cell : map.cells) {
        out += format_g17(cell.ratio) + "," + format_g17(cell.delay_s) + ",";
        if (cell.verdict) {
            out += std::string(to_string(cell.verdict->classification)) + "," +
                   format_g17(cell.verdict->worst_magnitude_at_crossover) + "," +
                   format_g17(cell.verdict->gain_margin_db);
        } else {
            // A cell that failed to classify: keep the grid rectangular, park
            // the reason where a plotting script can't mistake it for data.
            out += "error,nan,nan";
        }
        out += "\n";
    }
    return out;
}

/// Write-then-rename: readers see either the old complete file or the new
/// complete file, never a torn one.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw ConfigError("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace phil
