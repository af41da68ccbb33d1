#pragma once

#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "phil/cosim.hpp"
#include "phil/io.hpp"
#include "phil/netem.hpp"
#include "phil/phil_units.hpp"
#include "phil/scenario.hpp"
#include "phil/simulate.hpp"
#include "phil/stability.hpp"

/// Scenario execution: each mode turns a validated Scenario into a set of
/// artifact files, built entirely in memory. Returning filename -> content
/// keeps the contract testable as plain string equality (byte-determinism)
/// and leaves the actual file writing - the only side effect - to the caller.

namespace phil {

struct RunArtifacts {
    std::map<std::string, std::string> files;
    bool diverged = false;
};

/// stability_map with the cells fanned out over worker threads. Cells land in
/// preallocated slots, so the result - and the CSV serialized from it - is
/// identical to the sequential map regardless of thread count or timing.
inline StabilityMap stability_map_concurrent(const PhilLoop& base, const std::vector<double>& ratios,
                                             const std::vector<double>& delays_s, const UncertaintyMargin& margin,
                                             unsigned thread_count = 0) {
    if (ratios.empty() || delays_s.empty()) throw ConfigError("stability_map: sweep grids must be nonempty");
    check_sweep_template(base);
    margin.threshold();  // reject a bad epsilon here, not on a worker thread

    StabilityMap map;
    map.ratios = ratios;
    map.delays_s = delays_s;
    const std::size_t cells = ratios.size() * delays_s.size();
    map.cells.resize(cells);

    if (thread_count == 0) thread_count = std::max(1u, std::thread::hardware_concurrency());
    thread_count = static_cast<unsigned>(std::min<std::size_t>(thread_count, cells));

    auto work = [&](std::size_t first) {
        for (std::size_t k = first; k < cells; k += thread_count) {
            const double ratio = ratios[k / delays_s.size()];
            const double delay = delays_s[k % delays_s.size()];
            map.cells[k] = evaluate_map_cell(base, ratio, delay, margin);
        }
    };
    if (thread_count <= 1) {
        work(0);
        return map;
    }
    std::vector<std::thread> workers;
    workers.reserve(thread_count);
    for (unsigned t = 0; t < thread_count; ++t) workers.emplace_back(work, t);
    for (std::thread& w : workers) w.join();
    return map;
}

namespace detail {

inline RunArtifacts run_analyze(const Scenario& s) {
    const TransferBlock open = open_loop_block(s.loop);
    const StabilityVerdict verdict = classify(open, UncertaintyMargin{s.epsilon});
    RunArtifacts a;
    a.files["verdict.csv"] = verdict_csv(verdict);
    a.files["frequency_response.csv"] =
        frequency_response_csv(open_loop_response(open, classification_grid(open)));
    return a;
}

inline RunArtifacts run_simulate(const Scenario& s) {
    const RunParams& run = *s.run;
    const Trace trace = run_time_domain(s.loop, run.dt_s, run.duration_s);
    RunArtifacts a;
    a.diverged = trace.diverged;
    a.files["trace.csv"] = trace_csv(trace);
    if (trace.diverged) {
        a.files["accuracy.csv"] = accuracy_csv_skipped("trace diverged; no steady-state window to measure");
        return a;
    }
    const Trace reference = reference_direct(s.loop, run.dt_s, run.duration_s);
    const AccuracyReport report = accuracy_metrics(trace, reference,
                                                   s.loop.simulated_side.source.harmonic_orders(),
                                                   s.loop.simulated_side.source.f0_hz);
    a.files["accuracy.csv"] = accuracy_csv(report);
    return a;
}

inline RunArtifacts run_sweep(const Scenario& s) {
    const SweepParams& sw = *s.sweep;
    const StabilityMap map =
        stability_map_concurrent(s.loop, sw.ratios(), sw.delays(), UncertaintyMargin{s.epsilon});
    RunArtifacts a;
    a.files["stability_map.csv"] = stability_map_csv(map);
    return a;
}

inline RunArtifacts run_cosim(const Scenario& s) {
    const CosimParams& co = *s.cosim;
    PhilSplit split = make_phil_split(s.loop, co.dt_s);
    std::vector<SimUnit*> units = split.units();
    std::vector<Wire> wires;
    std::optional<NetemUnit> net;
    if (co.placement == NetworkPlacement::none) {
        wires = split.wires();
    } else {
        NetworkSpec spec = *s.network;
        spec.seed = s.seed;
        net.emplace("net", spec);
        units.push_back(&*net);
        const std::string sim_id = split.sim->identity();
        const std::string hw_id = split.hw->identity();
        if (co.placement == NetworkPlacement::command) {
            wires = {{{sim_id, "v_cmd"}, {"net", "in"}},
                     {{"net", "out"}, {hw_id, "v_cmd"}},
                     {{hw_id, "i_meas"}, {sim_id, "i_fb"}}};
        } else {
            wires = {{{sim_id, "v_cmd"}, {hw_id, "v_cmd"}},
                     {{hw_id, "i_meas"}, {"net", "in"}},
                     {{"net", "out"}, {sim_id, "i_fb"}}};
        }
    }

    std::string log;
    switch (co.master) {
        case MasterKind::lockstep: {
            LockstepResult res = run_lockstep(units, wires, co.dt_s, co.end_time_s, true);
            log = std::move(res.log);
            break;
        }
        case MasterKind::hub: {
            std::map<std::string, std::size_t> lags;
            for (const HubLag& l : co.lags) lags[l.unit] = l.steps;
            HubResult res = run_hub(units, wires, lags, co.dt_s, co.end_time_s, true);
            log = std::move(res.log);
            break;
        }
        case MasterKind::conservative: {
            ConservativeResult res = run_conservative(units, wires, co.end_time_s, true);
            log = std::move(res.log);
            break;
        }
    }
    if (!log.empty() && log.back() != '\n') log += '\n';

    RunArtifacts a;
    a.files["master_log.txt"] = std::move(log);

    Trace meta;
    meta.dt_s = co.dt_s;
    a.files["trace_sim.csv"] = trace_csv(meta, {"v_command", "i_feedback"},
                                         {&split.sim->command_history(), &split.sim->feedback_history()});
    a.files["trace_hw.csv"] = trace_csv(meta, {"v_coupling", "i_measured"},
                                        {&split.hw->coupling_history(), &split.hw->current_history()});

    const Trace bench = assemble_trace(*split.sim, *split.hw, co.dt_s);
    const Trace reference = reference_direct(s.loop, co.dt_s, co.end_time_s);
    const AccuracyReport report = accuracy_metrics(bench, reference,
                                                   s.loop.simulated_side.source.harmonic_orders(),
                                                   s.loop.simulated_side.source.f0_hz);
    a.files["accuracy.csv"] = accuracy_csv(report);
    return a;
}

}  // namespace detail

/// Execute the scenario's mode. The scenario is assumed to have come out of
/// parse_scenario (or to satisfy the same invariants).
inline RunArtifacts run_scenario(const Scenario& s) {
    switch (s.mode) {
        case RunMode::analyze: return detail::run_analyze(s);
        case RunMode::simulate: return detail::run_simulate(s);
        case RunMode::sweep: return detail::run_sweep(s);
        case RunMode::cosim: return detail::run_cosim(s);
    }
    throw ConfigError("run_scenario: unknown mode");
}

}  // namespace phil
