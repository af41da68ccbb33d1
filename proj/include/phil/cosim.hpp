#pragma once

// Co-simulation masters. Three coupling disciplines over one unit contract:
//   run_lockstep     - synchronous exchange-then-advance at a fixed dt
//   run_hub          - lockstep with per-producer staleness (racing hub)
//   run_conservative - event-driven, lookahead-based grants, no rollback
//
// Units own their state and traces; masters own time and routing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "phil/errors.hpp"
#include "phil/format.hpp"

namespace phil {

// ---- unit contract ----

/// One message leaving a unit through a named output port.
struct OutMessage {
    std::string port;
    double time_s = 0.0;
    double payload = 0.0;
};

/// A co-simulated component. Continuous coupling uses set_input/output
/// (latest-value semantics); event coupling uses deliver/advance_to's
/// return. A unit may support either or both.
///
/// Contract:
///  - committed_time_s() is monotone nondecreasing and equals the granted
///    time exactly after a successful advance_to.
///  - advance_to may throw to refuse a grant (misaligned time, internal
///    failure); the master aborts the run naming the unit.
///  - every emitted message is timestamped no earlier than the unit's
///    committed time before the advance plus lookahead_s().
class SimUnit {
public:
    explicit SimUnit(std::string identity) : identity_(std::move(identity)) {
        if (identity_.empty()) throw ConfigError("unit identity must be non-empty");
    }
    virtual ~SimUnit() = default;

    const std::string& identity() const { return identity_; }
    double committed_time_s() const { return committed_s_; }

    /// Static promise: no future emission is timestamped earlier than
    /// committed_time_s() + lookahead_s(). Must be > 0 for the
    /// conservative master.
    virtual double lookahead_s() const = 0;

    virtual std::vector<std::string> input_ports() const = 0;
    virtual std::vector<std::string> output_ports() const = 0;

    /// Latest-value input write (lockstep/hub). Default: unsupported.
    virtual void set_input(const std::string& port, double /*value*/) {
        throw CosimError("unit '" + identity_ + "' has no continuous input port '" + port + "'");
    }

    /// Latest-value output read (lockstep/hub). Default: unsupported.
    virtual double output(const std::string& port) const {
        throw CosimError("unit '" + identity_ + "' has no continuous output port '" + port + "'");
    }

    /// Timestamped message delivery (conservative). Default: unsupported.
    virtual void deliver(double /*time_s*/, const std::string& port, double /*payload*/) {
        throw CosimError("unit '" + identity_ + "' has no message input port '" + port + "'");
    }

    /// Advance internal state to exactly t_s and return the messages
    /// emitted along the way.
    virtual std::vector<OutMessage> advance_to(double t_s) = 0;

protected:
    /// Units record progress through here so monotonicity cannot be
    /// violated by a subclass slip.
    void commit(double t_s) {
        if (!(t_s >= committed_s_)) {
            throw CosimError("unit '" + identity_ + "' tried to move its committed time backwards: " +
                             format_g17(committed_s_) + " -> " + format_g17(t_s));
        }
        committed_s_ = t_s;
    }

private:
    std::string identity_;
    double committed_s_ = 0.0;
};

// ---- wiring ----

struct PortRef {
    std::string unit;
    std::string port;
};

/// Directed connection: the value (or message stream) of from.port feeds
/// to.port. Outputs may fan out; every input is fed by exactly one wire.
struct Wire {
    PortRef from;
    PortRef to;
};

namespace detail {

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

inline void validate_wiring(const std::vector<SimUnit*>& units, const std::vector<Wire>& wires) {
    std::map<std::string, const SimUnit*> by_id;
    for (const SimUnit* u : units) {
        if (u == nullptr) throw ConfigError("null unit handed to a co-simulation master");
        if (!by_id.emplace(u->identity(), u).second) {
            throw ConfigError("duplicate unit identity '" + u->identity() + "'");
        }
    }
    std::map<std::string, int> fed;  // "unit/port" -> number of feeding wires
    for (const Wire& w : wires) {
        auto src = by_id.find(w.from.unit);
        auto dst = by_id.find(w.to.unit);
        if (src == by_id.end()) throw ConfigError("wire source unit '" + w.from.unit + "' is not in the run");
        if (dst == by_id.end()) throw ConfigError("wire target unit '" + w.to.unit + "' is not in the run");
        if (!contains(src->second->output_ports(), w.from.port)) {
            throw ConfigError("unit '" + w.from.unit + "' has no output port '" + w.from.port + "'");
        }
        if (!contains(dst->second->input_ports(), w.to.port)) {
            throw ConfigError("unit '" + w.to.unit + "' has no input port '" + w.to.port + "'");
        }
        fed[w.to.unit + "/" + w.to.port] += 1;
    }
    for (const SimUnit* u : units) {
        for (const std::string& port : u->input_ports()) {
            const int n = fed.count(u->identity() + "/" + port) ? fed.at(u->identity() + "/" + port) : 0;
            if (n != 1) {
                throw ConfigError("input port '" + u->identity() + "/" + port + "' must be fed by exactly one wire, got " +
                                  std::to_string(n));
            }
        }
    }
}

// Sampled units commit n*dt stamps that may differ from a granted horizon
// sum by rounding noise; anything inside this window counts as "reached
// the grant". The window is relative and at least nine orders below any
// sample interval the bench uses.
inline double grant_tol(double granted_s) { return 1e-9 * std::max(1.0, std::abs(granted_s)); }

inline bool reached(double committed_s, double granted_s) {
    return committed_s >= granted_s - grant_tol(granted_s);
}

// Post-advance contract: land on the grant, no undershoot and no overshoot.
inline bool matches_grant(double committed_s, double granted_s) {
    return std::abs(committed_s - granted_s) <= grant_tol(granted_s);
}

inline std::size_t steps_for(double end_time_s, double dt_s) {
    if (!(dt_s > 0.0) || !std::isfinite(dt_s)) throw ConfigError("co-simulation dt must be positive and finite");
    if (!(end_time_s >= 0.0) || !std::isfinite(end_time_s)) throw ConfigError("co-simulation end time must be nonnegative and finite");
    const double ratio = end_time_s / dt_s;
    const auto n = static_cast<long long>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(n)) > 1e-6 * std::max(1.0, std::abs(ratio))) {
        throw ConfigError("end time " + format_g17(end_time_s) + " s is not an integer number of steps of dt " +
                          format_g17(dt_s) + " s");
    }
    return static_cast<std::size_t>(n);
}

}  // namespace detail

// ---- lockstep master ----

// PortRef-addressed access into a unit list, shared by the steady masters.
inline double units_output(const std::vector<SimUnit*>& units, const PortRef& ref) {
    for (SimUnit* u : units) {
        if (u->identity() == ref.unit) return u->output(ref.port);
    }
    throw CosimError("no unit named '" + ref.unit + "' in the run");
}

inline void units_input(const std::vector<SimUnit*>& units, const PortRef& ref, double value) {
    for (SimUnit* u : units) {
        if (u->identity() == ref.unit) {
            u->set_input(ref.port, value);
            return;
        }
    }
    throw CosimError("no unit named '" + ref.unit + "' in the run");
}

struct LockstepResult {
    std::size_t steps = 0;
    std::string log;  // populated only when requested
};

/// Synchronous coupling: at every step, snapshot all wire sources, write
/// the snapshots to the wire targets, then advance every unit one dt.
/// Each exchanged value is therefore the producer's output from the
/// previous step: the exchange itself is one sample of transport.
inline LockstepResult run_lockstep(const std::vector<SimUnit*>& units, const std::vector<Wire>& wires,
                                   double dt_s, double end_time_s, bool with_log = false) {
    LockstepResult result;
    if (units.empty()) return result;
    detail::validate_wiring(units, wires);
    const std::size_t steps = detail::steps_for(end_time_s, dt_s);

    std::vector<double> staged(wires.size(), 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t_now = static_cast<double>(k) * dt_s;
        const double t_next = static_cast<double>(k + 1) * dt_s;
        for (std::size_t w = 0; w < wires.size(); ++w) {
            staged[w] = units_output(units, wires[w].from);
            if (with_log) {
                result.log += "exchange t=" + format_g17(t_now) + " src=" + wires[w].from.unit + " port=" +
                              wires[w].from.port + " dst=" + wires[w].to.unit + " port=" + wires[w].to.port +
                              " value=" + format_g17(staged[w]) + "\n";
            }
        }
        for (std::size_t w = 0; w < wires.size(); ++w) {
            units_input(units, wires[w].to, staged[w]);
        }
        for (SimUnit* u : units) {
            if (with_log) result.log += "grant unit=" + u->identity() + " t=" + format_g17(t_next) + "\n";
            try {
                u->advance_to(t_next);
            } catch (const std::exception& e) {
                throw CosimError("lockstep aborted: unit '" + u->identity() + "' refused the granted time " +
                                 format_g17(t_next) + " s: " + e.what());
            }
            if (!detail::matches_grant(u->committed_time_s(), t_next)) {
                throw CosimError("lockstep aborted: unit '" + u->identity() + "' stopped at " +
                                 format_g17(u->committed_time_s()) + " s instead of the granted " + format_g17(t_next) + " s");
            }
        }
    }
    result.steps = steps;
    return result;
}

// ---- hub master ----

struct HubWireSkew {
    std::string from_unit;
    std::string from_port;
    std::string to_unit;
    std::string to_port;
    std::size_t lag_steps = 0;
    double skew_s = 0.0;  // extra staleness of this wire relative to lockstep
};

struct HubResult {
    std::size_t steps = 0;
    double max_skew_s = 0.0;
    std::vector<HubWireSkew> wires;
    std::string log;
};

/// Hub coupling: like lockstep, except a producer's published outputs are
/// stale by its declared lag (in whole steps). A consumer at step k reads
/// what the producer computed at step k-1-lag instead of k-1. All lags
/// zero reproduces run_lockstep exactly. The skew report records, per
/// wire, the timestamp mismatch the lag introduces; its maximum is
/// max(lag) * dt by construction.
inline HubResult run_hub(const std::vector<SimUnit*>& units, const std::vector<Wire>& wires,
                         const std::map<std::string, std::size_t>& lag_steps, double dt_s, double end_time_s,
                         bool with_log = false) {
    HubResult result;
    if (units.empty()) return result;
    detail::validate_wiring(units, wires);
    for (const auto& [id, lag] : lag_steps) {
        bool known = false;
        for (const SimUnit* u : units) known = known || (u->identity() == id);
        if (!known) throw ConfigError("hub lag declared for unknown unit '" + id + "'");
        (void)lag;
    }
    const std::size_t steps = detail::steps_for(end_time_s, dt_s);

    std::vector<std::size_t> lag(wires.size(), 0);
    for (std::size_t w = 0; w < wires.size(); ++w) {
        auto it = lag_steps.find(wires[w].from.unit);
        lag[w] = (it == lag_steps.end()) ? 0 : it->second;
        result.wires.push_back({wires[w].from.unit, wires[w].from.port, wires[w].to.unit, wires[w].to.port, lag[w],
                                static_cast<double>(lag[w]) * dt_s});
        result.max_skew_s = std::max(result.max_skew_s, static_cast<double>(lag[w]) * dt_s);
    }

    // Full per-wire output history: history[w][j] is the producer's value
    // after step j. The exchange before step k serves history[w][k-1-lag].
    std::vector<std::vector<double>> history(wires.size());
    for (auto& h : history) h.reserve(steps);

    for (std::size_t k = 0; k < steps; ++k) {
        const double t_now = static_cast<double>(k) * dt_s;
        const double t_next = static_cast<double>(k + 1) * dt_s;
        for (std::size_t w = 0; w < wires.size(); ++w) {
            double value = 0.0;
            if (k >= 1 + lag[w]) value = history[w][k - 1 - lag[w]];
            units_input(units, wires[w].to, value);
            if (with_log) {
                result.log += "exchange t=" + format_g17(t_now) + " src=" + wires[w].from.unit + " port=" +
                              wires[w].from.port + " dst=" + wires[w].to.unit + " port=" + wires[w].to.port +
                              " value=" + format_g17(value) + " skew=" + format_g17(static_cast<double>(lag[w]) * dt_s) +
                              "\n";
            }
        }
        for (SimUnit* u : units) {
            if (with_log) result.log += "grant unit=" + u->identity() + " t=" + format_g17(t_next) + "\n";
            try {
                u->advance_to(t_next);
            } catch (const std::exception& e) {
                throw CosimError("hub aborted: unit '" + u->identity() + "' refused the granted time " +
                                 format_g17(t_next) + " s: " + e.what());
            }
            if (!detail::matches_grant(u->committed_time_s(), t_next)) {
                throw CosimError("hub aborted: unit '" + u->identity() + "' stopped at " +
                                 format_g17(u->committed_time_s()) + " s instead of the granted " + format_g17(t_next) +
                                 " s");
            }
        }
        for (std::size_t w = 0; w < wires.size(); ++w) {
            history[w].push_back(units_output(units, wires[w].from));
        }
    }
    result.steps = steps;
    return result;
}

// ---- conservative event-driven master ----

/// One timestamped message in flight. Ordering is total: (time, source
/// identity, per-source sequence number), so the delivery order never
/// depends on container insertion order.
struct Event {
    double time_s = 0.0;
    std::string source;
    std::uint64_t seq = 0;
    std::string target_unit;
    std::string target_port;
    double payload = 0.0;
};

struct EventBefore {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time_s != b.time_s) return a.time_s < b.time_s;
        if (a.source != b.source) return a.source < b.source;
        return a.seq < b.seq;
    }
};

struct ConservativeResult {
    std::size_t rounds = 0;
    std::map<std::string, std::size_t> grants;      // advances actually taken
    std::map<std::string, std::size_t> deliveries;  // events handed to each unit
    std::string log;
};

/// Event-driven coupling without rollback. Each round takes a snapshot of
/// all committed times, grants every unit the horizon
///
///     H_i = min(end, min over peers j with T_j < end of T_j + lookahead_j)
///
/// delivers the pending events below that horizon, and advances the unit.
/// Because grants come from the snapshot and events emitted in a round are
/// timestamped at or above every horizon granted in it, the result - unit
/// states, traces, and the master log - does not depend on the order the
/// units are polled in. Causality is asserted on every delivery with zero
/// tolerance: an event timestamped before its receiver's committed time
/// aborts the run.
inline ConservativeResult run_conservative(const std::vector<SimUnit*>& units, const std::vector<Wire>& wires,
                                           double end_time_s, bool with_log = true) {
    ConservativeResult result;
    if (units.empty()) return result;
    detail::validate_wiring(units, wires);
    if (!(end_time_s >= 0.0) || !std::isfinite(end_time_s)) {
        throw ConfigError("co-simulation end time must be nonnegative and finite");
    }

    // A unit with zero lookahead can never grant its peers a horizon past
    // their own committed time, so the whole set waits on itself forever.
    // Detect the cycle up front and name it.
    {
        std::vector<std::string> stuck;
        for (const SimUnit* u : units) {
            if (!(u->lookahead_s() > 0.0) || !std::isfinite(u->lookahead_s())) stuck.push_back(u->identity());
        }
        if (!stuck.empty()) {
            std::sort(stuck.begin(), stuck.end());
            std::string who;
            for (const std::string& s : stuck) who += (who.empty() ? "" : ", ") + s;
            throw CosimError("zero-lookahead deadlock: every grant would wait on the cycle {" + who +
                             "}; all units must declare lookahead > 0");
        }
    }

    std::multiset<Event, EventBefore> queue;
    std::map<std::string, std::uint64_t> next_seq;
    for (const SimUnit* u : units) {
        next_seq[u->identity()] = 0;
        result.grants[u->identity()] = 0;
        result.deliveries[u->identity()] = 0;
    }

    auto all_done = [&]() {
        for (const SimUnit* u : units) {
            if (!detail::reached(u->committed_time_s(), end_time_s)) return false;
        }
        return true;
    };

    while (!all_done()) {
        // Snapshot: grants in this round depend only on where every unit
        // stood when the round began, never on intra-round progress.
        std::map<std::string, double> at;
        for (const SimUnit* u : units) at[u->identity()] = u->committed_time_s();

        std::map<std::string, std::string> round_log;  // identity -> this unit's lines
        // Emissions stage here and join the queue only when the round ends:
        // an event born this round is timestamped at or above every horizon
        // granted this round, so no unit may consume it yet - staging makes
        // that true by construction instead of by rounding luck, which is
        // what keeps the run independent of polling order.
        std::vector<Event> staged;
        bool progressed = false;

        for (SimUnit* u : units) {
            const std::string& id = u->identity();
            if (detail::reached(at.at(id), end_time_s)) continue;

            double horizon = end_time_s;
            for (const SimUnit* peer : units) {
                if (peer == u) continue;
                const double t_peer = at.at(peer->identity());
                if (detail::reached(t_peer, end_time_s)) continue;  // finished peers no longer constrain anyone
                horizon = std::min(horizon, t_peer + peer->lookahead_s());
            }
            if (horizon <= at.at(id)) continue;  // peers lag too far behind; wait a round

            std::string& lines = round_log[id];
            if (with_log) lines += "grant unit=" + id + " t=" + format_g17(horizon) + "\n";

            // Deliver everything below the horizon. Anything emitted later
            // in this round is timestamped >= some snapshot horizon, so the
            // extraction here sees a complete set.
            for (auto it = queue.begin(); it != queue.end();) {
                if (it->target_unit != id || !(it->time_s < horizon)) {
                    ++it;
                    continue;
                }
                // The guard is a few machine epsilons: horizons are sums
                // (T_peer + lookahead) while units stamp events on exact
                // k*dt products, and the two can disagree by an ulp. Real
                // violations are at least a sample apart.
                const double committed = u->committed_time_s();
                const double ulp_guard = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(committed));
                if (it->time_s < committed - ulp_guard) {
                    throw CosimError("causality violation: unit '" + id + "' committed to " + format_g17(committed) +
                                     " s would receive an event from '" + it->source + "' timestamped " +
                                     format_g17(it->time_s) + " s");
                }
                if (with_log) {
                    lines += "deliver unit=" + id + " t=" + format_g17(it->time_s) + " src=" + it->source + " port=" +
                             it->target_port + " value=" + format_g17(it->payload) + "\n";
                }
                u->deliver(it->time_s, it->target_port, it->payload);
                result.deliveries[id] += 1;
                it = queue.erase(it);
            }

            const double before = u->committed_time_s();
            std::vector<OutMessage> emitted;
            try {
                emitted = u->advance_to(horizon);
            } catch (const std::exception& e) {
                throw CosimError("conservative master aborted: unit '" + id + "' refused the granted time " +
                                 format_g17(horizon) + " s: " + e.what());
            }
            if (!detail::matches_grant(u->committed_time_s(), horizon)) {
                throw CosimError("conservative master aborted: unit '" + id + "' stopped at " +
                                 format_g17(u->committed_time_s()) + " s instead of the granted " + format_g17(horizon) +
                                 " s");
            }
            result.grants[id] += 1;
            progressed = true;

            for (const OutMessage& m : emitted) {
                // Emission contract: nothing below the pre-advance committed
                // time plus lookahead. The epsilon only absorbs the rounding
                // of sums like send_time + latency; real violations are
                // orders of magnitude larger.
                const double floor = before + u->lookahead_s();
                if (m.time_s < floor - 1e-9 * std::max(1.0, std::abs(floor))) {
                    throw CosimError("lookahead violation: unit '" + id + "' emitted an event at " +
                                     format_g17(m.time_s) + " s, below its promised floor " + format_g17(floor) + " s");
                }
                if (with_log) {
                    lines += "emit unit=" + id + " t=" + format_g17(m.time_s) + " port=" + m.port + " value=" +
                             format_g17(m.payload) + "\n";
                }
                for (const Wire& w : wires) {
                    if (w.from.unit == id && w.from.port == m.port) {
                        staged.push_back(Event{m.time_s, id, next_seq[id]++, w.to.unit, w.to.port, m.payload});
                    }
                }
            }
        }

        for (const Event& e : staged) queue.insert(e);
        if (with_log) {
            for (const auto& [id, lines] : round_log) result.log += lines;  // std::map iterates identity-sorted
        }
        result.rounds += 1;
        if (!progressed) {
            throw CosimError("conservative master made no progress in a round; this is a scheduling bug");
        }
    }
    return result;
}

}  // namespace phil
