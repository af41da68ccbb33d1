#pragma once

// The bench halves packaged as co-simulation units, split at the amplifier
// boundary: the simulated side emits the voltage command, the hardware side
// returns the measured current. Both halves step on the same internal grid
// and work under every master (continuous ports for lockstep/hub, message
// ports for the conservative master).

#include <cmath>
#include <cstddef>
#include <deque>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "phil/cosim.hpp"
#include "phil/errors.hpp"
#include "phil/loop.hpp"
#include "phil/simulate.hpp"

namespace phil {

namespace detail {

/// Internal fixed-step engine shared by both bench halves: turns a grant
/// into whole dt samples, applies buffered message inputs at the sample
/// they become visible, and keeps the committed time exactly at the grant.
/// The 1e-9*dt slack only absorbs the ulp difference between a horizon
/// accumulated by summation and the unit's own k*dt sample stamps.
class SampledInputs {
public:
    explicit SampledInputs(double dt_s) : dt_(dt_s) {
        if (!(dt_s > 0.0) || !std::isfinite(dt_s)) throw ConfigError("unit dt must be positive and finite");
    }

    double dt_s() const { return dt_; }
    std::size_t steps_done() const { return n_; }

    void buffer(double time_s, double payload) { pending_.push_back({time_s, payload}); }

    /// True while another whole sample fits inside the grant.
    bool step_fits(double grant_s) const {
        return static_cast<double>(n_ + 1) * dt_ <= grant_s + 1e-9 * dt_;
    }

    /// Fold every buffered message visible at the current sample instant
    /// into the latest value, then stamp the step. Returns the sample's
    /// start time.
    double begin_step(double* latest) {
        const double t_now = static_cast<double>(n_) * dt_;
        while (!pending_.empty() && pending_.front().first <= t_now + 1e-9 * dt_) {
            *latest = pending_.front().second;
            pending_.pop_front();
        }
        ++n_;
        return t_now;
    }

    double end_time_s() const { return static_cast<double>(n_) * dt_; }

    /// The time to commit for a given grant: the unit's own exact n*dt
    /// stamp when the grant is a rounding-noise twin of it, the grant
    /// itself otherwise (mid-interval grants are legitimate). Snapping
    /// keeps horizon sums from accumulating ulp drift across rounds.
    double commit_time(double grant_s) const {
        const double aligned = end_time_s();
        return (std::abs(grant_s - aligned) <= 1e-9 * dt_) ? aligned : grant_s;
    }

private:
    double dt_;
    std::size_t n_ = 0;
    std::deque<std::pair<double, double>> pending_;  // (visible-at time, value), arrival-ordered
};

}  // namespace detail

/// Simulated half of the bench. Input: measured current ("i_fb").
/// Output: amplifier command ("v_cmd"). Lookahead is one sample: the
/// command computed in a step is usable by peers one dt later, which is
/// exactly the closure sample the monolithic engine carries.
class SimSideUnit : public SimUnit {
public:
    SimSideUnit(std::string identity, const PhilLoop& loop, double dt_s)
        : SimUnit(std::move(identity)), core_(loop, dt_s), clock_(dt_s) {}

    double lookahead_s() const override { return clock_.dt_s(); }
    std::vector<std::string> input_ports() const override { return {"i_fb"}; }
    std::vector<std::string> output_ports() const override { return {"v_cmd"}; }

    void set_input(const std::string& port, double value) override {
        if (port != "i_fb") SimUnit::set_input(port, value);
        i_fb_ = value;
    }

    double output(const std::string& port) const override {
        if (port != "v_cmd") return SimUnit::output(port);
        return v_cmd_;
    }

    void deliver(double time_s, const std::string& port, double payload) override {
        if (port != "i_fb") SimUnit::deliver(time_s, port, payload);
        clock_.buffer(time_s, payload);
    }

    std::vector<OutMessage> advance_to(double t_s) override {
        std::vector<OutMessage> out;
        while (clock_.step_fits(t_s)) {
            clock_.begin_step(&i_fb_);
            v_cmd_ = core_.step(i_fb_);
            i_fb_hist_.push_back(i_fb_);
            v_cmd_hist_.push_back(v_cmd_);
            out.push_back({"v_cmd", clock_.end_time_s(), v_cmd_});
        }
        commit(clock_.commit_time(t_s));
        return out;
    }

    const std::vector<double>& command_history() const { return v_cmd_hist_; }
    const std::vector<double>& feedback_history() const { return i_fb_hist_; }

private:
    SimCore core_;
    detail::SampledInputs clock_;
    double i_fb_ = 0.0;
    double v_cmd_ = 0.0;
    std::vector<double> v_cmd_hist_;
    std::vector<double> i_fb_hist_;
};

/// Hardware half of the bench. Input: amplifier command ("v_cmd").
/// Outputs: coupling voltage ("v_coupling", continuous observable) and
/// measured current ("i_meas", also emitted as messages). Ring lengths
/// are explicit so the split can fold the masters' one-step exchange
/// latency into the amplifier transport ring.
class HardwareUnit : public SimUnit {
public:
    HardwareUnit(std::string identity, const PhilLoop& loop, double dt_s, std::size_t amp_ring_len,
                 std::size_t sensor_ring_len)
        : SimUnit(std::move(identity)), core_(loop, dt_s, amp_ring_len, sensor_ring_len), clock_(dt_s) {}

    double lookahead_s() const override { return clock_.dt_s(); }
    std::vector<std::string> input_ports() const override { return {"v_cmd"}; }
    std::vector<std::string> output_ports() const override { return {"v_coupling", "i_meas"}; }

    void set_input(const std::string& port, double value) override {
        if (port != "v_cmd") SimUnit::set_input(port, value);
        v_cmd_ = value;
    }

    double output(const std::string& port) const override {
        if (port == "v_coupling") return v_coupling_;
        if (port == "i_meas") return i_meas_;
        return SimUnit::output(port);
    }

    void deliver(double time_s, const std::string& port, double payload) override {
        if (port != "v_cmd") SimUnit::deliver(time_s, port, payload);
        clock_.buffer(time_s, payload);
    }

    std::vector<OutMessage> advance_to(double t_s) override {
        std::vector<OutMessage> out;
        while (clock_.step_fits(t_s)) {
            clock_.begin_step(&v_cmd_);
            const HardwareCore::Output o = core_.step(v_cmd_);
            v_coupling_ = o.v_coupling;
            i_meas_ = o.i_meas;
            v_coupling_hist_.push_back(v_coupling_);
            i_meas_hist_.push_back(i_meas_);
            out.push_back({"i_meas", clock_.end_time_s(), i_meas_});
        }
        commit(clock_.commit_time(t_s));
        return out;
    }

    const std::vector<double>& coupling_history() const { return v_coupling_hist_; }
    const std::vector<double>& current_history() const { return i_meas_hist_; }

private:
    HardwareCore core_;
    detail::SampledInputs clock_;
    double v_cmd_ = 0.0;
    double v_coupling_ = 0.0;
    double i_meas_ = 0.0;
    std::vector<double> v_coupling_hist_;
    std::vector<double> i_meas_hist_;
};

/// A bench split into its two co-simulation halves, plus the direct wiring
/// between them. When the amplifier transport holds at least one whole
/// sample, one of those samples is reassigned to the masters' exchange hop
/// and the split reproduces the monolithic engine bit for bit. With zero
/// amplifier transport there is nothing to reassign; the exchange then adds
/// exactly one dt of forward-path delay, and adds_one_dt says so.
struct PhilSplit {
    std::unique_ptr<SimSideUnit> sim;
    std::unique_ptr<HardwareUnit> hw;
    bool adds_one_dt = false;

    std::vector<Wire> wires() const {
        return {
            {{sim->identity(), "v_cmd"}, {hw->identity(), "v_cmd"}},
            {{hw->identity(), "i_meas"}, {sim->identity(), "i_fb"}},
        };
    }

    std::vector<SimUnit*> units() const { return {sim.get(), hw.get()}; }
};

inline PhilSplit make_phil_split(const PhilLoop& loop, double dt_s, std::string sim_identity = "sim",
                                 std::string hw_identity = "hw") {
    validate_loop(loop);
    const std::size_t amp_samples = delay_to_samples(loop.amplifier.delay_s, dt_s);
    const std::size_t sensor_samples = delay_to_samples(loop.sensor_delay_s, dt_s);
    PhilSplit split;
    split.adds_one_dt = (amp_samples == 0);
    split.sim = std::make_unique<SimSideUnit>(std::move(sim_identity), loop, dt_s);
    split.hw = std::make_unique<HardwareUnit>(std::move(hw_identity), loop, dt_s,
                                              amp_samples == 0 ? 0 : amp_samples - 1, sensor_samples);
    return split;
}

/// Reassemble the bench channels from a finished split run, aligned the
/// same way run_time_domain records them: i_feedback[k] is the value the
/// simulated side consumed at step k.
inline Trace assemble_trace(const SimSideUnit& sim, const HardwareUnit& hw, double dt_s) {
    if (sim.command_history().size() != hw.coupling_history().size()) {
        throw NumericError("split trace assembly: halves recorded different step counts: " +
                           std::to_string(sim.command_history().size()) + " vs " +
                           std::to_string(hw.coupling_history().size()));
    }
    Trace trace;
    trace.dt_s = dt_s;
    trace.diverged = false;
    trace.v_coupling = hw.coupling_history();
    trace.i_feedback = sim.feedback_history();
    trace.v_command = sim.command_history();
    return trace;
}

}  // namespace phil
