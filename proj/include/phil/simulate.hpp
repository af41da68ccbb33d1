#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "phil/compensation.hpp"
#include "phil/errors.hpp"
#include "phil/loop.hpp"
#include "phil/lti.hpp"

namespace phil {

/// Recorded bench channels, all the same length at fixed dt. A diverged run
/// is a result (flagged, truncated at the offending sample), not an error.
struct Trace {
    double dt_s = 0.0;
    bool diverged = false;
    std::vector<double> v_coupling;  // voltage applied at the coupling point
    std::vector<double> i_feedback;  // measured current entering the simulated side
    std::vector<double> v_command;   // amplifier command from the simulated side

    std::size_t size() const { return v_coupling.size(); }
};

/// Simulated side of the bench: ideal source behind a source impedance, plus
/// the feedback conditioning chain (extrapolator, feedback filter) and the
/// optional per-harmonic command rotation.
class SimCore {
public:
    SimCore(const PhilLoop& loop, double dt_s)
        : dt_(dt_s), source_(loop.simulated_side.source), z_drop_(simulated_drop_impedance(loop), dt_s) {
        if (loop.extrapolator) extrap_.emplace(*loop.extrapolator, dt_s);
        if (loop.interface_algorithm.kind == InterfaceKind::feedback_filter)
            filter_.emplace(design_feedback_filter(loop.interface_algorithm.cutoff_hz).rational(), dt_s);
        if (loop.phase_advance) rotator_.emplace(*loop.phase_advance, dt_s);
    }

    /// Consume the measured current valid at the current step, produce the
    /// amplifier command for the same step.
    double step(double i_meas) {
        double i = i_meas;
        if (extrap_) i = extrap_->step(i);
        if (filter_) i = filter_->step(i);
        const double t = static_cast<double>(k_) * dt_;
        double v = source_.value_at(t) - z_drop_.step(i);
        if (rotator_) v = rotator_->step(v);
        ++k_;
        return v;
    }

private:
    double dt_;
    SineSource source_;
    DiscreteStepper z_drop_;
    std::optional<ExtrapolatorState> extrap_;
    std::optional<DiscreteStepper> filter_;
    std::optional<HarmonicRotator> rotator_;
    std::size_t k_ = 0;
};

/// Hardware side: amplifier dynamics, transport delay, saturation clamp,
/// additive disturbance, hardware admittance, sensor delay. Ring lengths are
/// passed explicitly so a split (co-simulated) bench can fold its one-step
/// exchange latency into the amplifier ring and stay sample-aligned with the
/// monolithic run.
class HardwareCore {
public:
    struct Output {
        double v_coupling;
        double i_meas;
    };

    HardwareCore(const PhilLoop& loop, double dt_s, std::size_t amp_ring_len, std::size_t sensor_ring_len)
        : dt_(dt_s),
          amp_dyn_(loop.amplifier.dynamics(), dt_s),
          amp_ring_(amp_ring_len),
          hut_(hardware_admittance(loop), dt_s),
          sensor_ring_(sensor_ring_len),
          saturation_(loop.amplifier.saturation_v),
          disturbance_(loop.disturbance) {}

    Output step(double v_cmd) {
        double v = amp_ring_.shift(amp_dyn_.step(v_cmd));
        if (saturation_) v = std::clamp(v, -*saturation_, *saturation_);
        if (disturbance_) v += disturbance_->value_at(static_cast<double>(k_) * dt_);
        const double i = hut_.step(v);
        ++k_;
        return {v, sensor_ring_.shift(i)};
    }

private:
    double dt_;
    DiscreteStepper amp_dyn_;
    DelayLine amp_ring_;
    DiscreteStepper hut_;
    DelayLine sensor_ring_;
    std::optional<double> saturation_;
    std::optional<Disturbance> disturbance_;
    std::size_t k_ = 0;
};

inline void check_run_args(const PhilLoop& loop, double dt_s, double duration_s) {
    if (!(dt_s > 0.0)) throw ConfigError("run: dt must be positive");
    if (!(duration_s > 0.0)) throw ConfigError("run: duration must be positive");
    const double f_max = loop.simulated_side.source.max_frequency_hz();
    if (dt_s > 1.0 / (50.0 * f_max) * (1.0 + 1e-12))
        throw ConfigError("run: dt must satisfy dt <= 1/(50*f_max) = " + std::to_string(1.0 / (50.0 * f_max)) +
                          " s, got " + std::to_string(dt_s) + " s");
}

/// Fixed-step closed-loop execution. Dataflow per step k: the simulated side
/// consumes the sensor output produced at step k-1, emits the command; the
/// hardware side consumes the command the same step. The loop therefore
/// carries the declared transport delay plus one closure sample.
inline Trace run_time_domain(const PhilLoop& loop, double dt_s, double duration_s, bool record = true) {
    validate_loop(loop);
    check_run_args(loop, dt_s, duration_s);
    if (!(loop.total_delay_s() > 0.0))
        throw ConfigError("run: total loop delay must be positive (zero-delay runs are reference-only)");

    SimCore sim(loop, dt_s);
    HardwareCore hw(loop, dt_s, delay_to_samples(loop.amplifier.delay_s, dt_s),
                    delay_to_samples(loop.sensor_delay_s, dt_s));

    double bound = 10.0 * loop.simulated_side.source.open_circuit_amplitude();
    if (loop.disturbance) bound = std::max(bound, 10.0 * std::abs(loop.disturbance->amplitude_v));

    const auto steps = static_cast<std::size_t>(std::llround(duration_s / dt_s));
    Trace tr;
    tr.dt_s = dt_s;
    if (record) {
        tr.v_coupling.reserve(steps);
        tr.i_feedback.reserve(steps);
        tr.v_command.reserve(steps);
    }
    double i_fb = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double v_cmd = sim.step(i_fb);
        const HardwareCore::Output out = hw.step(v_cmd);
        if (record) {
            tr.v_coupling.push_back(out.v_coupling);
            tr.i_feedback.push_back(i_fb);
            tr.v_command.push_back(v_cmd);
        }
        const double worst = std::max({std::abs(v_cmd), std::abs(out.v_coupling), std::abs(out.i_meas)});
        if (bound > 0.0 && worst > bound) {
            tr.diverged = true;
            break;
        }
        i_fb = out.i_meas;
    }
    return tr;
}

/// Accuracy baseline: the hardware element directly connected to the
/// simulated side — same circuit, ideal coupling, no amplifier, no delay, no
/// interface dynamics.
inline Trace reference_direct(const PhilLoop& loop, double dt_s, double duration_s) {
    validate_loop(loop);
    check_run_args(loop, dt_s, duration_s);
    const Rational z_total = rational_add(loop.simulated_side.source_impedance.impedance(), loop.hut.impedance());
    DiscreteStepper to_voltage(rational_div(loop.hut.impedance(), z_total), dt_s);
    DiscreteStepper to_current(z_total.reciprocal(), dt_s);

    const auto steps = static_cast<std::size_t>(std::llround(duration_s / dt_s));
    Trace tr;
    tr.dt_s = dt_s;
    tr.v_coupling.reserve(steps);
    tr.i_feedback.reserve(steps);
    tr.v_command.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double v_src = loop.simulated_side.source.value_at(static_cast<double>(k) * dt_s);
        const double v = to_voltage.step(v_src);
        const double i = to_current.step(v_src);
        tr.v_coupling.push_back(v);
        tr.i_feedback.push_back(i);
        tr.v_command.push_back(v);  // ideal coupling: the command is the coupling voltage itself
    }
    return tr;
}

/// Per-harmonic agreement between a bench trace and its ideal reference.
struct HarmonicError {
    int order = 0;
    double magnitude_ratio_error = 0.0;  // |X_trace| / |X_reference| - 1
    double phase_error_deg = 0.0;        // positive when the trace lags the reference
};

struct AccuracyReport {
    std::vector<HarmonicError> per_harmonic;  // measured on the coupling voltage
    double rms_error_v_coupling = 0.0;
    double rms_error_i_feedback = 0.0;
    std::size_t window_begin = 0;
    std::size_t window_count = 0;
};

namespace detail {
inline std::complex<double> harmonic_bin(const std::vector<double>& x, double omega, double dt,
                                         std::size_t begin, std::size_t count) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t k = begin; k < begin + count; ++k)
        acc += x[k] * std::polar(1.0, -omega * static_cast<double>(k) * dt);
    return acc;
}
}  // namespace detail

/// Single-bin Fourier projection over the steady-state window: the last 20%
/// of the run, truncated down to an integer number of fundamental periods.
inline AccuracyReport accuracy_metrics(const Trace& trace, const Trace& reference,
                                       const std::vector<int>& harmonics, double f0_hz) {
    if (trace.dt_s != reference.dt_s) throw ConfigError("accuracy_metrics: traces have different dt");
    if (trace.size() != reference.size() || trace.size() == 0)
        throw ConfigError("accuracy_metrics: traces must be nonempty and the same length");
    if (!(f0_hz > 0.0)) throw ConfigError("accuracy_metrics: fundamental must be positive");

    const double dt = trace.dt_s;
    const std::size_t spp = delay_to_samples(1.0 / f0_hz, dt);  // samples per fundamental period
    const std::size_t n = trace.size();
    const std::size_t periods = (n / 5) / spp;
    if (periods < 1) throw ConfigError("accuracy_metrics: analysis window shorter than one fundamental period");
    const std::size_t count = periods * spp;
    const std::size_t begin = n - count;

    AccuracyReport rep;
    rep.window_begin = begin;
    rep.window_count = count;
    for (int h : harmonics) {
        if (h <= 0) throw ConfigError("accuracy_metrics: harmonic orders must be positive");
        const double omega = 2.0 * std::numbers::pi * f0_hz * h;
        const std::complex<double> xt = detail::harmonic_bin(trace.v_coupling, omega, dt, begin, count);
        const std::complex<double> xr = detail::harmonic_bin(reference.v_coupling, omega, dt, begin, count);
        if (std::abs(xr) == 0.0)
            throw NumericError("accuracy_metrics: reference harmonic " + std::to_string(h) + " has zero magnitude");
        HarmonicError e;
        e.order = h;
        e.magnitude_ratio_error = std::abs(xt) / std::abs(xr) - 1.0;
        double d = std::arg(xr) - std::arg(xt);
        constexpr double two_pi = 2.0 * std::numbers::pi;
        d = std::remainder(d, two_pi);
        if (d <= -std::numbers::pi) d += two_pi;  // wrap to (-pi, pi]
        e.phase_error_deg = d * 180.0 / std::numbers::pi;
        rep.per_harmonic.push_back(e);
    }
    auto rms_diff = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double acc = 0.0;
        for (std::size_t k = begin; k < begin + count; ++k) {
            const double d = a[k] - b[k];
            acc += d * d;
        }
        return std::sqrt(acc / static_cast<double>(count));
    };
    rep.rms_error_v_coupling = rms_diff(trace.v_coupling, reference.v_coupling);
    rep.rms_error_i_feedback = rms_diff(trace.i_feedback, reference.i_feedback);
    return rep;
}

}  // namespace phil
