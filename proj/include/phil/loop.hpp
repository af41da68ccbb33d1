#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phil/compensation.hpp"
#include "phil/errors.hpp"
#include "phil/lti.hpp"

namespace phil {

/// One-port circuit element seen from the coupling point.
enum class ImpedanceKind { resistive, series_rl, parallel_rc };

struct Impedance {
    ImpedanceKind kind = ImpedanceKind::resistive;
    double resistance_ohm = 0.0;
    double inductance_h = 0.0;
    double capacitance_f = 0.0;

    static Impedance resistive(double r) { return {ImpedanceKind::resistive, r, 0.0, 0.0}; }
    static Impedance series_rl(double r, double l) { return {ImpedanceKind::series_rl, r, l, 0.0}; }
    static Impedance parallel_rc(double r, double c) { return {ImpedanceKind::parallel_rc, r, 0.0, c}; }

    void validate(const std::string& who) const {
        if (!(resistance_ohm > 0.0) || !std::isfinite(resistance_ohm))
            throw ConfigError(who + ": resistance must be positive and finite");
        if (kind == ImpedanceKind::series_rl && (!(inductance_h > 0.0) || !std::isfinite(inductance_h)))
            throw ConfigError(who + ": inductance must be positive and finite");
        if (kind == ImpedanceKind::parallel_rc && (!(capacitance_f > 0.0) || !std::isfinite(capacitance_f)))
            throw ConfigError(who + ": capacitance must be positive and finite");
    }

    /// Z(s) as a rational in s.
    Rational impedance() const {
        switch (kind) {
            case ImpedanceKind::resistive: return {{resistance_ohm}, {1.0}};
            case ImpedanceKind::series_rl: return {{resistance_ohm, inductance_h}, {1.0}};
            case ImpedanceKind::parallel_rc:
                return {{resistance_ohm}, {1.0, resistance_ohm * capacitance_f}};
        }
        throw ConfigError("Impedance: unknown kind");
    }

    Rational admittance() const { return impedance().reciprocal(); }

    friend bool operator==(const Impedance&, const Impedance&) = default;
};

inline Rational rational_add(const Rational& a, const Rational& b) {
    return {poly_add(poly_mul(a.num, b.den), poly_mul(b.num, a.den)), poly_mul(a.den, b.den)};
}

inline Rational rational_div(const Rational& a, const Rational& b) {
    return {poly_mul(a.num, b.den), poly_mul(a.den, b.num)};
}

/// Ideal source: sum of sine harmonics of a common fundamental.
struct HarmonicComponent {
    int order = 1;          // frequency = order * f0
    double amplitude_v = 0.0;
    double phase_rad = 0.0;

    friend bool operator==(const HarmonicComponent&, const HarmonicComponent&) = default;
};

struct SineSource {
    double f0_hz = 50.0;
    std::vector<HarmonicComponent> harmonics;

    double value_at(double t) const {
        double v = 0.0;
        for (const HarmonicComponent& h : harmonics)
            v += h.amplitude_v * std::sin(2.0 * std::numbers::pi * f0_hz * h.order * t + h.phase_rad);
        return v;
    }

    /// Worst-case instantaneous magnitude (every harmonic peaking together).
    double open_circuit_amplitude() const {
        double a = 0.0;
        for (const HarmonicComponent& h : harmonics) a += std::abs(h.amplitude_v);
        return a;
    }

    double max_frequency_hz() const {
        int top = 1;
        for (const HarmonicComponent& h : harmonics) top = std::max(top, h.order);
        return f0_hz * top;
    }

    std::vector<int> harmonic_orders() const {
        std::vector<int> out;
        for (const HarmonicComponent& h : harmonics) out.push_back(h.order);
        return out;
    }

    friend bool operator==(const SineSource&, const SineSource&) = default;

    void validate() const {
        if (!(f0_hz > 0.0)) throw ConfigError("source: fundamental frequency must be positive");
        std::set<int> seen;
        for (const HarmonicComponent& h : harmonics) {
            if (h.order <= 0) throw ConfigError("source: harmonic orders must be positive integers");
            if (!seen.insert(h.order).second)
                throw ConfigError("source: duplicate harmonic order " + std::to_string(h.order));
            if (!std::isfinite(h.amplitude_v) || !std::isfinite(h.phase_rad))
                throw ConfigError("source: non-finite harmonic parameters");
        }
    }
};

struct SimulatedSide {
    SineSource source;
    Impedance source_impedance;

    friend bool operator==(const SimulatedSide&, const SimulatedSide&) = default;
};

/// Power amplifier: gain * first-order low-pass * transport delay, with an
/// optional hard voltage clamp. bandwidth_hz may be +inf for an ideal
/// (frequency-flat) amplifier.
struct AmplifierModel {
    double gain = 1.0;
    double bandwidth_hz = std::numeric_limits<double>::infinity();
    double delay_s = 0.0;
    std::optional<double> saturation_v;

    void validate() const {
        if (!(bandwidth_hz > 0.0)) throw ConfigError("amplifier: bandwidth must be positive");
        if (gain == 0.0 || !std::isfinite(gain)) throw ConfigError("amplifier: gain must be finite and nonzero");
        if (delay_s < 0.0 || !std::isfinite(delay_s))
            throw ConfigError("amplifier: delay must be finite and nonnegative");
        if (saturation_v && !(*saturation_v > 0.0)) throw ConfigError("amplifier: saturation must be positive");
    }

    /// Rational part (gain and bandwidth), excluding the transport delay.
    Rational dynamics() const {
        if (std::isinf(bandwidth_hz)) return {{gain}, {1.0}};
        return {{gain}, {1.0, 1.0 / (2.0 * std::numbers::pi * bandwidth_hz)}};
    }

    /// The full amplifier block (saturation disabled).
    TransferBlock block() const {
        const Rational d = dynamics();
        return TransferBlock(d.num, d.den, delay_s, "amplifier");
    }

    friend bool operator==(const AmplifierModel&, const AmplifierModel&) = default;
};

enum class InterfaceKind { itm_voltage, feedback_filter, shifting_impedance };

struct InterfaceAlgorithm {
    InterfaceKind kind = InterfaceKind::itm_voltage;
    double cutoff_hz = 0.0;    // feedback_filter only
    double z_shift_ohm = 0.0;  // shifting_impedance only

    static InterfaceAlgorithm itm() { return {InterfaceKind::itm_voltage, 0.0, 0.0}; }
    static InterfaceAlgorithm filter(double cutoff_hz) {
        return {InterfaceKind::feedback_filter, cutoff_hz, 0.0};
    }
    static InterfaceAlgorithm shifting(double z_shift_ohm) {
        return {InterfaceKind::shifting_impedance, 0.0, z_shift_ohm};
    }

    void validate() const {
        if (kind == InterfaceKind::feedback_filter && !(cutoff_hz > 0.0))
            throw ConfigError("feedback-filter interface: cutoff must be positive (no default)");
        if (kind == InterfaceKind::shifting_impedance && !std::isfinite(z_shift_ohm))
            throw ConfigError("shifting-impedance interface: shift value must be finite (no default)");
    }

    friend bool operator==(const InterfaceAlgorithm&, const InterfaceAlgorithm&) = default;
};

/// Additive sine disturbance summed into the amplifier output.
struct Disturbance {
    double amplitude_v = 0.0;
    double freq_hz = 0.0;
    double phase_rad = 0.0;

    double value_at(double t) const {
        return amplitude_v * std::sin(2.0 * std::numbers::pi * freq_hz * t + phase_rad);
    }

    friend bool operator==(const Disturbance&, const Disturbance&) = default;
};

/// The full closed-loop bench description.
struct PhilLoop {
    SimulatedSide simulated_side;
    InterfaceAlgorithm interface_algorithm;
    AmplifierModel amplifier;
    Impedance hut;
    double sensor_delay_s = 0.0;
    std::optional<Disturbance> disturbance;
    std::optional<PhaseAdvancePlan> phase_advance;
    std::optional<Extrapolator> extrapolator;

    double total_delay_s() const { return amplifier.delay_s + sensor_delay_s; }

    friend bool operator==(const PhilLoop&, const PhilLoop&) = default;
};

inline void validate_loop(const PhilLoop& loop) {
    loop.simulated_side.source.validate();
    loop.simulated_side.source_impedance.validate("source impedance");
    loop.hut.validate("hardware under test");
    loop.amplifier.validate();
    loop.interface_algorithm.validate();
    if (loop.sensor_delay_s < 0.0 || !std::isfinite(loop.sensor_delay_s))
        throw ConfigError("sensor delay must be finite and nonnegative");
    if (loop.phase_advance) {
        const PhaseAdvancePlan& plan = *loop.phase_advance;
        if (plan.fundamental_hz != loop.simulated_side.source.f0_hz)
            throw ConfigError("phase-advance plan fundamental does not match the source fundamental");
        std::set<int> declared;
        for (const HarmonicComponent& h : loop.simulated_side.source.harmonics) declared.insert(h.order);
        std::set<int> planned;
        for (const PhaseAdvanceEntry& e : plan.entries) planned.insert(e.order);
        if (declared != planned)
            throw ConfigError("phase-advance plan must cover exactly the declared source harmonics");
    }
    if (loop.extrapolator) {
        if (loop.extrapolator->order < 0 || loop.extrapolator->order > 1)
            throw ConfigError("extrapolator: only orders 0 and 1 are supported");
        const double want = loop.total_delay_s();
        if (std::abs(loop.extrapolator->horizon_s - want) > 1e-9 * std::max(1.0, want))
            throw ConfigError("extrapolator horizon must equal the total loop delay");
    }
}

/// Effective impedance the simulated side applies to the fed-back current.
inline Rational simulated_drop_impedance(const PhilLoop& loop) {
    Rational z = loop.simulated_side.source_impedance.impedance();
    if (loop.interface_algorithm.kind == InterfaceKind::shifting_impedance) {
        // Move z_shift across the interface: subtract here, add on the hardware side.
        z.num = poly_add(z.num, poly_scale(z.den, -loop.interface_algorithm.z_shift_ohm));
    }
    return z;
}

/// Effective admittance converting amplifier voltage to hardware current.
inline Rational hardware_admittance(const PhilLoop& loop) {
    Rational z = loop.hut.impedance();
    if (loop.interface_algorithm.kind == InterfaceKind::shifting_impedance)
        z.num = poly_add(z.num, poly_scale(z.den, loop.interface_algorithm.z_shift_ohm));
    return z.reciprocal();
}

/// Assemble the open-loop chain: simulated-side drop, feedback filter,
/// amplifier dynamics, hardware admittance, and the total transport delay.
/// The result must be a proper block; an ideal (infinite-bandwidth) amplifier
/// with an inductive source or capacitive hardware leg makes the chain
/// improper and is rejected with a pointer at the fix.
inline TransferBlock open_loop_block(const PhilLoop& loop) {
    validate_loop(loop);
    Rational chain = simulated_drop_impedance(loop).mul(hardware_admittance(loop)).mul(loop.amplifier.dynamics());
    if (loop.interface_algorithm.kind == InterfaceKind::feedback_filter) {
        const TransferBlock f = design_feedback_filter(loop.interface_algorithm.cutoff_hz);
        chain = chain.mul(f.rational());
    }
    const Poly num = poly_trim(chain.num);
    const Poly den = poly_trim(chain.den);
    if (poly_degree(num) > poly_degree(den))
        throw ConfigError(
            "open loop is improper for this element combination; give the amplifier a finite bandwidth");
    return TransferBlock(num, den, loop.total_delay_s(), "open-loop");
}

}  // namespace phil
