#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "phil/errors.hpp"
#include "phil/lti.hpp"

namespace phil {

/// Per-harmonic phase advance: each declared harmonic of the command signal is
/// rotated forward by the phase the loop delay would otherwise subtract.
struct PhaseAdvanceEntry {
    int order = 1;            // harmonic order h (frequency = h * fundamental)
    double advance_rad = 0.0; // reduced to [0, 2*pi)

    friend bool operator==(const PhaseAdvanceEntry&, const PhaseAdvanceEntry&) = default;
};

struct PhaseAdvancePlan {
    double fundamental_hz = 0.0;
    std::vector<PhaseAdvanceEntry> entries;

    friend bool operator==(const PhaseAdvancePlan&, const PhaseAdvancePlan&) = default;
};

/// advance per harmonic = 2*pi*h*f0*total_delay, reduced mod 2*pi.
inline PhaseAdvancePlan design_phase_advance(double f0_hz, const std::vector<int>& harmonics,
                                             double total_delay_s) {
    if (!(f0_hz > 0.0)) throw ConfigError("design_phase_advance: fundamental must be positive");
    if (total_delay_s < 0.0) throw ConfigError("design_phase_advance: total delay must be nonnegative");
    if (harmonics.empty()) throw ConfigError("design_phase_advance: empty harmonic set");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    PhaseAdvancePlan plan;
    plan.fundamental_hz = f0_hz;
    for (int h : harmonics) {
        if (h <= 0) throw ConfigError("design_phase_advance: harmonic orders must be positive");
        double adv = std::fmod(two_pi * h * f0_hz * total_delay_s, two_pi);
        if (adv < 0.0) adv += two_pi;
        plan.entries.push_back({h, adv});
    }
    return plan;
}

/// First-order low-pass for the current-feedback path.
inline TransferBlock design_feedback_filter(double cutoff_hz) {
    return TransferBlock::lowpass(cutoff_hz, "feedback-filter");
}

/// Feedback predictor: order 0 holds the last sample, order 1 projects the
/// last two samples forward by the horizon.
struct Extrapolator {
    int order = 0;        // 0 = hold, 1 = linear
    double horizon_s = 0; // prediction span; set to the total loop delay

    friend bool operator==(const Extrapolator&, const Extrapolator&) = default;
};

class ExtrapolatorState {
public:
    ExtrapolatorState(const Extrapolator& config, double dt_s) : config_(config), dt_(dt_s) {
        if (config.order < 0 || config.order > 1)
            throw ConfigError("extrapolator: only orders 0 and 1 are supported");
        if (!(dt_s > 0.0)) throw ConfigError("extrapolator: dt must be positive");
        if (config.horizon_s < 0.0) throw ConfigError("extrapolator: horizon must be nonnegative");
    }

    double step(double x) {
        const double out = config_.order == 0 ? x : x + (x - prev_) / dt_ * config_.horizon_s;
        prev_ = x;
        return out;
    }

private:
    Extrapolator config_;
    double dt_;
    double prev_ = 0.0;
};

/// Sliding one-period Fourier projection of the command signal, one bin per
/// declared harmonic; the output re-synthesizes each declared harmonic with
/// its phase advanced while everything else (DC, inter-harmonics, transients)
/// passes through untouched. Pass-through until the first window fills.
class HarmonicRotator {
public:
    HarmonicRotator(const PhaseAdvancePlan& plan, double dt_s) : dt_(dt_s) {
        if (!(plan.fundamental_hz > 0.0)) throw ConfigError("HarmonicRotator: fundamental must be positive");
        const double period = 1.0 / plan.fundamental_hz;
        n_ = delay_to_samples(period, dt_s);  // window must hold one exact fundamental period
        if (n_ < 4) throw ConfigError("HarmonicRotator: fewer than 4 samples per fundamental period");
        window_.assign(n_, 0.0);
        for (const PhaseAdvanceEntry& e : plan.entries) {
            Bin b;
            b.omega = 2.0 * std::numbers::pi * plan.fundamental_hz * e.order;
            b.rot_minus_one = std::polar(1.0, e.advance_rad) - std::complex<double>(1.0, 0.0);
            bins_.push_back(b);
        }
    }

    double step(double x) {
        const std::size_t slot = k_ % n_;
        const double t_new = static_cast<double>(k_) * dt_;
        const double t_old = static_cast<double>(k_ - n_) * dt_;
        const double x_old = window_[slot];
        for (Bin& b : bins_) {
            b.acc += x * std::polar(1.0, -b.omega * t_new);
            if (k_ >= n_) b.acc -= x_old * std::polar(1.0, -b.omega * t_old);
        }
        window_[slot] = x;
        ++k_;

        // Rebuild the running sums from the stored window once per period so
        // the sliding update cannot accumulate drift over long runs.
        if (k_ % n_ == 0 && k_ >= 2 * n_) rebuild();

        if (k_ < n_) return x;  // window not yet representative
        double out = x;
        for (const Bin& b : bins_) {
            const std::complex<double> phasor = b.acc * (2.0 / static_cast<double>(n_));
            out += (phasor * b.rot_minus_one * std::polar(1.0, b.omega * t_new)).real();
        }
        return out;
    }

private:
    struct Bin {
        double omega = 0.0;
        std::complex<double> rot_minus_one;
        std::complex<double> acc{0.0, 0.0};
    };

    void rebuild() {
        for (Bin& b : bins_) {
            std::complex<double> acc{0.0, 0.0};
            for (std::size_t m = k_ - n_; m < k_; ++m) {
                const double t = static_cast<double>(m) * dt_;
                acc += window_[m % n_] * std::polar(1.0, -b.omega * t);
            }
            b.acc = acc;
        }
    }

    double dt_;
    std::size_t n_ = 0;
    std::size_t k_ = 0;
    std::vector<double> window_;
    std::vector<Bin> bins_;
};

}  // namespace phil
