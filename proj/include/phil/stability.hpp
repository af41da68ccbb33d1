#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "phil/errors.hpp"
#include "phil/loop.hpp"
#include "phil/lti.hpp"

namespace phil {

/// Safety margin on the magnitude condition: the loop must stay below
/// 1/(1+epsilon) where plain Bode would allow anything below 1.
struct UncertaintyMargin {
    double epsilon = 0.0;

    double threshold() const {
        if (epsilon < 0.0 || !std::isfinite(epsilon))
            throw ConfigError("uncertainty margin: epsilon must be finite and nonnegative");
        return 1.0 / (1.0 + epsilon);
    }
};

enum class Classification { stable, marginal, unstable };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::stable: return "stable";
        case Classification::marginal: return "marginal";
        case Classification::unstable: return "unstable";
    }
    return "?";
}

/// Verdicts within this distance of the threshold are marginal: close enough
/// that discretization noise, not physics, would pick the side.
inline constexpr double marginal_band = 0.02;

struct StabilityVerdict {
    Classification classification = Classification::stable;
    std::vector<double> phase_crossovers;  // omega where the total phase hits -pi (mod 2*pi)
    double worst_magnitude_at_crossover = 0.0;
    double gain_margin_db = 0.0;
    double epsilon_used = 0.0;
};

inline std::vector<double> log_grid(double omega_lo, double omega_hi, int points_per_decade = 500) {
    if (!(omega_lo > 0.0) || !(omega_hi > omega_lo)) throw ConfigError("log_grid: need 0 < omega_lo < omega_hi");
    if (points_per_decade < 2) throw ConfigError("log_grid: need at least 2 points per decade");
    const double lo = std::log10(omega_lo);
    const double hi = std::log10(omega_hi);
    const auto n = static_cast<std::size_t>(std::ceil((hi - lo) * points_per_decade)) + 1;
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i)
        grid[i] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    grid.front() = omega_lo;
    grid.back() = omega_hi;
    return grid;
}

/// Swept response of an assembled open-loop block: magnitude of the rational
/// chain (the delay contributes none) and phase unwrapped along the grid with
/// the exact -omega*T_d delay term added analytically.
inline std::vector<FrequencyPoint> open_loop_response(const TransferBlock& open_loop,
                                                      const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("open_loop_response: empty grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw ConfigError("open_loop_response: grid must be strictly increasing");
    std::vector<double> principal(grid.size());
    std::vector<FrequencyPoint> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::complex<double> r = evaluate_rational(open_loop.numerator(), open_loop.denominator(), grid[i]);
        if (!std::isfinite(r.real()) || !std::isfinite(r.imag()))
            throw NumericError("open_loop_response: non-finite response at omega = " + std::to_string(grid[i]));
        out[i].omega_rad_s = grid[i];
        out[i].magnitude = std::abs(r);
        principal[i] = std::arg(r);
    }
    const std::vector<double> unwrapped = unwrap_phases(principal);
    for (std::size_t i = 0; i < grid.size(); ++i)
        out[i].phase_rad = unwrapped[i] - grid[i] * open_loop.delay_s();
    return out;
}

inline std::vector<FrequencyPoint> open_loop_response(const PhilLoop& loop, const std::vector<double>& grid) {
    return open_loop_response(open_loop_block(loop), grid);
}

namespace detail {

/// Crude upper bound on the magnitude of any root of p (Cauchy bound).
inline double cauchy_root_bound(const Poly& p) {
    const std::size_t d = poly_degree(p);
    if (d == 0) return 0.0;
    double bound = 0.0;
    for (std::size_t i = 0; i < d; ++i) bound = std::max(bound, std::abs(p[i] / p[d]));
    return 1.0 + bound;
}

/// Rational-part phase continued from a reference point, valid when the true
/// phase moves less than pi between the reference and omega (grid intervals
/// at 500 points/decade are far finer than that).
inline double phase_continued(const TransferBlock& b, double omega, double ref_omega, double ref_phase) {
    const std::complex<double> r = evaluate_rational(b.numerator(), b.denominator(), omega);
    const double raw = std::arg(r);
    const std::complex<double> ref = evaluate_rational(b.numerator(), b.denominator(), ref_omega);
    const double delta = raw - std::arg(ref);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return ref_phase + delta - two_pi * std::round(delta / two_pi);
}

}  // namespace detail

/// The frequency grid a classification sweeps: 0.1 Hz up past both the delay
/// wrap region and every rational-chain root, at 500 points per decade.
inline std::vector<double> classification_grid(const TransferBlock& open_loop) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double t_d = open_loop.delay_s();
    double omega_hi = two_pi * 1e3;
    if (t_d > 0.0) omega_hi = std::max(omega_hi, two_pi * 10.0 / t_d);
    omega_hi = std::max({omega_hi, 10.0 * detail::cauchy_root_bound(open_loop.numerator()),
                         10.0 * detail::cauchy_root_bound(open_loop.denominator())});
    return log_grid(two_pi * 0.1, omega_hi);
}

/// Bode-style classification of the assembled open loop: find every frequency
/// where the total phase (rational part plus the analytic -omega*T_d term)
/// crosses -pi modulo 2*pi, take the worst rational-chain magnitude there, and
/// compare it against 1/(1+epsilon) with the marginal band in between.
inline StabilityVerdict classify(const TransferBlock& open_loop, const UncertaintyMargin& margin) {
    const double threshold = margin.threshold();
    const double t_d = open_loop.delay_s();
    constexpr double two_pi = 2.0 * std::numbers::pi;

    const std::vector<double> grid = classification_grid(open_loop);
    const std::vector<FrequencyPoint> resp = open_loop_response(open_loop, grid);

    StabilityVerdict verdict;
    verdict.epsilon_used = margin.epsilon;

    double worst_dense = 0.0;
    for (std::size_t i = 0; i + 1 < resp.size(); ++i) {
        const double p0 = resp[i].phase_rad;
        const double p1 = resp[i + 1].phase_rad;
        const double lo = std::min(p0, p1);
        const double hi = std::max(p0, p1);
        // Every level -pi + 2*pi*m inside [lo, hi] is a crossing of this interval.
        const auto m_lo = static_cast<long long>(std::ceil((lo + std::numbers::pi) / two_pi));
        const auto m_hi = static_cast<long long>(std::floor((hi + std::numbers::pi) / two_pi));
        if (m_hi - m_lo >= 8) {
            // Delay-dominated tail: the phase wraps many times inside one grid
            // interval, so a crossing exists within every 2*pi of it while the
            // rational magnitude barely moves across the interval. Sample the
            // magnitude envelope instead of refining each wrap.
            worst_dense = std::max({worst_dense, resp[i].magnitude, resp[i + 1].magnitude});
            continue;
        }
        for (long long m = m_lo; m <= m_hi; ++m) {
            const double level = -std::numbers::pi + two_pi * static_cast<double>(m);
            // Bisection on the continued phase, anchored at the left grid point.
            double a = resp[i].omega_rad_s, b = resp[i + 1].omega_rad_s;
            const double ref_omega = a;
            const double ref_phase = p0;  // rational + delay at a
            auto phase_at = [&](double w) {
                return detail::phase_continued(open_loop, w, ref_omega, ref_phase + ref_omega * t_d) - w * t_d;
            };
            double fa = p0 - level;
            double fb = p1 - level;
            if (fa == 0.0) {
                b = a;
            } else if (fb == 0.0) {
                a = b;
            } else if (fa * fb > 0.0) {
                continue;  // level only grazed at the boundary of the enclosing interval
            }
            while ((b - a) > 1e-6 * a) {
                const double mid = 0.5 * (a + b);
                const double fm = phase_at(mid) - level;
                if (fm == 0.0) {
                    a = b = mid;
                } else if (fa * fm < 0.0) {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            const double w = 0.5 * (a + b);
            if (verdict.phase_crossovers.empty() ||
                std::abs(w - verdict.phase_crossovers.back()) > 1e-9 * w)
                verdict.phase_crossovers.push_back(w);
        }
    }

    if (verdict.phase_crossovers.empty() && worst_dense == 0.0) {
        // No phase condition in range: judge by the worst magnitude anywhere.
        double worst = 0.0;
        for (const FrequencyPoint& p : resp) worst = std::max(worst, p.magnitude);
        verdict.worst_magnitude_at_crossover = worst;
    } else {
        double worst = worst_dense;
        for (double w : verdict.phase_crossovers) {
            const std::complex<double> r =
                evaluate_rational(open_loop.numerator(), open_loop.denominator(), w);
            worst = std::max(worst, std::abs(r));
        }
        verdict.worst_magnitude_at_crossover = worst;
    }

    const double worst = verdict.worst_magnitude_at_crossover;
    if (worst > threshold + marginal_band)
        verdict.classification = Classification::unstable;
    else if (worst < threshold - marginal_band)
        verdict.classification = Classification::stable;
    else
        verdict.classification = Classification::marginal;
    verdict.gain_margin_db = 20.0 * std::log10(threshold / worst);
    return verdict;
}

inline StabilityVerdict classify(const PhilLoop& loop, const UncertaintyMargin& margin) {
    return classify(open_loop_block(loop), margin);
}

/// One cell of a ratio x delay sweep. A cell that failed to classify carries
/// its error text instead of a verdict; the sweep always completes.
struct MapCell {
    double ratio = 0.0;
    double delay_s = 0.0;
    std::optional<StabilityVerdict> verdict;
    std::string error;
};

struct StabilityMap {
    std::vector<double> ratios;
    std::vector<double> delays_s;
    std::vector<MapCell> cells;  // row-major: one row per ratio, one column per delay

    const MapCell& at(std::size_t ratio_idx, std::size_t delay_idx) const {
        return cells[ratio_idx * delays_s.size() + delay_idx];
    }
};

inline void check_sweep_template(const PhilLoop& base) {
    if (base.simulated_side.source_impedance.kind != ImpedanceKind::resistive ||
        base.hut.kind != ImpedanceKind::resistive)
        throw ConfigError("stability_map: ratio sweeps need resistive source and hardware elements");
}

/// Classify one sweep cell: R_s = ratio * R_hut, all loop delay assigned to
/// the amplifier. Never throws - a failed classification lands in its error
/// field - so callers may run cells in any order (or in parallel).
inline MapCell evaluate_map_cell(const PhilLoop& base, double ratio, double delay_s,
                                 const UncertaintyMargin& margin) {
    MapCell cell;
    cell.ratio = ratio;
    cell.delay_s = delay_s;
    try {
        PhilLoop loop = base;
        loop.simulated_side.source_impedance = Impedance::resistive(ratio * base.hut.resistance_ohm);
        loop.amplifier.delay_s = delay_s;
        loop.sensor_delay_s = 0.0;
        cell.verdict = classify(loop, margin);
    } catch (const std::exception& e) {
        cell.error = e.what();
    }
    return cell;
}

/// Sweep the template loop over R_s/R_hut ratios and total delays. The
/// template must use resistive source and hardware elements (the ratio axis
/// is otherwise ill-defined).
inline StabilityMap stability_map(const PhilLoop& base, const std::vector<double>& ratios,
                                  const std::vector<double>& delays_s, const UncertaintyMargin& margin) {
    if (ratios.empty() || delays_s.empty()) throw ConfigError("stability_map: sweep grids must be nonempty");
    check_sweep_template(base);
    StabilityMap map;
    map.ratios = ratios;
    map.delays_s = delays_s;
    map.cells.reserve(ratios.size() * delays_s.size());
    for (double ratio : ratios)
        for (double delay : delays_s) map.cells.push_back(evaluate_map_cell(base, ratio, delay, margin));
    return map;
}

}  // namespace phil
