#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phil/errors.hpp"

namespace phil {

/// Real polynomial, ascending powers of the Laplace variable.
using Poly = std::vector<double>;

inline Poly poly_trim(Poly p) {
    while (p.size() > 1 && p.back() == 0.0) p.pop_back();
    if (p.empty()) p.push_back(0.0);
    return p;
}

inline std::size_t poly_degree(const Poly& p) {
    std::size_t d = p.size();
    while (d > 1 && p[d - 1] == 0.0) --d;
    return d - 1;
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

inline Poly poly_add(const Poly& a, const Poly& b) {
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

inline Poly poly_scale(Poly p, double k) {
    for (double& c : p) c *= k;
    return p;
}

template <typename Scalar>
Scalar poly_eval(const Poly& p, Scalar x) {
    Scalar acc{};
    for (std::size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
    return acc;
}

/// Unconstrained rational function in s. Circuit impedances/admittances are
/// assembled as Rationals (a series RL impedance is improper on its own); the
/// proper-block invariant is enforced only on TransferBlock.
struct Rational {
    Poly num{1.0};
    Poly den{1.0};

    Rational mul(const Rational& o) const { return {poly_mul(num, o.num), poly_mul(den, o.den)}; }
    Rational reciprocal() const { return {den, num}; }
};

/// Proper rational LTI block with an optional pure transport delay.
class TransferBlock {
public:
    TransferBlock(Poly numerator, Poly denominator, double delay_s = 0.0, std::string label = {})
        : num_(poly_trim(std::move(numerator))),
          den_(poly_trim(std::move(denominator))),
          delay_s_(delay_s),
          label_(std::move(label)) {
        for (double c : num_)
            if (!std::isfinite(c)) throw ConfigError("TransferBlock: non-finite numerator coefficient");
        bool any_nonzero = false;
        for (double c : den_) {
            if (!std::isfinite(c)) throw ConfigError("TransferBlock: non-finite denominator coefficient");
            if (c != 0.0) any_nonzero = true;
        }
        if (!any_nonzero) throw ConfigError("TransferBlock: denominator has no nonzero coefficient");
        if (poly_degree(num_) > poly_degree(den_))
            throw ConfigError("TransferBlock: numerator degree exceeds denominator degree (block must be proper)");
        if (!(delay_s_ >= 0.0) || !std::isfinite(delay_s_))
            throw ConfigError("TransferBlock: delay must be finite and nonnegative");
    }

    static TransferBlock gain(double k, double delay_s = 0.0, std::string label = {}) {
        return TransferBlock({k}, {1.0}, delay_s, std::move(label));
    }

    /// First-order low-pass 1/(1 + s/(2*pi*cutoff_hz)).
    static TransferBlock lowpass(double cutoff_hz, std::string label = {}) {
        if (!(cutoff_hz > 0.0)) throw ConfigError("lowpass: cutoff must be positive");
        return TransferBlock({1.0}, {1.0, 1.0 / (2.0 * std::numbers::pi * cutoff_hz)}, 0.0, std::move(label));
    }

    static TransferBlock pure_delay(double delay_s, std::string label = {}) {
        return TransferBlock({1.0}, {1.0}, delay_s, std::move(label));
    }

    const Poly& numerator() const { return num_; }
    const Poly& denominator() const { return den_; }
    double delay_s() const { return delay_s_; }
    const std::string& label() const { return label_; }
    Rational rational() const { return {num_, den_}; }

    bool same_coefficients(const TransferBlock& o) const {
        return num_ == o.num_ && den_ == o.den_ && delay_s_ == o.delay_s_;
    }

private:
    Poly num_;
    Poly den_;
    double delay_s_;
    std::string label_;
};

/// One row of a frequency sweep. Within a sweep omega is strictly increasing
/// and the phase is unwrapped along the sweep.
struct FrequencyPoint {
    double omega_rad_s = 0.0;
    double magnitude = 0.0;
    double phase_rad = 0.0;
};

/// Rational part N(jw)/D(jw); throws PoleOnAxisError if D(jw) is exactly zero.
inline std::complex<double> evaluate_rational(const Poly& num, const Poly& den, double omega) {
    const std::complex<double> jw(0.0, omega);
    const std::complex<double> d = poly_eval(den, jw);
    if (d.real() == 0.0 && d.imag() == 0.0)
        throw PoleOnAxisError("pole on imaginary axis at omega = " + std::to_string(omega));
    return poly_eval(num, jw) / d;
}

/// Full response N(jw)/D(jw) * exp(-j*w*delay).
inline std::complex<double> evaluate_complex(const TransferBlock& b, double omega) {
    const std::complex<double> r = evaluate_rational(b.numerator(), b.denominator(), omega);
    return r * std::polar(1.0, -omega * b.delay_s());
}

/// Magnitude/phase response at one frequency; the phase carries the causal
/// delay term -omega*delay without wrapping.
inline FrequencyPoint evaluate(const TransferBlock& b, double omega) {
    if (!(omega > 0.0)) throw ConfigError("evaluate: omega must be positive");
    const std::complex<double> r = evaluate_rational(b.numerator(), b.denominator(), omega);
    return {omega, std::abs(r), std::arg(r) - omega * b.delay_s()};
}

/// Product chain: polynomial products, delays add.
inline TransferBlock series(std::span<const TransferBlock> blocks) {
    if (blocks.empty()) throw ConfigError("series: empty block list");
    Poly num = blocks[0].numerator();
    Poly den = blocks[0].denominator();
    double delay = blocks[0].delay_s();
    std::string label = blocks[0].label();
    for (std::size_t i = 1; i < blocks.size(); ++i) {
        num = poly_mul(num, blocks[i].numerator());
        den = poly_mul(den, blocks[i].denominator());
        delay += blocks[i].delay_s();
        if (!blocks[i].label().empty()) label = label.empty() ? blocks[i].label() : label + "*" + blocks[i].label();
    }
    return TransferBlock(std::move(num), std::move(den), delay, std::move(label));
}

inline TransferBlock series(std::initializer_list<TransferBlock> blocks) {
    return series(std::span<const TransferBlock>(blocks.begin(), blocks.size()));
}

/// Integer-sample delay rule: delay/dt must be an integer to 1e-6 relative.
inline std::size_t delay_to_samples(double delay_s, double dt_s) {
    if (!(dt_s > 0.0)) throw ConfigError("delay_to_samples: dt must be positive");
    if (delay_s < 0.0) throw ConfigError("delay_to_samples: delay must be nonnegative");
    const double ratio = delay_s / dt_s;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-6 * std::max(1.0, std::abs(ratio)))
        throw ConfigError("delay " + std::to_string(delay_s) + " s is not an integer multiple of dt " +
                          std::to_string(dt_s) + " s");
    return static_cast<std::size_t>(rounded);
}

/// Fixed-length sample delay line. Length zero passes through.
class DelayLine {
public:
    explicit DelayLine(std::size_t length) : buf_(length, 0.0) {}

    double shift(double x) {
        if (buf_.empty()) return x;
        const double out = buf_[head_];
        buf_[head_] = x;
        head_ = (head_ + 1) % buf_.size();
        return out;
    }

    std::size_t length() const { return buf_.size(); }

private:
    std::vector<double> buf_;
    std::size_t head_ = 0;
};

/// Fixed-step simulator for a rational block plus integer-sample delay.
/// The rational part is mapped with the trapezoidal (bilinear) rule, which
/// preserves stability and the DC gain; the delay is realized exactly as a
/// ring buffer of past outputs.
class DiscreteStepper {
public:
    DiscreteStepper(const TransferBlock& block, double dt_s)
        : DiscreteStepper(block.rational(), dt_s, block.delay_s()) {}

    /// Tolerant path for circuit assembly: accepts improper rationals
    /// (e.g. a series-RL impedance acting as a discrete differentiator).
    DiscreteStepper(const Rational& r, double dt_s, double delay_s = 0.0)
        : dt_(dt_s), ring_(delay_to_samples(delay_s, dt_s)) {
        if (!(dt_s > 0.0)) throw ConfigError("DiscreteStepper: dt must be positive");
        const Poly num = poly_trim(r.num);
        const Poly den = poly_trim(r.den);
        const std::size_t n = std::max(poly_degree(num), poly_degree(den));
        const double k = 2.0 / dt_s;

        // (z-1)^i (z+1)^(n-i) scaled by k^i, ascending in z.
        Poly nz(n + 1, 0.0), dz(n + 1, 0.0);
        double kpow = 1.0;
        for (std::size_t i = 0; i <= n; ++i) {
            Poly basis{1.0};
            for (std::size_t m = 0; m < i; ++m) basis = poly_mul(basis, {-1.0, 1.0});
            for (std::size_t m = 0; m < n - i; ++m) basis = poly_mul(basis, {1.0, 1.0});
            const double a = i < num.size() ? num[i] * kpow : 0.0;
            const double b = i < den.size() ? den[i] * kpow : 0.0;
            for (std::size_t m = 0; m <= n; ++m) {
                nz[m] += a * basis[m];
                dz[m] += b * basis[m];
            }
            kpow *= k;
        }

        double scale = 0.0;
        for (double c : dz) scale = std::max(scale, std::abs(c));
        if (!(std::abs(dz[n]) > scale * 1e-300))
            throw NumericError("DiscreteStepper: discretized denominator is singular at this dt");

        // y[t] = sum(b_in[i]*u[t-i]) - sum(a_out[i]*y[t-i]), i = 0..n (a_out[0] unused)
        b_in_.resize(n + 1);
        a_out_.resize(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            b_in_[i] = nz[n - i] / dz[n];
            a_out_[i] = dz[n - i] / dz[n];
        }
        u_hist_.assign(n + 1, 0.0);
        y_hist_.assign(n + 1, 0.0);
    }

    /// Advance one sample. Deterministic given state and input.
    double step(double input) {
        if (!std::isfinite(input)) throw NumericError("DiscreteStepper: non-finite input rejected");
        const std::size_t n = b_in_.size() - 1;
        for (std::size_t i = n; i > 0; --i) {
            u_hist_[i] = u_hist_[i - 1];
            y_hist_[i] = y_hist_[i - 1];
        }
        u_hist_[0] = input;
        double y = 0.0;
        for (std::size_t i = 0; i <= n; ++i) y += b_in_[i] * u_hist_[i];
        for (std::size_t i = 1; i <= n; ++i) y -= a_out_[i] * y_hist_[i];
        y_hist_[0] = y;
        return ring_.shift(y);
    }

    double dt_s() const { return dt_; }
    std::size_t delay_samples() const { return ring_.length(); }

private:
    double dt_;
    std::vector<double> b_in_;
    std::vector<double> a_out_;
    std::vector<double> u_hist_;
    std::vector<double> y_hist_;
    DelayLine ring_;
};

inline DiscreteStepper discretize(const TransferBlock& block, double dt_s) {
    return DiscreteStepper(block, dt_s);
}

/// Nearest-multiple-of-2*pi continuation from the previous point.
inline std::vector<double> unwrap_phases(const std::vector<double>& principal) {
    std::vector<double> out(principal.size());
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < principal.size(); ++i) {
        if (i == 0) {
            out[0] = principal[0];
        } else {
            out[i] = principal[i] + two_pi * std::round((out[i - 1] - principal[i]) / two_pi);
        }
    }
    return out;
}

}  // namespace phil
