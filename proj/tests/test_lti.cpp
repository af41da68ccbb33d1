#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "phil/lti.hpp"
#include "phil/rng.hpp"

using namespace phil;
using std::numbers::pi;

TEST_CASE("evaluate: first-order low-pass at its corner") {
    const TransferBlock b({1.0}, {1.0, 1.0});
    const FrequencyPoint p = evaluate(b, 1.0);
    CHECK(p.magnitude == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(p.phase_rad == Catch::Approx(-pi / 4.0).epsilon(1e-12));
}

TEST_CASE("evaluate: unit gain with 1 ms delay reaches -pi at 500 Hz") {
    const TransferBlock b = TransferBlock::gain(1.0, 1e-3);
    const FrequencyPoint p = evaluate(b, 2.0 * pi * 500.0);
    CHECK(p.magnitude == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(p.phase_rad == Catch::Approx(-pi).epsilon(1e-12));
}

TEST_CASE("evaluate: (s+1)/(s+1) is the identity") {
    const TransferBlock b({1.0, 1.0}, {1.0, 1.0});
    for (double omega : {0.1, 1.0, 42.0, 1e4}) {
        const FrequencyPoint p = evaluate(b, omega);
        CHECK(p.magnitude == Catch::Approx(1.0).epsilon(1e-12));
        CHECK(p.phase_rad == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("evaluate: exact pole on the imaginary axis is reported") {
    const TransferBlock b({1.0}, {1.0, 0.0, 1.0});  // 1/(s^2+1), poles at +-j
    CHECK_THROWS_AS(evaluate(b, 1.0), PoleOnAxisError);
    CHECK_NOTHROW(evaluate(b, 1.0 + 1e-9));
}

TEST_CASE("evaluate: rejects nonpositive omega") {
    const TransferBlock b({1.0}, {1.0, 1.0});
    CHECK_THROWS_AS(evaluate(b, 0.0), ConfigError);
    CHECK_THROWS_AS(evaluate(b, -1.0), ConfigError);
}

TEST_CASE("TransferBlock: construction invariants") {
    CHECK_THROWS_AS(TransferBlock({1.0, 1.0}, {1.0}), ConfigError);    // improper
    CHECK_THROWS_AS(TransferBlock({1.0}, {0.0, 0.0}), ConfigError);   // zero denominator
    CHECK_THROWS_AS(TransferBlock({1.0}, {1.0}, -1e-3), ConfigError); // negative delay
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(TransferBlock({inf}, {1.0}), ConfigError);
    CHECK_THROWS_AS(TransferBlock({1.0}, {std::nan("")}), ConfigError);
    // Zero numerator is a valid (zero) block; trailing zeros do not make a block improper.
    CHECK_NOTHROW(TransferBlock({0.0}, {1.0, 1.0}));
    CHECK_NOTHROW(TransferBlock({1.0, 1.0, 0.0}, {1.0, 2.0}));
}

TEST_CASE("series: polynomial products and delay sums") {
    const TransferBlock lp({1.0}, {1.0, 1.0});
    const TransferBlock two = series({lp, lp});
    CHECK(two.numerator() == Poly{1.0});
    CHECK(two.denominator() == Poly{1.0, 2.0, 1.0});

    const TransferBlock g = series({TransferBlock::gain(2.0, 1e-3), TransferBlock::gain(3.0, 2e-3)});
    CHECK(g.numerator() == Poly{6.0});
    CHECK(g.denominator() == Poly{1.0});
    CHECK(g.delay_s() == Catch::Approx(3e-3).epsilon(1e-15));
}

TEST_CASE("series: evaluate of the product equals the product of evaluates") {
    SplitMix64 rng(0xA11CE5EEDULL);
    auto random_block = [&rng]() {
        // Random stable-ish proper block: (c0 + c1 s) / (d0 + d1 s + d2 s^2), positive den coeffs.
        const Poly num{rng.next_in(-3.0, 3.0), rng.next_in(-1.0, 1.0)};
        const Poly den{rng.next_in(0.5, 3.0), rng.next_in(0.1, 2.0), rng.next_in(0.05, 1.0)};
        return TransferBlock(num, den, rng.next_in(0.0, 5e-3));
    };
    const TransferBlock a = random_block();
    const TransferBlock b = random_block();
    const TransferBlock ab = series({a, b});
    for (int i = 0; i < 100; ++i) {
        const double omega = std::pow(10.0, rng.next_in(-2.0, 4.0));
        const std::complex<double> lhs = evaluate_complex(ab, omega);
        const std::complex<double> rhs = evaluate_complex(a, omega) * evaluate_complex(b, omega);
        CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("series: associative up to coefficient-wise relative tolerance") {
    const TransferBlock a({2.0, 0.5}, {1.0, 0.3, 0.1});
    const TransferBlock b({1.0}, {0.7, 1.1});
    const TransferBlock c({0.4, 0.2}, {1.0, 2.0, 0.25});
    const TransferBlock left = series({series({a, b}), c});
    const TransferBlock right = series({a, series({b, c})});
    REQUIRE(left.numerator().size() == right.numerator().size());
    REQUIRE(left.denominator().size() == right.denominator().size());
    for (std::size_t i = 0; i < left.numerator().size(); ++i)
        CHECK(std::abs(left.numerator()[i] - right.numerator()[i]) <=
              1e-12 * std::max(1.0, std::abs(right.numerator()[i])));
    for (std::size_t i = 0; i < left.denominator().size(); ++i)
        CHECK(std::abs(left.denominator()[i] - right.denominator()[i]) <=
              1e-12 * std::max(1.0, std::abs(right.denominator()[i])));
}

TEST_CASE("discretize: step response of 1/(s+1) hits the analytic value") {
    const double dt = 10e-6;
    DiscreteStepper st(TransferBlock({1.0}, {1.0, 1.0}), dt);
    double y = 0.0;
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / dt));
    for (std::size_t k = 0; k < steps; ++k) y = st.step(1.0);
    CHECK(y == Catch::Approx(1.0 - std::exp(-1.0)).margin(1e-4));
}

TEST_CASE("discretize: pure 1 ms delay at dt=100 us shifts exactly 10 samples") {
    const double dt = 100e-6;
    DiscreteStepper st(TransferBlock::pure_delay(1e-3), dt);
    CHECK(st.delay_samples() == 10);
    std::vector<double> in, out;
    SplitMix64 rng(7);
    for (int k = 0; k < 64; ++k) {
        in.push_back(rng.next_in(-1.0, 1.0));
        out.push_back(st.step(in.back()));
    }
    for (int k = 0; k < 10; ++k) CHECK(out[k] == 0.0);
    for (int k = 10; k < 64; ++k) CHECK(out[k] == in[k - 10]);  // bit-identical pass-through
}

TEST_CASE("discretize: DC gain of 5/(s+2) settles to 2.5") {
    const double dt = 1e-4;
    DiscreteStepper st(TransferBlock({5.0}, {2.0, 1.0}), dt);
    double y = 0.0;
    for (int k = 0; k < 200000; ++k) y = st.step(1.0);  // 20 s >> tau = 0.5 s
    CHECK(y == Catch::Approx(2.5).margin(1e-9));
}

TEST_CASE("discretize: non-integer delay/dt ratio is rejected naming both values") {
    try {
        DiscreteStepper st(TransferBlock::gain(1.0, 1.5e-4), 1e-4);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("0.00015") != std::string::npos);
        CHECK(msg.find("0.0001") != std::string::npos);
    }
    // Within the 1e-6 relative tolerance the ratio snaps to the nearest integer.
    CHECK(DiscreteStepper(TransferBlock::gain(1.0, 1e-3 * (1.0 + 5e-7)), 1e-4).delay_samples() == 10);
}

TEST_CASE("step: zero state and gain blocks") {
    DiscreteStepper zero(TransferBlock({1.0}, {1.0, 1.0}), 1e-3);
    CHECK(zero.step(0.0) == 0.0);
    DiscreteStepper g2(TransferBlock::gain(2.0), 1e-3);
    CHECK(g2.step(3.0) == 6.0);
}

TEST_CASE("step: rejects non-finite input") {
    DiscreteStepper st(TransferBlock({1.0}, {1.0, 1.0}), 1e-3);
    CHECK_THROWS_AS(st.step(std::numeric_limits<double>::quiet_NaN()), NumericError);
    CHECK_THROWS_AS(st.step(std::numeric_limits<double>::infinity()), NumericError);
}

TEST_CASE("step: cross-correlation locates a 1 ms delay") {
    const double dt = 1e-4;
    DiscreteStepper st(TransferBlock::gain(1.0, 1e-3), dt);
    std::vector<double> in(1000), out(1000);
    for (std::size_t k = 0; k < in.size(); ++k) {
        in[k] = std::sin(2.0 * pi * 50.0 * static_cast<double>(k) * dt);
        out[k] = st.step(in[k]);
    }
    std::size_t best_lag = 0;
    double best = -1e300;
    for (std::size_t lag = 0; lag <= 50; ++lag) {
        double acc = 0.0;
        for (std::size_t k = 100; k < out.size(); ++k) acc += out[k] * in[k - lag];
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    CHECK(best_lag == 10);
    CHECK(static_cast<double>(best_lag) * dt == Catch::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("frequency/time consistency: steady-state sine matches evaluate") {
    struct Case {
        TransferBlock block;
        double f_hz;
        double settle_s;
    };
    const std::vector<Case> cases = {
        {TransferBlock({5.0}, {2.0, 1.0}), 5.0, 6.0},                    // tau 0.5 s
        {TransferBlock({1.0}, {1.0, 1.0}, 2e-3), 20.0, 12.0},            // tau 1 s + delay
        {TransferBlock({3.0, 1.0}, {8.0, 4.0, 1.0}), 80.0, 1.0},         // poles -2 +- 2j
        {TransferBlock::gain(0.7, 2e-3), 80.0, 0.5},
    };
    for (const Case& c : cases) {
        const double period = 1.0 / c.f_hz;
        const double dt = period / 200.0;  // 200 samples per period
        const double omega = 2.0 * pi * c.f_hz;
        DiscreteStepper st(c.block, dt);
        const auto settle = static_cast<std::size_t>(std::ceil(c.settle_s / period)) * 200;
        const std::size_t measure = 200 * 4;
        std::vector<double> in(settle + measure), out(settle + measure);
        for (std::size_t k = 0; k < in.size(); ++k) {
            in[k] = std::sin(omega * static_cast<double>(k) * dt);
            out[k] = st.step(in[k]);
        }
        const oracle::BinRatio meas = oracle::bin_ratio(out, in, omega, dt, settle, measure);
        const FrequencyPoint want = evaluate(c.block, omega);
        INFO("block " << c.block.numerator().size() << "/" << c.block.denominator().size() << " at "
                      << c.f_hz << " Hz");
        CHECK(meas.magnitude == Catch::Approx(want.magnitude).epsilon(0.01));
        CHECK(std::abs(oracle::wrap_pm_pi(meas.phase_rad - want.phase_rad)) < 0.5 * pi / 180.0);
    }
}

TEST_CASE("delay composition: one combined ring equals chained rings") {
    const double dt = 1e-4;
    const TransferBlock d1 = TransferBlock::pure_delay(7e-4);
    const TransferBlock d2 = TransferBlock::pure_delay(1.3e-3);
    DiscreteStepper combined(series({d1, d2}), dt);
    DiscreteStepper first(d1, dt), second(d2, dt);
    CHECK(combined.delay_samples() == first.delay_samples() + second.delay_samples());
    SplitMix64 rng(99);
    for (int k = 0; k < 200; ++k) {
        const double u = rng.next_in(-2.0, 2.0);
        CHECK(combined.step(u) == second.step(first.step(u)));  // bit-identical
    }
}

TEST_CASE("stepper determinism: same inputs, bit-identical outputs") {
    const TransferBlock b({3.0, 1.0}, {8.0, 4.0, 1.0}, 5e-4);
    DiscreteStepper s1(b, 1e-4), s2(b, 1e-4);
    SplitMix64 rng(0xDEADBEEF);
    for (int k = 0; k < 500; ++k) {
        const double u = rng.next_in(-10.0, 10.0);
        CHECK(s1.step(u) == s2.step(u));
    }
}

TEST_CASE("tolerant rational path: improper series-RL impedance differentiates") {
    // v = R*i + L*di/dt; drive i = sin(w t) and expect |Z| and +atan(wL/R).
    const double r = 2.0, l = 5e-3;
    const Rational z{{r, l}, {1.0}};
    const double f = 50.0, omega = 2.0 * pi * f, dt = 1e-5;
    DiscreteStepper st(z, dt);
    const std::size_t period = 2000, settle = 3 * period, measure = 4 * period;
    std::vector<double> in(settle + measure), out(settle + measure);
    for (std::size_t k = 0; k < in.size(); ++k) {
        in[k] = std::sin(omega * static_cast<double>(k) * dt);
        out[k] = st.step(in[k]);
    }
    const oracle::BinRatio meas = oracle::bin_ratio(out, in, omega, dt, settle, measure);
    CHECK(meas.magnitude == Catch::Approx(std::hypot(r, omega * l)).epsilon(0.01));
    CHECK(std::abs(meas.phase_rad - std::atan2(omega * l, r)) < 0.5 * pi / 180.0);
}

TEST_CASE("unwrap: nearest-2pi continuation recovers a smooth ramp") {
    std::vector<double> truth, wrapped;
    for (int i = 0; i < 400; ++i) {
        const double p = 0.3 - 0.07 * static_cast<double>(i);  // descends through many wraps
        truth.push_back(p);
        wrapped.push_back(oracle::wrap_pm_pi(p));
    }
    const std::vector<double> un = unwrap_phases(wrapped);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK(un[i] == Catch::Approx(truth[i]).margin(1e-9));
}
