#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracle.hpp"
#include "phil/loop.hpp"
#include "phil/rng.hpp"
#include "phil/simulate.hpp"

using namespace phil;
using std::numbers::pi;

namespace {

PhilLoop resistive_loop(double r_s, double r_hut, double amp_delay_s, double f0 = 50.0,
                        double amplitude = 10.0) {
    PhilLoop loop;
    loop.simulated_side.source.f0_hz = f0;
    loop.simulated_side.source.harmonics = {{1, amplitude, 0.0}};
    loop.simulated_side.source_impedance = Impedance::resistive(r_s);
    loop.hut = Impedance::resistive(r_hut);
    loop.amplifier.gain = 1.0;
    loop.amplifier.delay_s = amp_delay_s;
    loop.interface_algorithm = InterfaceAlgorithm::itm();
    return loop;
}

}  // namespace

TEST_CASE("open loop: resistive divider gives flat magnitude R_s/R_hut") {
    const PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    const TransferBlock l = open_loop_block(loop);
    for (double omega : {1.0, 100.0, 1e4, 1e6})
        CHECK(evaluate(l, omega).magnitude == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(l.delay_s() == Catch::Approx(1e-3).epsilon(1e-15));
}

TEST_CASE("open loop: feedback filter attenuates per first-order roll-off") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    loop.interface_algorithm = InterfaceAlgorithm::filter(100.0);
    const TransferBlock l = open_loop_block(loop);
    const double mag = evaluate(l, 2.0 * pi * 1000.0).magnitude;
    CHECK(mag == Catch::Approx(0.5 / std::sqrt(1.0 + 100.0)).epsilon(1e-9));
}

TEST_CASE("open loop: shifting impedance moves the divider ratio") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    loop.interface_algorithm = InterfaceAlgorithm::shifting(0.5);
    const TransferBlock l = open_loop_block(loop);
    // Resistive elements: flat response, so any omega reads the DC value.
    CHECK(evaluate(l, 1.0).magnitude == Catch::Approx((1.0 - 0.5) / (2.0 + 0.5)).epsilon(1e-12));
}

TEST_CASE("open loop: improper element combination is rejected with a pointer at the fix") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    loop.simulated_side.source_impedance = Impedance::series_rl(1.0, 1e-3);
    CHECK_THROWS_AS(open_loop_block(loop), ConfigError);  // ideal amp: chain is improper
    loop.amplifier.bandwidth_hz = 5e3;
    CHECK_NOTHROW(open_loop_block(loop));  // finite bandwidth restores properness
}

TEST_CASE("loop validation: missing interface parameters are refused") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    loop.interface_algorithm.kind = InterfaceKind::feedback_filter;  // cutoff left unset
    CHECK_THROWS_AS(validate_loop(loop), ConfigError);
}

TEST_CASE("run: ratio 0.5 settles to a bounded steady state") {
    const PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    const double dt = 1e-4;
    const Trace tr = run_time_domain(loop, dt, 1.0);
    REQUIRE_FALSE(tr.diverged);
    REQUIRE(tr.size() == 10000);
    // Steady state: two late windows carry the same energy.
    const double a = oracle::rms(tr.v_coupling, 6000, 2000);
    const double b = oracle::rms(tr.v_coupling, 8000, 2000);
    CHECK(a == Catch::Approx(b).epsilon(0.01));
    CHECK(a > 1.0);  // signal actually present
}

TEST_CASE("run: ratio 2.0 is flagged diverged and stops early") {
    const PhilLoop loop = resistive_loop(2.0, 1.0, 1e-3);
    const Trace tr = run_time_domain(loop, 1e-4, 1.0);
    CHECK(tr.diverged);
    CHECK(tr.size() < 10000);  // early stop
    for (double v : tr.v_coupling) CHECK(std::isfinite(v));
}

TEST_CASE("run: zero source amplitude yields an all-zero trace") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    loop.simulated_side.source.harmonics = {{1, 0.0, 0.0}};
    const Trace tr = run_time_domain(loop, 1e-4, 0.1);
    CHECK_FALSE(tr.diverged);
    for (double v : tr.v_coupling) CHECK(v == 0.0);
    for (double v : tr.i_feedback) CHECK(v == 0.0);
    for (double v : tr.v_command) CHECK(v == 0.0);
}

TEST_CASE("run: zero total delay is reference-only and rejected") {
    const PhilLoop loop = resistive_loop(1.0, 2.0, 0.0);
    CHECK_THROWS_AS(run_time_domain(loop, 1e-4, 0.1), ConfigError);
}

TEST_CASE("run: dt coarser than 1/(50 f_max) is rejected") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    loop.simulated_side.source.harmonics = {{1, 10.0, 0.0}, {7, 1.0, 0.0}};  // f_max = 350 Hz
    CHECK_THROWS_AS(run_time_domain(loop, 1e-4, 0.1), ConfigError);
    CHECK_NOTHROW(run_time_domain(loop, 5e-5, 0.1));
}

TEST_CASE("run: doubling source amplitudes exactly doubles every channel") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 2e-3, 50.0, 10.0);
    loop.hut = Impedance::series_rl(2.0, 1e-3);
    loop.amplifier.bandwidth_hz = 5e3;
    loop.sensor_delay_s = 1e-3;
    loop.simulated_side.source.harmonics = {{1, 10.0, 0.3}, {3, 3.0, -0.7}};
    loop.interface_algorithm = InterfaceAlgorithm::filter(200.0);
    loop.extrapolator = Extrapolator{1, loop.total_delay_s()};
    loop.phase_advance = design_phase_advance(50.0, {1, 3}, loop.total_delay_s());

    PhilLoop doubled = loop;
    for (HarmonicComponent& h : doubled.simulated_side.source.harmonics) h.amplitude_v *= 2.0;

    const double dt = 1e-4;
    const Trace a = run_time_domain(loop, dt, 0.2);
    const Trace b = run_time_domain(doubled, dt, 0.2);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(b.v_coupling[k] == 2.0 * a.v_coupling[k]);
        CHECK(b.i_feedback[k] == 2.0 * a.i_feedback[k]);
        CHECK(b.v_command[k] == 2.0 * a.v_command[k]);
    }
}

TEST_CASE("run: open-loop magnitude under 0.9 of threshold never trips divergence over 2 s") {
    const PhilLoop loop = resistive_loop(0.85, 1.0, 1e-3);  // |L| = 0.85 < 0.9
    const Trace tr = run_time_domain(loop, 1e-4, 2.0, /*record=*/false);
    CHECK_FALSE(tr.diverged);
}

TEST_CASE("run: feedback filter with huge cutoff reproduces the plain interface") {
    PhilLoop itm = resistive_loop(1.0, 2.0, 1e-3);
    PhilLoop filtered = itm;
    filtered.interface_algorithm = InterfaceAlgorithm::filter(1e12);
    const double dt = 1e-4;
    const Trace a = run_time_domain(itm, dt, 0.5);
    const Trace b = run_time_domain(filtered, dt, 0.5);
    REQUIRE(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a.v_coupling[k] - b.v_coupling[k];
        acc += d * d;
    }
    CHECK(std::sqrt(acc / static_cast<double>(a.size())) < 1e-6);
}

TEST_CASE("reference: symmetric resistive divider halves the source") {
    PhilLoop loop = resistive_loop(1.0, 1.0, 1e-3);
    const double dt = 1e-4;
    const Trace ref = reference_direct(loop, dt, 0.5);
    const double omega = 2.0 * pi * 50.0;
    const std::complex<double> bin = oracle::single_bin(ref.v_coupling, omega, dt, 1000, 4000);
    CHECK(2.0 * std::abs(bin) / 4000.0 == Catch::Approx(5.0).epsilon(1e-3));
}

TEST_CASE("reference: RL hardware current lags the coupling voltage by the impedance angle") {
    PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    loop.hut = Impedance::series_rl(2.0, 5e-3);
    const double dt = 2e-5;
    const Trace ref = reference_direct(loop, dt, 0.5);
    const double omega = 2.0 * pi * 50.0;
    const oracle::BinRatio r = oracle::bin_ratio(ref.i_feedback, ref.v_coupling, omega, dt, 15000, 10000);
    const double want = -std::atan2(omega * 5e-3, 2.0);  // current lags
    CHECK(std::abs(oracle::wrap_pm_pi(r.phase_rad - want)) < 0.1 * pi / 180.0);
    CHECK(r.magnitude == Catch::Approx(1.0 / std::hypot(2.0, omega * 5e-3)).epsilon(0.005));
}

TEST_CASE("reference: bench run approaches the reference as the interface turns ideal") {
    const double dt = 1e-4;
    PhilLoop loop = resistive_loop(1.0, 2.0, dt);  // a single sample of delay, unit gain
    const Trace bench = run_time_domain(loop, dt, 1.0);
    const Trace ref = reference_direct(loop, dt, 1.0);
    REQUIRE(bench.size() == ref.size());
    double num = 0.0, den = 0.0;
    for (std::size_t k = 5000; k < bench.size(); ++k) {
        const double d = bench.v_coupling[k] - ref.v_coupling[k];
        num += d * d;
        den += ref.v_coupling[k] * ref.v_coupling[k];
    }
    CHECK(std::sqrt(num / den) < 0.02);
}

TEST_CASE("metrics: identical traces have zero error everywhere") {
    const PhilLoop loop = resistive_loop(1.0, 2.0, 1e-3);
    const Trace ref = reference_direct(loop, 1e-4, 0.5);
    const AccuracyReport rep = accuracy_metrics(ref, ref, {1}, 50.0);
    REQUIRE(rep.per_harmonic.size() == 1);
    CHECK(rep.per_harmonic[0].magnitude_ratio_error == 0.0);
    CHECK(rep.per_harmonic[0].phase_error_deg == 0.0);
    CHECK(rep.rms_error_v_coupling == 0.0);
    CHECK(rep.rms_error_i_feedback == 0.0);
}

TEST_CASE("metrics: a 1 ms shift reads as 18/90/126 degrees at h=1/5/7") {
    // Synthetic traces: the delayed copy of a three-harmonic waveform.
    const double dt = 2e-5, f0 = 50.0, t_d = 1e-3;
    const std::size_t n = 50000;
    Trace ref, delayed;
    ref.dt_s = delayed.dt_s = dt;
    auto wave = [&](double t) {
        return 10.0 * std::sin(2.0 * pi * f0 * t) + 2.0 * std::sin(2.0 * pi * 5.0 * f0 * t + 0.4) +
               1.0 * std::sin(2.0 * pi * 7.0 * f0 * t - 1.1);
    };
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        ref.v_coupling.push_back(wave(t));
        delayed.v_coupling.push_back(wave(t - t_d));
        ref.i_feedback.push_back(0.1 * wave(t));
        delayed.i_feedback.push_back(0.1 * wave(t - t_d));
        ref.v_command.push_back(wave(t));
        delayed.v_command.push_back(wave(t - t_d));
    }
    const AccuracyReport rep = accuracy_metrics(delayed, ref, {1, 5, 7}, f0);
    REQUIRE(rep.per_harmonic.size() == 3);
    CHECK(rep.per_harmonic[0].phase_error_deg == Catch::Approx(18.0).margin(1e-6));
    CHECK(rep.per_harmonic[1].phase_error_deg == Catch::Approx(90.0).margin(1e-6));
    CHECK(rep.per_harmonic[2].phase_error_deg == Catch::Approx(126.0).margin(1e-6));
    for (const HarmonicError& e : rep.per_harmonic)
        CHECK(std::abs(e.magnitude_ratio_error) < 1e-9);
}

TEST_CASE("metrics: per-harmonic lag of a pure-delay interface equals 360*f*T_d") {
    // Near-zero source impedance, unit flat amplifier, all delay in the
    // amplifier: the bench output is the reference shifted by exactly T_d.
    PhilLoop loop;
    loop.simulated_side.source.f0_hz = 50.0;
    loop.simulated_side.source.harmonics = {{1, 10.0, 0.0}, {5, 2.0, 0.4}, {7, 1.0, -1.1}};
    loop.simulated_side.source_impedance = Impedance::resistive(1e-6);
    loop.hut = Impedance::resistive(1.0);
    loop.amplifier.delay_s = 1e-3;
    loop.interface_algorithm = InterfaceAlgorithm::itm();
    const double dt = 2e-5;
    const Trace bench = run_time_domain(loop, dt, 1.0);
    const Trace ref = reference_direct(loop, dt, 1.0);
    const AccuracyReport rep = accuracy_metrics(bench, ref, {1, 5, 7}, 50.0);
    CHECK(rep.per_harmonic[0].phase_error_deg == Catch::Approx(18.0).margin(0.05));
    CHECK(rep.per_harmonic[1].phase_error_deg == Catch::Approx(90.0).margin(0.05));
    CHECK(rep.per_harmonic[2].phase_error_deg == Catch::Approx(126.0).margin(0.05));
    // Non-proportional impact: error at h equals h times the fundamental's error.
    const double base = rep.per_harmonic[0].phase_error_deg;
    CHECK(rep.per_harmonic[1].phase_error_deg == Catch::Approx(5.0 * base).margin(0.05));
    CHECK(rep.per_harmonic[2].phase_error_deg == Catch::Approx(7.0 * base).margin(0.05));
}

TEST_CASE("metrics: window must hold one fundamental period") {
    Trace a, b;
    a.dt_s = b.dt_s = 1e-4;
    a.v_coupling.assign(300, 1.0);
    a.i_feedback.assign(300, 0.0);
    a.v_command.assign(300, 1.0);
    b = a;
    // 300 samples -> window 60 samples < one 50 Hz period (200 samples).
    CHECK_THROWS_AS(accuracy_metrics(a, b, {1}, 50.0), ConfigError);
}

TEST_CASE("metrics: mismatched traces are rejected") {
    Trace a, b;
    a.dt_s = 1e-4;
    b.dt_s = 2e-4;
    a.v_coupling.assign(1000, 0.0);
    b.v_coupling.assign(1000, 0.0);
    CHECK_THROWS_AS(accuracy_metrics(a, b, {1}, 50.0), ConfigError);
}
