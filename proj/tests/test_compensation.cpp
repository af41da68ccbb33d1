#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracle.hpp"
#include "phil/compensation.hpp"
#include "phil/loop.hpp"
#include "phil/rng.hpp"
#include "phil/simulate.hpp"

using namespace phil;
using std::numbers::pi;

namespace {

/// Bench whose interface is effectively a pure delay: negligible source
/// impedance, unit flat amplifier carrying all the delay.
PhilLoop pure_delay_bench(double t_d) {
    PhilLoop loop;
    loop.simulated_side.source.f0_hz = 50.0;
    loop.simulated_side.source.harmonics = {{1, 10.0, 0.0}, {5, 2.0, 0.4}, {7, 1.0, -1.1}};
    loop.simulated_side.source_impedance = Impedance::resistive(1e-6);
    loop.hut = Impedance::resistive(1.0);
    loop.amplifier.delay_s = t_d;
    loop.interface_algorithm = InterfaceAlgorithm::itm();
    return loop;
}

}  // namespace

TEST_CASE("phase advance design: 50 Hz, 1 ms gives 18/90/126 degrees") {
    const PhaseAdvancePlan plan = design_phase_advance(50.0, {1, 5, 7}, 1e-3);
    REQUIRE(plan.entries.size() == 3);
    CHECK(oracle::deg(plan.entries[0].advance_rad) == Catch::Approx(18.0).epsilon(1e-12));
    CHECK(oracle::deg(plan.entries[1].advance_rad) == Catch::Approx(90.0).epsilon(1e-12));
    CHECK(oracle::deg(plan.entries[2].advance_rad) == Catch::Approx(126.0).epsilon(1e-12));
}

TEST_CASE("phase advance design: zero delay means zero advance") {
    const PhaseAdvancePlan plan = design_phase_advance(50.0, {1, 5, 7}, 0.0);
    for (const PhaseAdvanceEntry& e : plan.entries) CHECK(e.advance_rad == 0.0);
}

TEST_CASE("phase advance design: advances are reduced to [0, 2*pi)") {
    // h=20 advances a full turn (2*pi*20*50*1e-3 = 2*pi) -> reduces to 0;
    // h=27 advances 1.35 turns -> reduces to 0.35 turns = 126 degrees.
    const PhaseAdvancePlan plan = design_phase_advance(50.0, {20, 27}, 1e-3);
    CHECK(plan.entries[0].advance_rad == Catch::Approx(0.0).margin(1e-12));
    CHECK(oracle::deg(plan.entries[1].advance_rad) == Catch::Approx(126.0).epsilon(1e-9));
    for (const PhaseAdvanceEntry& e : plan.entries) {
        CHECK(e.advance_rad >= 0.0);
        CHECK(e.advance_rad < 2.0 * pi);
    }
}

TEST_CASE("phase advance design: empty harmonic set is refused") {
    CHECK_THROWS_AS(design_phase_advance(50.0, {}, 1e-3), ConfigError);
}

TEST_CASE("feedback filter design: magnitude at the cutoff is 1/sqrt(2)") {
    const TransferBlock f = design_feedback_filter(100.0);
    CHECK(evaluate(f, 2.0 * pi * 100.0).magnitude == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("phase advance applied: residual harmonic errors are negligible") {
    PhilLoop loop = pure_delay_bench(1e-3);
    loop.phase_advance = design_phase_advance(50.0, {1, 5, 7}, loop.total_delay_s());
    const double dt = 2e-5;
    const Trace bench = run_time_domain(loop, dt, 1.0);
    const Trace ref = reference_direct(loop, dt, 1.0);
    const AccuracyReport rep = accuracy_metrics(bench, ref, {1, 5, 7}, 50.0);
    for (const HarmonicError& e : rep.per_harmonic) {
        INFO("harmonic " << e.order);
        CHECK(std::abs(e.phase_error_deg) < 0.1);
        CHECK(std::abs(e.magnitude_ratio_error) < 0.005);
    }
}

TEST_CASE("phase advance applied: without a plan the full delay error remains") {
    const PhilLoop loop = pure_delay_bench(1e-3);
    const double dt = 2e-5;
    const Trace bench = run_time_domain(loop, dt, 1.0);
    const Trace ref = reference_direct(loop, dt, 1.0);
    const AccuracyReport rep = accuracy_metrics(bench, ref, {1, 5, 7}, 50.0);
    CHECK(rep.per_harmonic[0].phase_error_deg == Catch::Approx(18.0).margin(0.05));
    CHECK(rep.per_harmonic[1].phase_error_deg == Catch::Approx(90.0).margin(0.05));
    CHECK(rep.per_harmonic[2].phase_error_deg == Catch::Approx(126.0).margin(0.05));
}

TEST_CASE("phase advance applied: open-loop block is coefficient-identical") {
    PhilLoop bare = pure_delay_bench(1e-3);
    PhilLoop planned = bare;
    planned.phase_advance = design_phase_advance(50.0, {1, 5, 7}, planned.total_delay_s());
    const TransferBlock a = open_loop_block(bare);
    const TransferBlock b = open_loop_block(planned);
    CHECK(a.same_coefficients(b));
}

TEST_CASE("phase advance applied: plan/source mismatches are refused") {
    PhilLoop loop = pure_delay_bench(1e-3);
    loop.phase_advance = design_phase_advance(60.0, {1, 5, 7}, 1e-3);  // wrong fundamental
    CHECK_THROWS_AS(validate_loop(loop), ConfigError);
    loop.phase_advance = design_phase_advance(50.0, {1, 5}, 1e-3);  // missing harmonic 7
    CHECK_THROWS_AS(validate_loop(loop), ConfigError);
}

TEST_CASE("rotator: passes input through until the first window fills") {
    const PhaseAdvancePlan plan = design_phase_advance(50.0, {1}, 1e-3);
    const double dt = 1e-4;  // 200 samples per period
    HarmonicRotator rot(plan, dt);
    SplitMix64 rng(42);
    for (int k = 0; k < 199; ++k) {
        const double x = rng.next_in(-5.0, 5.0);
        CHECK(rot.step(x) == x);
    }
}

TEST_CASE("rotator: rotates the declared harmonic, leaves DC untouched") {
    const double f0 = 50.0, dt = 1e-4, advance = 0.9;
    PhaseAdvancePlan plan;
    plan.fundamental_hz = f0;
    plan.entries = {{1, advance}};
    HarmonicRotator rot(plan, dt);
    const double amp = 3.0, phase = 0.5, dc = 1.25;
    std::vector<double> out;
    const std::size_t n = 1200;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        out.push_back(rot.step(amp * std::sin(2.0 * pi * f0 * t + phase) + dc));
    }
    for (std::size_t k = 400; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double want = amp * std::sin(2.0 * pi * f0 * t + phase + advance) + dc;
        CHECK(out[k] == Catch::Approx(want).margin(1e-9));
    }
}

TEST_CASE("extrapolator: order 1 is exact on a ramp") {
    ExtrapolatorState ex({1, 5e-3}, 1e-3);
    const double slope = 2.5;
    ex.step(0.0);
    for (int k = 1; k <= 20; ++k) {
        const double t = static_cast<double>(k) * 1e-3;
        CHECK(ex.step(slope * t) == Catch::Approx(slope * (t + 5e-3)).epsilon(1e-12));
    }
}

TEST_CASE("extrapolator: order 0 leaves the loop bit-identical") {
    PhilLoop bare = pure_delay_bench(1e-3);
    bare.simulated_side.source_impedance = Impedance::resistive(1.0);  // make feedback matter
    bare.hut = Impedance::resistive(2.0);
    PhilLoop held = bare;
    held.extrapolator = Extrapolator{0, held.total_delay_s()};
    const double dt = 2e-5;
    const Trace a = run_time_domain(bare, dt, 0.3);
    const Trace b = run_time_domain(held, dt, 0.3);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a.v_coupling[k] == b.v_coupling[k]);
        CHECK(a.i_feedback[k] == b.i_feedback[k]);
        CHECK(a.v_command[k] == b.v_command[k]);
    }
}

TEST_CASE("extrapolator: order 1 shrinks the command-channel phase error") {
    // The linear predictor multiplies sample-to-sample differences by
    // horizon/dt, so the loop ratio and dt are chosen to keep the predicted
    // loop gain below one at every frequency (0.04 * (1 + 2*10) < 1).
    PhilLoop bare = pure_delay_bench(2e-3);
    bare.simulated_side.source_impedance = Impedance::resistive(0.2);
    bare.hut = Impedance::resistive(5.0);
    bare.simulated_side.source.harmonics = {{1, 10.0, 0.0}};
    PhilLoop comp = bare;
    comp.extrapolator = Extrapolator{1, comp.total_delay_s()};
    const double dt = 2e-4;
    const double omega = 2.0 * pi * 50.0;
    const Trace ref = reference_direct(bare, dt, 1.0);
    const Trace a = run_time_domain(bare, dt, 1.0);
    const Trace b = run_time_domain(comp, dt, 1.0);
    REQUIRE_FALSE(a.diverged);
    REQUIRE_FALSE(b.diverged);
    REQUIRE(a.size() == ref.size());
    REQUIRE(b.size() == ref.size());
    const std::size_t begin = 3000, count = 2000;  // 5 whole periods, late in the run
    const double err_bare = std::abs(
        oracle::wrap_pm_pi(oracle::bin_ratio(a.v_command, ref.v_command, omega, dt, begin, count).phase_rad));
    const double err_comp = std::abs(
        oracle::wrap_pm_pi(oracle::bin_ratio(b.v_command, ref.v_command, omega, dt, begin, count).phase_rad));
    CHECK(oracle::deg(err_bare) > 1.0);          // the uncompensated error is real
    CHECK(err_comp < 0.5 * err_bare);            // and prediction reduces it substantially
}

TEST_CASE("extrapolator: linear prediction amplifies white feedback noise") {
    ExtrapolatorState hold({0, 1e-3}, 1e-4);
    ExtrapolatorState lin({1, 1e-3}, 1e-4);
    SplitMix64 rng(0xBADF00D);
    double e_hold = 0.0, e_lin = 0.0;
    for (int k = 0; k < 20000; ++k) {
        const double x = rng.next_in(-1.0, 1.0);
        const double h = hold.step(x);
        const double l = lin.step(x);
        e_hold += h * h;
        e_lin += l * l;
    }
    CHECK(e_lin > e_hold);  // documented trade-off: prediction boosts noise power
}

TEST_CASE("extrapolator: orders above 1 and horizon mismatches are refused") {
    CHECK_THROWS_AS(ExtrapolatorState({2, 1e-3}, 1e-4), ConfigError);
    PhilLoop loop = pure_delay_bench(1e-3);
    loop.extrapolator = Extrapolator{1, 2e-3};  // loop delay is 1 ms
    CHECK_THROWS_AS(validate_loop(loop), ConfigError);
}
