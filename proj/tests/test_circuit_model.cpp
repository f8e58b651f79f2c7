#include "doctest.h"

#include <random>

#include "fpjpa/circuit_model.hpp"
#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"
#include "fpjpa/oracle.hpp"
#include "support.hpp"

using namespace fpjpa;
using fpjpa::test::rel_err;

namespace {

// Values from an independent 40-digit solve.
constexpr double kDottie = 0.7390851332151606416553;
constexpr double kFixedPointB0125 = 0.1013724913500755217992;  // beta = 0.125, phi_c = pi/3
constexpr double kZqFrozen = 1027.058974927616301526;

CircuitParams designed_circuit() {
    CircuitParams c;
    c.n_squids = 5;
    c.l_loop = 20e-12;
    c.l_josephson = 84e-12;
    c.l_geometric = 80e-12;
    c.c_internal = 4.49959182902049244221e-13;
    c.c_coupling = 8.46467194450699824976e-14;
    return c;
}

}  // namespace

TEST_CASE("resistance quantum matches CODATA-derived value") {
    CHECK(rel_err(kZq, kZqFrozen) < 1e-15);
}

TEST_CASE("fixed point at beta = 1 is the Dottie number") {
    const FixedPoint fp = solve_circulating_flux(kPi / 2.0, 1.0);
    CHECK(fp.x == doctest::Approx(kDottie).epsilon(1e-12));
    CHECK(fp.branch == +1);
    CHECK(std::abs(fp.residual) < 1e-12);
}

TEST_CASE("fixed point at the criterion bias") {
    const FixedPoint fp = solve_circulating_flux(kPi / 3.0, 0.125);
    CHECK(fp.x == doctest::Approx(kFixedPointB0125).epsilon(1e-12));
    CHECK(fp.phi_ex_eff == doctest::Approx(kPi / 3.0 - kFixedPointB0125).epsilon(1e-12));
}

TEST_CASE("vanishing loop inductance leaves the applied flux unscreened") {
    for (double beta : {1e-6, 1e-9, 0.0}) {
        const FixedPoint fp = solve_circulating_flux(1.1, beta);
        CHECK(std::abs(fp.x) <= beta + 1e-300);
        CHECK(fp.phi_ex_eff == doctest::Approx(1.1).epsilon(1e-5));
    }
}

TEST_CASE("fixed point residual property over random biases") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ph(-3.0, 3.0), be(0.0, 1.0);
    int checked = 0;
    for (int i = 0; i < 2000; ++i) {
        const double phic = ph(rng), beta = be(rng);
        try {
            const FixedPoint fp = solve_circulating_flux(phic, beta);
            CHECK(std::abs(fp.x - fp.branch * beta * std::sin(phic - fp.x)) < 1e-11);
            CHECK(fp.branch * std::cos(fp.phi_ex_eff) > 0.0);
            ++checked;
        } catch (const DegenerateBiasError&) {
        }
    }
    CHECK(checked > 1900);
}

TEST_CASE("applied flux for an effective flux inverts the fixed point") {
    for (double eff : {0.2, 0.7, 1.0471975511965976, 1.4, -1.2}) {
        for (double beta : {0.0, 0.125, 0.5}) {
            const FixedPoint fp = solve_circulating_flux(applied_flux_for_effective(eff, beta), beta);
            CHECK(fp.phi_ex_eff == doctest::Approx(eff).epsilon(1e-10));
        }
    }
    // beyond pi/2 the upper branch may also be self-consistent and is preferred
    for (double eff : {2.0, 2.8}) {
        for (double beta : {0.0, 0.125, 0.5}) {
            const double phic = applied_flux_for_effective(eff, beta);
            const double x = phic - eff;
            CHECK(std::abs(x + beta * std::sin(phic - x)) < 1e-14);
            const FixedPoint fp = solve_circulating_flux(phic, beta);
            if (fp.branch == -1) CHECK(fp.phi_ex_eff == doctest::Approx(eff).epsilon(1e-10));
            else CHECK(std::cos(fp.phi_ex_eff) > 0.0);
        }
    }
    CHECK(solve_circulating_flux(applied_flux_for_effective(2.0, 0.0), 0.0).branch == -1);
}

TEST_CASE("bias at the pi/2 crossing is rejected") {
    CHECK_THROWS_AS(solve_circulating_flux(kPi / 2.0, 0.0), DegenerateBiasError);
    CHECK_THROWS_AS(effective_josephson_inductance(1e-10, kPi / 2.0 + 1e-4), DegenerateBiasError);
    CHECK_THROWS_AS(applied_flux_for_effective(kPi / 2.0, 0.1), DegenerateBiasError);
}

TEST_CASE("effective Josephson inductance") {
    CHECK(effective_josephson_inductance(84e-12, kPi / 3.0) == doctest::Approx(84e-12).epsilon(1e-14));
    CHECK(effective_josephson_inductance(84e-12, 0.0) == doctest::Approx(42e-12).epsilon(1e-14));
    CHECK(effective_josephson_inductance(84e-12, kPi) == doctest::Approx(42e-12).epsilon(1e-14));
}

TEST_CASE("validation of circuit values") {
    CircuitParams c = designed_circuit();
    CHECK_NOTHROW(validate(c));
    c.l_josephson = -1.0;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = designed_circuit();
    c.n_squids = 0;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = designed_circuit();
    c.l_loop = 3.0 * c.l_josephson;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = designed_circuit();
    c.l_loop = 0.0;
    c.l_geometric = 0.0;
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("Hamiltonian parameters of the designed circuit") {
    const CircuitParams c = designed_circuit();
    const BiasState b{0.0, kPi / 3.0, 0.0, +1};
    const JpaParams p = hamiltonian_params(c, b);
    CHECK(rel_err(p.omega_a, 2.0 * kPi * 9.5e9) < 1e-12);
    CHECK(rel_err(p.p_j, 0.8) < 1e-12);
    CHECK(rel_err(p.alpha_a, 0.03051176951330057972) < 1e-12);
    CHECK(rel_err(p.p_sq, 0.94382022471910112360) < 1e-12);
    CHECK(rel_err(p.p_kappa, 0.15833480153032229081) < 1e-12);
    CHECK(rel_err(p.kbar, -7.811012995404948409e-5) < 1e-12);
    CHECK(rel_err(p.kappabar, 0.04) < 1e-12);
    CHECK(rel_err(p.kappa, 0.04 * p.omega_a) < 1e-12);
}

TEST_CASE("Kerr from the charging energy matches the dimensionless form") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (int i = 0; i < 200; ++i) {
        CircuitParams c;
        c.n_squids = 1 + int(10 * u(rng));
        c.l_josephson = 50e-12 + 100e-12 * u(rng);
        c.l_loop = c.l_josephson * u(rng);
        c.l_geometric = 100e-12 * u(rng);
        c.c_internal = 500e-15 * u(rng);
        c.c_coupling = 100e-15 * u(rng);
        const BiasState b{0.0, 1.2 * u(rng), 0.0, +1};
        const JpaParams p = hamiltonian_params(c, b);
        CHECK(rel_err(kerr_from_charging_energy(c, b), p.kerr) < 1e-12);
    }
}

TEST_CASE("pump amplitude from delivered power") {
    CircuitParams c = designed_circuit();
    c.mutual = 1e-12;
    c.l_pump_shunt = 50e-12;
    const BiasState b{0.0, kPi / 3.0, 0.0, +1};
    const JpaParams p = hamiltonian_params(c, b);
    const double power = 1e-9, wp = 2.0 * p.omega_a;
    const PumpAmplitude a = pump_amplitude(c, power, wp, p, b);
    const double z0 = 50.0, xl = wp * c.l_pump_shunt;
    const double phi_p = 2.0 * std::sqrt(2.0) * c.mutual * std::sqrt(power * z0) / (kPhi0 * std::hypot(z0, xl));
    CHECK(rel_err(a.phi_p, phi_p) < 1e-14);
    CHECK(rel_err(a.omegabar_p, p.p_j * p.p_sq * std::tan(kPi / 3.0) * phi_p / 4.0) < 1e-14);
    CHECK(rel_err(a.omega_pump_amp, a.omegabar_p * p.omega_a) < 1e-14);
    // amplitude scales with the square root of power
    const PumpAmplitude a4 = pump_amplitude(c, 4.0 * power, wp, p, b);
    CHECK(rel_err(a4.omega_pump_amp, 2.0 * a.omega_pump_amp) < 1e-13);
    CHECK_THROWS_AS(pump_amplitude(c, -1.0, wp, p, b), DomainError);
}

TEST_CASE("charge-flux series at zero loop inductance is the bare junction") {
    const ChargeFluxSeries s = charge_flux_expansion(0.0, 0.4);
    CHECK(s.epsilon == 0.0);
    CHECK(s.c1 == doctest::Approx(std::cos(0.4)));
    CHECK(s.c3 == doctest::Approx(-std::cos(0.4)));
}

TEST_CASE("charge-flux series agrees with the transcendental solve at small flux") {
    const double beta = 0.125, phic = kPi / 3.0;
    const ChargeFluxSeries s = charge_flux_expansion(beta, solve_circulating_flux(phic, beta).phi_ex_eff);
    for (double phi : {1e-3, 5e-3, 1e-2}) {
        const oracle::SquidSolution n = oracle::squid_numeric_charge_flux(phi, beta, phic);
        CHECK(std::abs(s(phi) - n.theta) < 1e-9);
    }
}
