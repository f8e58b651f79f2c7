#pragma once

#include <complex>

#include "fpjpa/circuit_model.hpp"
#include "fpjpa/interference.hpp"

namespace fpjpa::oracle {

struct TruncationSpec {
    int max_terms = 200;
    double tail_tolerance = 1e-17;
};

enum class ReflectorKind { jpa_model, pure_phase };

struct Reflector {
    ReflectorKind kind = ReflectorKind::jpa_model;
    double phi_ref = 0.0;
};

struct SeriesResult {
    cplx value;
    int terms = 0;
    double tail_bound = 0.0;
    bool truncated = false;  // tail still above tolerance at max_terms
};

// Multiple-bounce sum between the mirror and a reflector at the device plane.
SeriesResult truncated_series_reflection(double delta, const JpaParams& jpa,
                                         const FabryPerotParams& fp, const TruncationSpec& spec,
                                         const Reflector& reflector = {});

// Output coefficients of every input channel from the 2x2 signal/idler solve.
struct IoOracle {
    cplx c, u, v, d;
    cplx c_idler, u_idler, v_idler, d_idler;
};

IoOracle signal_idler_io(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                         const DriveParams& drive);

cplx signal_idler_matrix_solve(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                               const DriveParams& drive);

struct SquidSolution {
    double theta = 0.0;
    double theta_c = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

// Solves theta = |C_c| sin(phi - beta theta), theta_c = +-S_c cos(phi - beta theta).
SquidSolution squid_numeric_charge_flux(double phi, double beta, double phi_c);

struct TimeDomainOptions {
    double tau = -1.0;         // one-way delay, s; negative means pi / fsr
    int steps_per_delay = 0;   // 0 picks a value from kappa * delay
    double dt = 0.0;           // used when tau == 0
    double duration = 0.0;     // 0 picks a value from the decay times
};

struct TimeDomainResult {
    cplx response;
    double drift = 0.0;  // change between the two halves of the demodulation window
    bool steady = true;
    long steps = 0;
};

// Classical delayed-feedback amplitude equation in the frame rotating at omega_a.
TimeDomainResult time_domain_delay_simulation(const JpaParams& jpa, const FabryPerotParams& fp,
                                              double delta, const TimeDomainOptions& opt = {});

}  // namespace fpjpa::oracle
