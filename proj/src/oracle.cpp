#include "fpjpa/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "fpjpa/circuit_model.hpp"
#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"

namespace fpjpa::oracle {

namespace {

constexpr cplx kI{0.0, 1.0};

// Round-trip factor rebuilt from the delay picture: propagation, mirror, delay phase.
cplx bounce(double delta, const FabryPerotParams& fp, double sign) {
    const double mirror = std::sqrt(1.0 - fp.eta);
    const double delay = 2.0 * kPi / fp.fsr;
    return fp.eta0 * mirror * std::exp(kI * (fp.phi0 + sign * delta * delay));
}

}  // namespace

SeriesResult truncated_series_reflection(double delta, const JpaParams& jpa,
                                         const FabryPerotParams& fp, const TruncationSpec& spec,
                                         const Reflector& reflector) {
    if (spec.max_terms < 1 || !(spec.tail_tolerance > 0.0))
        throw ValidationError("invalid truncation spec");
    const cplx loop = bounce(delta, fp, 1.0);
    if (!(std::abs(loop) < 1.0)) throw ValidationError("round-trip modulus must be below 1");

    cplx r_dev;
    if (reflector.kind == ReflectorKind::pure_phase) {
        r_dev = std::exp(kI * reflector.phi_ref);
    } else {
        // bare one-port cavity reflection a_out / a_in
        const cplx bare = kI * delta - 0.5 * (jpa.kappa + jpa.kappa0);
        r_dev = 1.0 + jpa.kappa / bare;
    }

    SeriesResult res;
    const double ee = fp.eta * fp.eta0;
    cplx sum = -std::conj(loop) / fp.eta0;
    cplx term = ee * r_dev;
    const cplx ratio = loop * r_dev;
    for (int n = 0; n < spec.max_terms; ++n) {
        sum += term;
        res.terms = n + 1;
        term *= ratio;
        if (std::abs(term) < spec.tail_tolerance) break;
    }
    const double q = std::abs(ratio);
    res.value = sum;
    res.truncated = std::abs(term) >= spec.tail_tolerance;
    res.tail_bound = (q < 1.0) ? ee * std::abs(r_dev) * std::pow(q, res.terms) / (1.0 - q) : INFINITY;
    return res;
}

IoOracle signal_idler_io(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                         const DriveParams& drive) {
    const double k = jpa.kappa, k0 = jpa.kappa0;
    const double eta = fp.eta, eta0 = fp.eta0;
    const cplx rs = bounce(delta, fp, 1.0);
    const cplx ri = bounce(-delta, fp, 1.0);  // idler sits at -delta
    const cplx ri_c = std::conj(ri);

    const cplx chi_s = kI * delta - 0.5 * (k + k0) - k * rs / (1.0 - rs);
    const cplx chi_i = -kI * delta - 0.5 * (k + k0) - k * ri / (1.0 - ri);
    const double om = drive.omega_pump_amp;

    Eigen::Matrix2cd m;
    m << chi_s, -kI * om / 2.0,
         kI * om / 2.0, std::conj(chi_i);
    if (std::abs(m.determinant()) < kThresholdFloor)
        throw ThresholdError("signal/idler matrix is singular");
    const Eigen::Matrix2cd minv = m.partialPivLu().inverse();

    // Drive vectors per channel [c, u, v, d].
    const double sk = std::sqrt(k);
    Eigen::Vector4cd fs, fi;
    fs << sk * std::sqrt(eta * eta0) / (1.0 - rs), sk * std::sqrt(1.0 - eta0) / (1.0 - rs),
          sk * rs * std::sqrt((1.0 - eta0) / eta0) / (1.0 - rs), std::sqrt(k0);
    fi << sk * std::sqrt(eta * eta0) / (1.0 - ri_c), sk * std::sqrt(1.0 - eta0) / (1.0 - ri_c),
          sk * ri_c * std::sqrt((1.0 - eta0) / eta0) / (1.0 - ri_c), std::sqrt(k0);

    const cplx out_gain = -kI * std::sqrt(eta * eta0 * k) / (1.0 - rs);
    Eigen::Vector4cd a_s = minv(0, 0) * kI * fs;
    Eigen::Vector4cd a_i = minv(0, 1) * (-kI) * fi;

    Eigen::Vector4cd direct;
    direct << -std::conj(rs) / eta0 + eta * eta0 / (1.0 - rs),
              std::sqrt(eta * eta0 * (1.0 - eta0)) / (1.0 - rs),
              std::sqrt(eta * (1.0 - eta0)) / (1.0 - rs), 0.0;

    Eigen::Vector4cd sig = direct + out_gain * a_s;
    Eigen::Vector4cd idl = out_gain * a_i;
    return IoOracle{sig(0), sig(1), sig(2), sig(3), idl(0), idl(1), idl(2), idl(3)};
}

cplx signal_idler_matrix_solve(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                               const DriveParams& drive) {
    return signal_idler_io(delta, jpa, fp, drive).c;
}

namespace {

struct SquidEq {
    double phi, beta, phi_c;
    int s;
    void residual(double th, double thc, double& f1, double& f2) const {
        const double cc = std::cos(phi_c - beta * thc), sc = std::sin(phi_c - beta * thc);
        const double sn = std::sin(phi - beta * th), cn = std::cos(phi - beta * th);
        f1 = th - std::abs(cc) * sn;
        f2 = thc - s * sc * cn;
    }
};

// theta for fixed theta_c: theta - A sin(phi - beta theta) is increasing when beta*A <= 1.
double inner_theta(const SquidEq& e, double thc) {
    const double a = std::abs(std::cos(e.phi_c - e.beta * thc));
    double lo = -1.0, hi = 1.0;
    double th = a * std::sin(e.phi);
    for (int it = 0; it < 200; ++it) {
        const double g = th - a * std::sin(e.phi - e.beta * th);
        if (std::abs(g) < 1e-16) break;
        if (g > 0.0) hi = th; else lo = th;
        const double dg = 1.0 + a * e.beta * std::cos(e.phi - e.beta * th);
        double tn = (dg > 0.0) ? th - g / dg : 0.5 * (lo + hi);
        if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
        if (tn == th) break;
        th = tn;
    }
    return th;
}

SquidSolution nested_solve(const SquidEq& e) {
    auto h = [&](double thc) {
        const double th = inner_theta(e, thc);
        return thc - e.s * std::sin(e.phi_c - e.beta * thc) * std::cos(e.phi - e.beta * th);
    };
    double lo = -1.0, hi = 1.0;
    SquidSolution sol;
    double x = 0.0;
    for (int it = 0; it < 400; ++it) {
        x = 0.5 * (lo + hi);
        const double hx = h(x);
        sol.iterations = it + 1;
        if (hx > 0.0) hi = x; else lo = x;
        if (hi - lo < 1e-17) break;
    }
    sol.theta_c = x;
    sol.theta = inner_theta(e, x);
    double f1, f2;
    e.residual(sol.theta, sol.theta_c, f1, f2);
    sol.residual = std::hypot(f1, f2);
    return sol;
}

}  // namespace

SquidSolution squid_numeric_charge_flux(double phi, double beta, double phi_c) {
    if (!(beta >= 0.0) || beta > 1.0) throw DomainError("beta must lie in [0, 1]");
    const FixedPoint fp0 = solve_circulating_flux(phi_c, beta);
    SquidEq e{phi, beta, phi_c, fp0.branch};

    double th = std::abs(std::cos(fp0.phi_ex_eff)) * std::sin(phi);
    double thc = (beta > 0.0) ? fp0.x / beta : fp0.branch * std::sin(phi_c);
    double f1, f2;
    e.residual(th, thc, f1, f2);
    double norm = std::hypot(f1, f2);
    SquidSolution sol;
    for (int it = 0; it < 100 && norm > 1e-17; ++it) {
        sol.iterations = it + 1;
        const double cc = std::cos(phi_c - beta * thc), sc = std::sin(phi_c - beta * thc);
        const double sn = std::sin(phi - beta * th), cn = std::cos(phi - beta * th);
        const double sg = (cc >= 0.0) ? 1.0 : -1.0;
        // d|cc|/dthc = sg * beta * sc
        const double j11 = 1.0 + std::abs(cc) * beta * cn;
        const double j12 = -sg * beta * sc * sn;
        const double j21 = -e.s * sc * beta * sn;
        const double j22 = 1.0 + e.s * beta * cc * cn;
        const double det = j11 * j22 - j12 * j21;
        if (std::abs(det) < 1e-300) break;
        const double dth = -(j22 * f1 - j12 * f2) / det;
        const double dthc = -(-j21 * f1 + j11 * f2) / det;
        double lam = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 30; ++ls) {
            double g1, g2;
            e.residual(th + lam * dth, thc + lam * dthc, g1, g2);
            const double nn = std::hypot(g1, g2);
            if (nn < norm) {
                th += lam * dth; thc += lam * dthc;
                f1 = g1; f2 = g2; norm = nn;
                improved = true;
                break;
            }
            lam *= 0.5;
        }
        if (!improved) break;
    }
    sol.theta = th;
    sol.theta_c = thc;
    sol.residual = norm;
    const bool branch_ok = (e.s > 0) == (std::cos(phi_c - beta * thc) > 0.0);
    if (norm < 1e-12 && branch_ok) return sol;

    SquidSolution alt = nested_solve(e);
    if (alt.residual < 1e-12) return alt;
    throw SolverError("SQUID charge-flux solve did not converge", std::min(norm, alt.residual));
}

TimeDomainResult time_domain_delay_simulation(const JpaParams& jpa, const FabryPerotParams& fp,
                                              double delta, const TimeDomainOptions& opt) {
    const double k = jpa.kappa, kt = jpa.kappa + jpa.kappa0;
    if (!(kt > 0.0)) throw ValidationError("total linewidth must be positive");
    const double tau = (opt.tau < 0.0) ? kPi / fp.fsr : opt.tau;
    const double delay = 2.0 * tau;
    const cplx mirror = std::sqrt(1.0 - fp.eta) * std::exp(kI * fp.phi0);
    const cplx loop = fp.eta0 * mirror;
    const double feed = std::sqrt(fp.eta * fp.eta0);
    const double sk = std::sqrt(k);

    int m = 0;
    double h;
    if (delay > 0.0) {
        m = opt.steps_per_delay > 0 ? opt.steps_per_delay
                                    : std::max(8, int(std::ceil(delay * kt / 0.01)));
        if (m < 4) throw ValidationError("need at least 4 steps per delay");
        h = delay / m;
    } else {
        h = opt.dt > 0.0 ? opt.dt : 0.01 / kt;
    }
    const double q = std::abs(loop);
    const double loop_time = (q > 0.0 && delay > 0.0) ? delay * std::log(1e-12) / std::log(q) : 0.0;
    const double settle = std::max(60.0 / kt, loop_time);
    const double duration = opt.duration > 0.0 ? opt.duration : settle + 40.0 / kt + 10.0 * delay;
    const long n_steps = long(std::ceil(duration / h));
    const long window = std::max<long>(n_steps / 4, 8);

    auto probe = [&](double t) { return std::exp(-kI * delta * t); };
    std::vector<cplx> aout(n_steps + 1, cplx(0.0));

    auto delayed = [&](double t_back) -> cplx {
        // a_out at time t_back <= current, cubic Lagrange on the stored grid
        if (t_back < 0.0) return 0.0;
        const double pos = t_back / h;
        long i0 = long(std::floor(pos)) - 1;
        i0 = std::max<long>(i0, 0);
        const double x = pos - double(i0);
        cplx acc = 0.0;
        for (int j = 0; j < 4; ++j) {
            double w = 1.0;
            for (int l = 0; l < 4; ++l)
                if (l != j) w *= (x - l) / double(j - l);
            acc += w * aout[std::min<long>(i0 + j, long(aout.size()) - 1)];
        }
        return acc;
    };

    // a_in as a function of state a and time t
    auto a_in = [&](double t, cplx a) -> cplx {
        if (delay > 0.0) return feed * probe(t) + loop * delayed(t - delay);
        return (feed * probe(t) - kI * sk * loop * a) / (1.0 - loop);
    };
    auto rhs = [&](double t, cplx a) { return -0.5 * kt * a - kI * sk * a_in(t, a); };

    cplx a = 0.0;
    aout[0] = a_in(0.0, a) - kI * sk * a;
    cplx acc1 = 0.0, acc2 = 0.0;
    long n1 = 0, n2 = 0;
    for (long s = 0; s < n_steps; ++s) {
        const double t = s * h;
        const cplx k1 = rhs(t, a);
        const cplx k2 = rhs(t + 0.5 * h, a + 0.5 * h * k1);
        const cplx k3 = rhs(t + 0.5 * h, a + 0.5 * h * k2);
        const cplx k4 = rhs(t + h, a + h * k3);
        a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double tn = (s + 1) * h;
        aout[s + 1] = a_in(tn, a) - kI * sk * a;
        if (s + 1 > n_steps - window) {
            const cplx cout = -std::conj(mirror) * probe(tn + delay) + feed * aout[s + 1];
            const cplx ratio = cout / probe(tn);
            if (s + 1 > n_steps - window / 2) { acc2 += ratio; ++n2; }
            else { acc1 += ratio; ++n1; }
        }
    }
    TimeDomainResult res;
    res.steps = n_steps;
    const cplx r1 = acc1 / double(std::max<long>(n1, 1));
    const cplx r2 = acc2 / double(std::max<long>(n2, 1));
    res.response = r2;
    res.drift = std::abs(r2 - r1);
    res.steady = res.drift <= 1e-6 * std::max(1.0, std::abs(r2));
    return res;
}

}  // namespace fpjpa::oracle
