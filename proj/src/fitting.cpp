#include "fpjpa/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"
#include "fpjpa/metrics.hpp"
#include "fpjpa/parallel.hpp"

namespace fpjpa {

namespace {

constexpr cplx kI{0.0, 1.0};
constexpr double kSeedEta = 0.99;
constexpr double kSeedEta0 = 0.9;
constexpr double kSeedLossRatio = 0.08;

bool is_set(const ParamSetting& s) { return std::isfinite(s.initial); }

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// ---------- data heuristics ----------

template <class T>
std::vector<T> moving_average(const std::vector<T>& x, int half) {
    const int n = int(x.size());
    std::vector<T> out(n);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
        T acc{};
        for (int j = lo; j <= hi; ++j) acc += x[j];
        out[i] = acc / double(hi - lo + 1);
    }
    return out;
}

// Lag of the strongest autocorrelation peak after the first zero crossing.
double autocorrelation_period(const std::vector<cplx>& res, double step) {
    const std::size_t n = res.size();
    if (n < 8) return NAN;
    cplx mean = std::accumulate(res.begin(), res.end(), cplx(0.0)) / double(n);
    std::vector<cplx> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = res[i] - mean;
    auto ac = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t k = 0; k + lag < n; ++k) s += std::real(x[k] * std::conj(x[k + lag]));
        return s / double(n - lag);
    };
    const double a0 = ac(0);
    if (!(a0 > 0.0)) return NAN;
    const std::size_t max_lag = n / 2;
    std::size_t first_neg = 0;
    std::vector<double> a(max_lag + 1);
    for (std::size_t l = 1; l <= max_lag; ++l) {
        a[l] = ac(l) / a0;
        if (!first_neg && a[l] < 0.0) first_neg = l;
    }
    if (!first_neg) return NAN;
    std::size_t best = 0;
    double best_v = -INFINITY;
    for (std::size_t l = first_neg; l + 1 <= max_lag; ++l)
        if (a[l] > a[l - 1] && a[l] >= a[l + 1] && a[l] > best_v) { best_v = a[l]; best = l; }
    if (!best || best_v <= 0.0) return NAN;
    return double(best) * step;
}

double median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return (v.size() % 2) ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean_step(const std::vector<double>& d) { return (d.back() - d.front()) / double(d.size() - 1); }

cplx single_pole_reflection(double delta, double kappa, double kappa0) {
    return 1.0 + kappa / (kI * delta - 0.5 * (kappa + kappa0));
}

double single_pole_gain(double delta, double kappa, double kappa0, double om) {
    const cplx chi = kI * delta - 0.5 * (kappa + kappa0);
    return std::norm(1.0 + kappa * chi / (chi * chi - om * om / 4.0));
}

void seed_reflection(FitProblem& p) {
    const FitDataset& ds = p.datasets[0];
    const std::size_t n = ds.detunings.size();
    const std::vector<cplx> z = moving_average(ds.s_tilde, std::max<int>(1, int(n / 400)));
    const std::size_t m = std::max<std::size_t>(2, n / 50);
    cplx edge = 0.0;
    for (std::size_t i = 0; i < m; ++i) edge += z[i] + z[n - 1 - i];
    edge /= double(2 * m);

    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(z[i] - edge);
    const std::size_t ip = std::size_t(std::max_element(dist.begin(), dist.end()) - dist.begin());
    const double dmax = dist[ip];
    const double lvl = dmax / std::sqrt(2.0);
    std::size_t il = ip, ir = ip;
    while (il > 0 && dist[il - 1] >= lvl) --il;
    while (ir + 1 < n && dist[ir + 1] >= lvl) ++ir;
    double kt = ds.detunings[ir] - ds.detunings[il];
    if (!(kt > 0.0)) kt = 0.05 * (ds.detunings.back() - ds.detunings.front());
    double kappa = std::clamp(0.5 * dmax / std::max(std::abs(edge), 1e-12), 0.05, 0.98) * kt;
    double kappa0 = std::max(kt - kappa, 0.01 * kappa);
    const double offset = is_set(p.omega_offset) ? p.omega_offset.initial : ds.detunings[ip];

    if (p.kappa.empty()) p.kappa.resize(1);
    if (p.kappa0.empty()) p.kappa0.resize(1);
    if (is_set(p.kappa[0])) kappa = p.kappa[0].initial; else p.kappa[0].initial = kappa;
    if (is_set(p.kappa0[0])) kappa0 = p.kappa0[0].initial; else p.kappa0[0].initial = kappa0;
    if (!is_set(p.omega_offset)) p.omega_offset.initial = offset;

    std::vector<cplx> model(n);
    cplx acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        model[i] = single_pole_reflection(ds.detunings[i] - offset, kappa, kappa0);
        acc += ds.s_tilde[i] * std::conj(model[i]);
    }
    if (!is_set(p.phi_ref)) p.phi_ref.initial = -std::arg(acc);
    if (!is_set(p.fsr)) {
        std::vector<cplx> res(n);
        const cplx rot = std::exp(-kI * p.phi_ref.initial);
        for (std::size_t i = 0; i < n; ++i) res[i] = ds.s_tilde[i] - model[i] * rot;
        double f = autocorrelation_period(res, mean_step(ds.detunings));
        if (!std::isfinite(f)) f = 0.25 * (ds.detunings.back() - ds.detunings.front());
        p.fsr.initial = f;
    }
}

void seed_gain(FitProblem& p) {
    const std::size_t nd = p.datasets.size();
    if (p.kappa.empty()) p.kappa.resize(nd);
    if (p.kappa0.empty()) p.kappa0.resize(nd);
    if (!is_set(p.omega_offset)) p.omega_offset.initial = 0.0;

    std::vector<double> om(nd), periods;
    for (std::size_t i = 0; i < nd; ++i) {
        const FitDataset& ds = p.datasets[i];
        const std::size_t n = ds.detunings.size();
        std::vector<double> g = moving_average(ds.gain_db, std::max<int>(2, int(n / 200)));
        for (double& v : g) v = from_db(v);
        const double gpk = *std::max_element(g.begin(), g.end());
        double width;
        try {
            width = bandwidth_3db(ds.detunings, g).full_width;
        } catch (const std::exception&) {
            width = 0.1 * (ds.detunings.back() - ds.detunings.front());
        }
        // unit-kappa single-pole reference at the same peak gain
        const double rho = kSeedLossRatio;
        double om1;
        try {
            om1 = single_pole_pump(1.0, rho, std::max(gpk, 1.05));
        } catch (const std::exception&) {
            om1 = 0.3;
        }
        std::vector<double> x = GridSpec{-4.0, 4.0, 8001}.points(), gg(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) gg[k] = single_pole_gain(x[k], 1.0, rho, om1);
        double w1;
        try {
            w1 = bandwidth_3db(x, gg).full_width;
        } catch (const std::exception&) {
            w1 = 1.0;
        }
        double kappa = width / w1;
        if (is_set(p.kappa[i])) kappa = p.kappa[i].initial; else p.kappa[i].initial = kappa;
        double kappa0 = rho * kappa;
        if (is_set(p.kappa0[i])) kappa0 = p.kappa0[i].initial; else p.kappa0[i].initial = kappa0;
        om[i] = om1 * kappa;

        std::vector<cplx> res(n);
        for (std::size_t k = 0; k < n; ++k)
            res[k] = ds.gain_db[k] - to_db(single_pole_gain(ds.detunings[k], kappa, kappa0, om[i]));
        periods.push_back(autocorrelation_period(res, mean_step(ds.detunings)));
    }
    if (!is_set(p.c_p)) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < nd; ++i) {
            num += om[i] * std::sqrt(*p.datasets[i].pump_power);
            den += *p.datasets[i].pump_power;
        }
        p.c_p.initial = num / den;
    }
    if (!is_set(p.fsr)) {
        double f = median(periods);
        if (!std::isfinite(f)) {
            const auto& d = p.datasets[0].detunings;
            f = 0.25 * (d.back() - d.front());
        }
        p.fsr.initial = f;
    }
    if (!is_set(p.phi_ref)) p.phi_ref.initial = 0.0;
}

void seed_common(FitProblem& p) {
    if (!is_set(p.eta)) p.eta.initial = kSeedEta;
    if (!is_set(p.eta0)) p.eta0.initial = kSeedEta0;
    if (!is_set(p.phi0)) p.phi0.initial = 0.0;
    if (!is_set(p.c_p)) p.c_p.initial = 0.0;
}

// ---------- optimizer ----------

struct LmOutcome {
    Eigen::VectorXd u;
    double f0 = INFINITY;
    double f = INFINITY;
    int iterations = 0;
    double grad_inf = INFINITY;
    bool valid = false;
};

double grad_tolerance(double f) { return 1e-6 * (1.0 + f); }

LmOutcome levenberg_marquardt(const FitModel& model, Eigen::VectorXd u, int max_iter) {
    LmOutcome out;
    Eigen::MatrixXd jac;
    Eigen::VectorXd r;
    if (!model.jacobian_at(u, jac, r)) return out;
    out.valid = true;
    double f = 0.5 * r.squaredNorm();
    out.f0 = f;
    const Eigen::Index n = u.size();
    if (n == 0) {
        out.u = u;
        out.f = f;
        out.grad_inf = 0.0;
        return out;
    }
    Eigen::MatrixXd a = jac.transpose() * jac;
    Eigen::VectorXd g = jac.transpose() * r;
    double mu = 1e-3 * a.diagonal().maxCoeff();
    double nu = 2.0;
    int small_steps = 0;
    int it = 0;
    Eigen::VectorXd r_new;
    for (; it < max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + f) || f < 1e-32) break;
        Eigen::VectorXd d = a.diagonal().cwiseMax(1e-12 * a.diagonal().maxCoeff()).cwiseMax(1e-300);
        Eigen::MatrixXd lhs = a;
        lhs.diagonal() += mu * d;
        Eigen::VectorXd h = lhs.ldlt().solve(-g);
        if (!h.allFinite()) { mu *= nu; nu *= 2.0; continue; }
        if (h.norm() <= 1e-13 * (u.norm() + 1e-13)) break;
        Eigen::VectorXd u_new = u + h;
        double f_new = INFINITY;
        if (model.residuals_at(u_new, r_new)) f_new = 0.5 * r_new.squaredNorm();
        const double pred = 0.5 * h.dot(mu * d.cwiseProduct(h) - g);
        const double rho = (pred > 0.0 && std::isfinite(f_new)) ? (f - f_new) / pred : -1.0;
        if (rho > 0.0) {
            const double rel = (f - f_new) / std::max(f, 1e-300);
            u = u_new;
            f = f_new;
            if (!model.jacobian_at(u, jac, r)) break;
            a = jac.transpose() * jac;
            g = jac.transpose() * r;
            mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
            nu = 2.0;
            small_steps = (rel < 1e-15) ? small_steps + 1 : 0;
            if (small_steps >= 3) break;
        } else {
            mu *= nu;
            nu *= 2.0;
            if (!std::isfinite(mu) || mu > 1e300) break;
        }
    }
    out.u = u;
    out.f = f;
    out.iterations = it;
    out.grad_inf = g.lpNorm<Eigen::Infinity>();
    return out;
}

FitParamValue make_value(const FitModel::Param& p) { return FitParamValue{p.name, p.value, 0.0, p.free}; }

}  // namespace

// ---------- problem construction ----------

FitProblem make_reflection_problem(FitDataset data) {
    FitProblem p;
    p.kind = FitKind::reflection_complex;
    p.datasets.push_back(std::move(data));
    p.omega_offset = ParamSetting{};
    p.c_p = ParamSetting{0.0, false};
    return p;
}

FitProblem make_gain_problem(std::vector<FitDataset> data) {
    FitProblem p;
    p.kind = FitKind::gain_power;
    p.datasets = std::move(data);
    p.omega_offset = ParamSetting{0.0, false};
    return p;
}

void validate(const FitProblem& p) {
    if (p.datasets.empty()) throw ValidationError("fit problem needs at least one dataset");
    for (const FitDataset& ds : p.datasets) {
        check_detunings(ds.detunings);
        if (p.kind == FitKind::reflection_complex) {
            if (ds.s_tilde.size() != ds.detunings.size())
                throw ValidationError("reflection dataset needs complex values per detuning");
            for (const cplx& z : ds.s_tilde)
                if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
                    throw ValidationError("reflection data must be finite");
        } else {
            if (ds.gain_db.size() != ds.detunings.size())
                throw ValidationError("gain dataset needs one gain value per detuning");
            if (!ds.pump_power || !(*ds.pump_power > 0.0))
                throw ValidationError("gain datasets need a positive pump power");
            for (double g : ds.gain_db)
                if (!std::isfinite(g)) throw ValidationError("gain data must be finite (dataset at threshold?)");
        }
    }
    if (p.kind == FitKind::reflection_complex && p.datasets.size() != 1)
        throw ValidationError("reflection fits take exactly one dataset");
    if (p.kind == FitKind::gain_power && p.datasets.size() < 2 && p.c_p.free)
        throw ValidationError("joint gain fit needs at least two pump powers unless c_p is fixed");
    auto per = [&](const std::vector<ParamSetting>& v, const char* name) {
        if (!v.empty() && v.size() != p.datasets.size())
            throw ValidationError(std::string(name) + " settings must match the dataset count");
    };
    per(p.kappa, "kappa");
    per(p.kappa0, "kappa0");
    if (p.options.starts < 1) throw ValidationError("starts must be >= 1");
}

// ---------- model ----------

FitModel::FitModel(const FitProblem& problem) : problem_(&problem) {
    auto add = [&](std::string name, Role role, Transform tr, const ParamSetting& s, int ds,
                   double scale = 1.0) {
        if (!std::isfinite(s.initial)) throw ValidationError("parameter " + name + " has no value");
        Param p{std::move(name), role, tr, ds, s.initial, s.free, scale};
        if (tr == Transform::logistic && p.free) p.value = std::clamp(p.value, 1e-9, 1.0 - 1e-12);
        if (tr == Transform::log && p.free && !(p.value > 0.0)) p.value = 1e-9 * scale;
        params_.push_back(std::move(p));
    };
    const std::size_t nd = problem.datasets.size();
    const double rate_scale = problem.kappa.empty() ? 1.0 : std::abs(problem.kappa[0].initial);
    add("omega_offset", Role::offset, Transform::scaled, problem.omega_offset, -1,
        std::isfinite(rate_scale) && rate_scale > 0.0 ? rate_scale : 1.0);
    for (std::size_t i = 0; i < nd; ++i) {
        const std::string sfx = (problem.kind == FitKind::gain_power) ? "[" + std::to_string(i) + "]" : "";
        add("kappa" + sfx, Role::kappa, Transform::log, problem.kappa[i], int(i));
        add("kappa0" + sfx, Role::kappa0, Transform::log, problem.kappa0[i], int(i));
    }
    add("eta", Role::eta, Transform::logistic, problem.eta, -1);
    add("eta0", Role::eta0, Transform::logistic, problem.eta0, -1);
    add("fsr", Role::fsr, Transform::log, problem.fsr, -1);
    add("phi0", Role::phi0, Transform::phase, problem.phi0, -1);
    add("phi_ref", Role::phi_ref, Transform::phase, problem.phi_ref, -1);
    if (problem.kind == FitKind::gain_power) add("c_p", Role::c_p, Transform::log, problem.c_p, -1);
}

std::vector<double> FitModel::physical_values() const {
    std::vector<double> v;
    for (const Param& p : params_) v.push_back(p.value);
    return v;
}

void FitModel::set_physical(const std::vector<double>& values) {
    if (values.size() != params_.size()) throw ValidationError("parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i];
}

std::size_t FitModel::n_free() const {
    return std::size_t(std::count_if(params_.begin(), params_.end(), [](const Param& p) { return p.free; }));
}

std::size_t FitModel::n_residuals() const {
    std::size_t m = 0;
    for (const FitDataset& ds : problem_->datasets)
        m += (problem_->kind == FitKind::reflection_complex ? 2 : 1) * ds.detunings.size();
    return m;
}

Eigen::VectorXd FitModel::internal() const {
    Eigen::VectorXd u(static_cast<Eigen::Index>(n_free()));
    Eigen::Index k = 0;
    for (const Param& p : params_) {
        if (!p.free) continue;
        switch (p.transform) {
            case Transform::scaled: u(k) = p.value / p.scale; break;
            case Transform::log: u(k) = std::log(p.value); break;
            case Transform::logistic: u(k) = std::log(p.value / (1.0 - p.value)); break;
            case Transform::phase: u(k) = p.value; break;
        }
        ++k;
    }
    return u;
}

void FitModel::set_internal(const Eigen::VectorXd& u) {
    Eigen::Index k = 0;
    for (Param& p : params_) {
        if (!p.free) continue;
        switch (p.transform) {
            case Transform::scaled: p.value = u(k) * p.scale; break;
            case Transform::log: p.value = std::exp(u(k)); break;
            case Transform::logistic: p.value = logistic(u(k)); break;
            case Transform::phase: p.value = u(k); break;
        }
        ++k;
    }
}

Eigen::VectorXd FitModel::transform_derivative() const {
    Eigen::VectorXd t(static_cast<Eigen::Index>(n_free()));
    Eigen::Index k = 0;
    for (const Param& p : params_) {
        if (!p.free) continue;
        switch (p.transform) {
            case Transform::scaled: t(k) = p.scale; break;
            case Transform::log: t(k) = p.value; break;
            case Transform::logistic: t(k) = p.value * (1.0 - p.value); break;
            case Transform::phase: t(k) = 1.0; break;
        }
        ++k;
    }
    return t;
}

double FitModel::get(Role role, int dataset) const {
    for (const Param& p : params_)
        if (p.role == role && (dataset < 0 || p.dataset == dataset)) return p.value;
    throw std::logic_error("missing fit parameter");
}

double FitModel::offset() const { return get(Role::offset); }

JpaParams FitModel::jpa(std::size_t i) const {
    JpaParams j;
    j.kappa = get(Role::kappa, int(i));
    j.kappa0 = get(Role::kappa0, int(i));
    return j;
}

FabryPerotParams FitModel::fabry_perot() const {
    return FabryPerotParams{get(Role::eta), get(Role::eta0), get(Role::fsr), get(Role::phi0),
                            get(Role::phi_ref)};
}

std::optional<DriveParams> FitModel::drive(std::size_t i) const {
    if (problem_->kind != FitKind::gain_power) return std::nullopt;
    return DriveParams{get(Role::c_p) * std::sqrt(*problem_->datasets[i].pump_power)};
}

std::size_t FitModel::block_size(std::size_t i) const {
    return (problem_->kind == FitKind::reflection_complex ? 2 : 1) * problem_->datasets[i].detunings.size();
}

bool FitModel::residual_block(std::size_t i, double* out) const {
    const FabryPerotParams fp = fabry_perot();
    if (!(fp.eta > 0.0 && fp.eta <= 1.0 && fp.eta0 > 0.0 && fp.eta0 <= 1.0 && fp.fsr > 0.0))
        return false;
    const double off = offset();
    const FitDataset& ds = problem_->datasets[i];
    const JpaParams j = jpa(i);
    const auto dr = drive(i);
    try {
        if (problem_->kind == FitKind::reflection_complex) {
            for (std::size_t q = 0; q < ds.detunings.size(); ++q) {
                const cplx s = normalized_spectrum(ds.detunings[q] - off, j, fp, dr).s_tilde - ds.s_tilde[q];
                *out++ = s.real();
                *out++ = s.imag();
            }
        } else {
            for (std::size_t q = 0; q < ds.detunings.size(); ++q)
                *out++ = to_db(normalized_spectrum(ds.detunings[q] - off, j, fp, dr).g_tilde) - ds.gain_db[q];
        }
    } catch (const NumericalError&) {
        return false;
    }
    return true;
}

bool FitModel::residuals(Eigen::VectorXd& r) const {
    r.resize(Eigen::Index(n_residuals()));
    std::size_t k = 0;
    for (std::size_t i = 0; i < problem_->datasets.size(); ++i) {
        if (!residual_block(i, r.data() + k)) return false;
        k += block_size(i);
    }
    return r.allFinite();
}

bool FitModel::residuals_at(const Eigen::VectorXd& u, Eigen::VectorXd& r) const {
    FitModel m = *this;
    m.set_internal(u);
    return m.residuals(r);
}

double FitModel::objective_at(const Eigen::VectorXd& u) const {
    Eigen::VectorXd r;
    if (!residuals_at(u, r)) return INFINITY;
    return 0.5 * r.squaredNorm();
}

bool FitModel::jacobian_at(const Eigen::VectorXd& u, Eigen::MatrixXd& jac, Eigen::VectorXd& r) const {
    if (!residuals_at(u, r)) return false;
    jac = Eigen::MatrixXd::Zero(r.size(), u.size());
    std::vector<std::size_t> offsets{0};
    for (std::size_t i = 0; i < problem_->datasets.size(); ++i) offsets.push_back(offsets.back() + block_size(i));
    std::vector<int> owner;
    for (const Param& p : params_)
        if (p.free) owner.push_back(p.dataset);

    // per-dataset parameters only touch their own block
    auto eval = [&](const Eigen::VectorXd& x, int ds, Eigen::VectorXd& out) {
        FitModel m = *this;
        m.set_internal(x);
        if (ds < 0) return m.residuals(out);
        out.resize(Eigen::Index(block_size(std::size_t(ds))));
        return m.residual_block(std::size_t(ds), out.data()) && out.allFinite();
    };
    Eigen::VectorXd rp, rm;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const int ds = owner[std::size_t(j)];
        const Eigen::Index row = ds < 0 ? 0 : Eigen::Index(offsets[std::size_t(ds)]);
        const Eigen::VectorXd r0 = ds < 0 ? r : Eigen::VectorXd(r.segment(row, Eigen::Index(block_size(std::size_t(ds)))));
        const double h = 6e-6 * std::max(1.0, std::abs(u(j)));
        Eigen::VectorXd up = u, um = u;
        up(j) += h;
        um(j) -= h;
        const bool okp = eval(up, ds, rp), okm = eval(um, ds, rm);
        auto col = jac.col(j).segment(row, r0.size());
        if (okp && okm) col = (rp - rm) / (2.0 * h);
        else if (okp) col = (rp - r0) / h;
        else if (okm) col = (r0 - rm) / h;
        else return false;
    }
    return true;
}

Eigen::VectorXd FitModel::gradient_at(const Eigen::VectorXd& u) const {
    Eigen::MatrixXd jac;
    Eigen::VectorXd r;
    if (!jacobian_at(u, jac, r)) throw NumericalError("gradient undefined at this point");
    return jac.transpose() * r;
}

// ---------- drivers ----------

double FitResult::get(const std::string& name) const { return param(name).value; }

const FitParamValue& FitResult::param(const std::string& name) const {
    for (const FitParamValue& p : params)
        if (p.name == name) return p;
    throw std::out_of_range("no fit parameter named " + name);
}

namespace {

// Refines rates and pump calibration with the cavity switched off (eta = 1).
void prefit_without_cavity(FitProblem& p) {
    FitProblem q = p;
    q.eta = ParamSetting{1.0, false};
    q.eta0.free = q.fsr.free = q.phi0.free = false;
    if (q.kind == FitKind::gain_power) q.phi_ref.free = false;
    FitModel m(q);
    Eigen::VectorXd r;
    for (int tries = 0; tries < 40 && !m.residuals(r) && q.kind == FitKind::gain_power; ++tries) {
        q.c_p.initial *= 0.9;
        m = FitModel(q);
    }
    const LmOutcome o = levenberg_marquardt(m, m.internal(), 60);
    if (!o.valid) return;
    m.set_internal(o.u);
    const auto& ps = m.params();
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const FitModel::Param& x = ps[k];
        switch (x.role) {
            case FitModel::Role::kappa: if (p.kappa[x.dataset].free) p.kappa[x.dataset].initial = x.value; break;
            case FitModel::Role::kappa0: if (p.kappa0[x.dataset].free) p.kappa0[x.dataset].initial = x.value; break;
            case FitModel::Role::c_p: if (p.c_p.free) p.c_p.initial = x.value; break;
            case FitModel::Role::offset: if (p.omega_offset.free) p.omega_offset.initial = x.value; break;
            case FitModel::Role::phi_ref: if (p.phi_ref.free) p.phi_ref.initial = x.value; break;
            default: break;
        }
    }
}

struct ScanPoint {
    double fsr, phi0, eta, objective;
};

// Coarse objective scan over the cavity parameters; best points seed the starts.
std::vector<ScanPoint> scan_cavity(const FitProblem& p, int wanted, int jobs) {
    double span = 0.0, kt = INFINITY;
    for (const FitDataset& ds : p.datasets) span = std::max(span, ds.detunings.back() - ds.detunings.front());
    for (std::size_t i = 0; i < p.kappa.size(); ++i) kt = std::min(kt, p.kappa[i].initial + p.kappa0[i].initial);

    std::vector<double> fsrs{p.fsr.initial}, phis{p.phi0.initial}, etas{p.eta.initial};
    if (p.fsr.free) {
        for (double f : {0.5, 0.75, 1.5, 2.0}) fsrs.push_back(f * p.fsr.initial);
        const double lo = 0.25 * kt, hi = span;
        const int n = 16;
        for (int k = 0; k < n; ++k) fsrs.push_back(lo * std::pow(hi / lo, k / double(n - 1)));
    }
    if (p.phi0.free) {
        const int n = std::max(8, wanted);
        for (int k = 1; k < n; ++k) phis.push_back(wrap_phase(p.phi0.initial + 2.0 * kPi * k / n));
    }
    if (p.eta.free)
        for (double e : {0.97, 0.997}) etas.push_back(e);

    std::vector<ScanPoint> pts;
    for (double f : fsrs)
        for (double ph : phis)
            for (double e : etas) pts.push_back({f, ph, e, INFINITY});
    parallel_for(pts.size(), jobs, [&](std::size_t k) {
        FitProblem q = p;
        q.fsr.initial = pts[k].fsr;
        q.phi0.initial = pts[k].phi0;
        q.eta.initial = pts[k].eta;
        const FitModel m(q);
        Eigen::VectorXd r;
        if (m.residuals(r)) pts[k].objective = 0.5 * r.squaredNorm();
    });
    std::stable_sort(pts.begin(), pts.end(), [](const ScanPoint& a, const ScanPoint& b) { return a.objective < b.objective; });
    if (pts.size() > std::size_t(wanted)) pts.resize(std::size_t(wanted));
    return pts;
}

FitResult run_fit(const FitProblem& input) {
    validate(input);
    FitProblem p = input;
    if (p.kind == FitKind::reflection_complex) seed_reflection(p);
    else seed_gain(p);
    seed_common(p);
    if (p.kind == FitKind::gain_power) prefit_without_cavity(p);

    FitModel base(p);
    const std::vector<ScanPoint> seeds = scan_cavity(p, p.options.starts, p.options.jobs);
    const int starts = int(seeds.size());
    std::vector<Eigen::VectorXd> u0(starts);
    for (int s = 0; s < starts; ++s) {
        FitProblem ps = p;
        ps.fsr.initial = seeds[s].fsr;
        ps.phi0.initial = seeds[s].phi0;
        ps.eta.initial = seeds[s].eta;
        if (s > 0 && p.options.jitter > 0.0) {
            std::mt19937_64 rng(p.options.seed * 1000003ULL + unsigned(s));
            std::normal_distribution<double> nd(0.0, p.options.jitter);
            auto jit = [&](ParamSetting& q) { if (q.free) q.initial *= std::exp(nd(rng)); };
            for (auto& q : ps.kappa) jit(q);
            for (auto& q : ps.kappa0) jit(q);
            jit(ps.fsr);
            if (ps.kind == FitKind::gain_power) jit(ps.c_p);
        }
        FitModel ms(ps);
        Eigen::VectorXd r;
        // back off the pump until the seed sits below threshold
        for (int tries = 0; tries < 40 && !ms.residuals(r) && ps.kind == FitKind::gain_power; ++tries) {
            ps.c_p.initial *= 0.9;
            ms = FitModel(ps);
        }
        u0[s] = ms.internal();
    }

    // short screening run for every start, then only the best few continue
    const int screen = std::min(p.options.screen_iterations, p.options.max_iterations);
    std::vector<LmOutcome> outs(starts);
    parallel_for(std::size_t(starts), p.options.jobs, [&](std::size_t s) {
        outs[s] = levenberg_marquardt(base, u0[s], screen);
    });
    std::vector<int> order;
    for (int s = 0; s < starts; ++s)
        if (outs[s].valid) order.push_back(s);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return outs[a].f < outs[b].f; });
    order.resize(std::min<std::size_t>(order.size(), std::size_t(std::max(1, p.options.survivors))));
    parallel_for(order.size(), p.options.jobs, [&](std::size_t k) {
        LmOutcome& o = outs[order[k]];
        const double f0 = o.f0;
        const int used = o.iterations;
        o = levenberg_marquardt(base, o.u, p.options.max_iterations - used);
        o.f0 = f0;
        o.iterations += used;
    });

    FitResult res;
    int best = -1;
    for (int s = 0; s < starts; ++s) {
        res.start_initial_objectives.push_back(outs[s].f0);
        res.start_final_objectives.push_back(outs[s].f);
        if (outs[s].valid && (best < 0 || outs[s].f < outs[best].f)) best = s;
    }
    if (best < 0) throw NumericalError("no valid starting point (all seeds at or above threshold)");
    const LmOutcome& o = outs[best];
    FitModel fm = base;
    fm.set_internal(o.u);

    Eigen::MatrixXd jac;
    Eigen::VectorXd r;
    fm.jacobian_at(o.u, jac, r);
    res.best_start = best;
    res.objective = 0.5 * r.squaredNorm();
    res.residual_norm = r.norm();
    res.n_iterations = o.iterations;
    res.gradient_norm = (jac.cols() > 0) ? (jac.transpose() * r).lpNorm<Eigen::Infinity>() : 0.0;
    res.converged = res.gradient_norm <= grad_tolerance(res.objective);
    if (!res.converged)
        res.warnings.push_back("optimizer stopped before the gradient tolerance was met");

    // per-dataset residual norms
    Eigen::Index k = 0;
    for (const FitDataset& ds : p.datasets) {
        const Eigen::Index len = Eigen::Index((p.kind == FitKind::reflection_complex ? 2 : 1) * ds.detunings.size());
        res.per_dataset_residuals.push_back(r.segment(k, len).norm());
        k += len;
    }

    // Gauss-Newton covariance scaled by the reduced residual
    const Eigen::Index nf = jac.cols();
    const Eigen::Index m = jac.rows();
    res.covariance = Eigen::MatrixXd::Zero(nf, nf);
    if (nf > 0) {
        const Eigen::MatrixXd a = jac.transpose() * jac;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        const Eigen::VectorXd ev = es.eigenvalues();
        const double emax = ev.maxCoeff();
        Eigen::VectorXd inv(nf);
        for (Eigen::Index i = 0; i < nf; ++i) {
            if (ev(i) > 1e-14 * emax) inv(i) = 1.0 / ev(i);
            else { inv(i) = 0.0; res.covariance_reliable = false; }
        }
        if (!res.covariance_reliable) res.warnings.push_back("rank-deficient Jacobian; covariance unreliable");
        const double s2 = (m > nf) ? r.squaredNorm() / double(m - nf) : 0.0;
        const Eigen::MatrixXd cu = s2 * es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
        const Eigen::VectorXd t = fm.transform_derivative();
        res.covariance = t.asDiagonal() * cu * t.asDiagonal();
    }

    Eigen::Index fi = 0;
    for (const FitModel::Param& q : fm.params()) {
        FitParamValue v = make_value(q);
        if (q.transform == FitModel::Transform::phase) v.value = wrap_phase(v.value);
        if (q.free) {
            v.sigma = std::sqrt(std::max(0.0, res.covariance(fi, fi)));
            ++fi;
        }
        res.params.push_back(v);
    }
    return res;
}

}  // namespace

FitResult fit_reflection(const FitProblem& problem) {
    if (problem.kind != FitKind::reflection_complex) throw ValidationError("expected a reflection problem");
    return run_fit(problem);
}

FitResult fit_gain_multi(const FitProblem& problem) {
    if (problem.kind != FitKind::gain_power) throw ValidationError("expected a gain problem");
    return run_fit(problem);
}

FitResult fit(const FitProblem& problem) {
    return problem.kind == FitKind::reflection_complex ? fit_reflection(problem) : fit_gain_multi(problem);
}

Spectrum model_spectrum(const FitProblem& problem, const FitResult& result, std::size_t i) {
    FitProblem p = problem;
    if (p.kappa.size() != p.datasets.size()) p.kappa.assign(p.datasets.size(), ParamSetting{});
    if (p.kappa0.size() != p.datasets.size()) p.kappa0.assign(p.datasets.size(), ParamSetting{});
    auto set = [&](ParamSetting& s, const std::string& name) { s.initial = result.get(name); };
    set(p.omega_offset, "omega_offset");
    set(p.eta, "eta");
    set(p.eta0, "eta0");
    set(p.fsr, "fsr");
    set(p.phi0, "phi0");
    set(p.phi_ref, "phi_ref");
    if (p.kind == FitKind::gain_power) {
        set(p.c_p, "c_p");
        for (std::size_t d = 0; d < p.datasets.size(); ++d) {
            set(p.kappa[d], "kappa[" + std::to_string(d) + "]");
            set(p.kappa0[d], "kappa0[" + std::to_string(d) + "]");
        }
    } else {
        set(p.kappa[0], "kappa");
        set(p.kappa0[0], "kappa0");
    }
    const FitModel m(p);
    const FitDataset& ds = p.datasets.at(i);
    Spectrum sp;
    sp.detunings = ds.detunings;
    const FabryPerotParams fp = m.fabry_perot();
    const JpaParams j = m.jpa(i);
    const auto dr = m.drive(i);
    for (double d : ds.detunings) {
        const NormalizedPoint np = normalized_spectrum(d - m.offset(), j, fp, dr);
        if (p.kind == FitKind::reflection_complex) sp.values.push_back(np.s_tilde);
        else sp.powers.push_back(to_db(np.g_tilde));
    }
    sp.kind = (p.kind == FitKind::reflection_complex) ? SpectrumKind::normalized_s11 : SpectrumKind::net_gain_dB;
    return sp;
}

PhaseLine unwrap_phase_vs_frequency(std::vector<std::pair<double, double>> pts) {
    if (pts.size() < 2) throw DomainError("need at least two (omega_a, phi0) points");
    std::sort(pts.begin(), pts.end());
    std::vector<double> ph(pts.size());
    ph[0] = pts[0].second;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double d = wrap_phase(pts[i].second - ph[i - 1]);
        ph[i] = ph[i - 1] + d;
    }
    const double n = double(pts.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) { mx += pts[i].first; my += ph[i]; }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        sxx += (pts[i].first - mx) * (pts[i].first - mx);
        sxy += (pts[i].first - mx) * (ph[i] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("points need distinct frequencies");
    PhaseLine line;
    line.slope = sxy / sxx;
    const double span = pts.back().first - pts.front().first;
    line.fsr = (std::abs(line.slope) * span < 1e-12) ? INFINITY : 2.0 * kPi / line.slope;
    line.phi_R = wrap_phase(my - line.slope * mx);
    return line;
}

}  // namespace fpjpa
