#include "cli.hpp"

#include <algorithm>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"

#include "fpjpa/constants.hpp"
#include "fpjpa/design.hpp"
#include "fpjpa/errors.hpp"
#include "fpjpa/fitting.hpp"
#include "fpjpa/metrics.hpp"
#include "fpjpa/noise.hpp"
#include "fpjpa/oracle.hpp"
#include "fpjpa/parallel.hpp"
#include "io.hpp"

namespace fpjpa::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
    std::string input;
    std::string output;
    int jobs = 0;
};

struct Outcome {
    json summary;
    std::vector<std::pair<std::string, std::string>> table;
    int code = kExitOk;
    std::string reason;
};

void row(Outcome& o, const std::string& k, double v) { o.table.emplace_back(k, format_double(v)); }
void row(Outcome& o, const std::string& k, const std::string& v) { o.table.emplace_back(k, v); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json load_json_file(const std::string& path) { return parse_json(read_text(path), path); }

struct Model {
    JpaParams jpa;
    FabryPerotParams fp;
    std::optional<DriveParams> drive;
};

// `jpa` rates directly, or `circuit` + `bias` (+ `pump`) through the circuit model.
Model read_model(Fields& root) {
    Model m;
    if (root.has("jpa")) {
        m.jpa = read_jpa_rates(root.object("jpa"));
    } else if (root.has("circuit")) {
        const CircuitParams c = read_circuit(root.object("circuit"));
        Fields b = root.object("bias");
        BiasState bias;
        if (b.has("phi_ex")) bias = bias_from_flux(c, b.number("phi_ex"));
        else if (b.has("phi_ex_eff"))
            bias = bias_from_flux(c, applied_flux_for_effective(b.number("phi_ex_eff"), c.beta()));
        else bias = bias_from_current(c, b.number("current_A"), b.number("flux_per_ampere"));
        b.finish();
        m.jpa = hamiltonian_params(c, bias);
        m.jpa.kappa0 = hz_to_rad(root.number("kappa0_Hz", 0.0));
        if (root.has("pump")) {
            Fields p = root.object("pump");
            const double power = p.number("power_W");
            const double wp = hz_to_rad(p.number("frequency_Hz", rad_to_hz(2.0 * m.jpa.omega_a)));
            p.finish();
            m.jpa.omega_pump_amp = pump_amplitude(c, power, wp, m.jpa, bias).omega_pump_amp;
        }
    } else {
        throw ValidationError("model needs a 'jpa' or a 'circuit' block");
    }
    m.fp = root.has("cavity") ? read_cavity(root.object("cavity")) : FabryPerotParams{};
    if (m.jpa.omega_pump_amp > 0.0) m.drive = DriveParams{m.jpa.omega_pump_amp};
    return m;
}

std::vector<double> grid_rad(const Triple& t) {
    return GridSpec{hz_to_rad(t.a), hz_to_rad(t.b), t.n}.points();
}

// ---------- design ----------

Outcome cmd_design(const Common& c) {
    const json root = load_json_file(c.input);
    Fields f(root, "targets");
    DesignTargets t;
    t.omega_a_target = hz_to_rad(f.number("omega_a_Hz"));
    t.kappabar_target = f.number("kappabar");
    t.p_j_target = f.number("p_j");
    t.n_squids = f.integer("n_squids");
    t.l_loop_fixed = f.number("l_loop_H");
    t.l_geometric_fixed = f.number("l_geometric_H", 0.0);
    t.bias_phi_eff = f.number("bias_phi_eff");
    t.z_waveguide = f.number("z_waveguide_Ohm", 50.0);
    if (f.has("p_sq")) t.p_sq_target = f.number("p_sq");
    t.mutual = f.number("mutual_H", 0.0);
    t.l_pump_shunt = f.number("l_pump_shunt_H", 0.0);
    f.finish();

    const DesignResult r = synthesize(t);
    write_atomic(c.output, dump(json{{"circuit", circuit_json(r.circuit)},
                                     {"bias", bias_json(r.bias)},
                                     {"jpa", jpa_json(r.jpa)}}));
    Outcome o;
    o.summary = {{"c_internal_F", r.circuit.c_internal}, {"c_coupling_F", r.circuit.c_coupling},
                 {"l_j_eff_H", r.jpa.l_j_eff}};
    row(o, "C_i [fF]", r.circuit.c_internal * 1e15);
    row(o, "C_kappa [fF]", r.circuit.c_coupling * 1e15);
    row(o, "L_J [pH]", r.circuit.l_josephson * 1e12);
    row(o, "L_J^eff [pH]", r.jpa.l_j_eff * 1e12);
    row(o, "L_g [pH]", r.circuit.l_geometric * 1e12);
    row(o, "alpha_a", r.jpa.alpha_a);
    row(o, "p_SQ", r.jpa.p_sq);
    row(o, "p_kappa", r.jpa.p_kappa);
    row(o, "Kbar", r.jpa.kbar);
    row(o, "kappa/2pi [MHz]", rad_to_hz(r.jpa.kappa) * 1e-6);
    return o;
}

// ---------- simulate ----------

Outcome cmd_simulate(const Common& c, const std::string& grid, const std::string& kind, double noise,
                     unsigned seed) {
    const json root = load_json_file(c.input);
    Fields f(root, "params");
    const Model m = read_model(f);
    f.finish();
    const std::vector<double> det = grid_rad(parse_triple(grid, "--grid"));
    const int jobs = resolve_jobs(c.jobs);

    Spectrum s;
    if (kind == "reflection") {
        s = sweep(det, m.jpa, m.fp, m.drive, SpectrumKind::complex_s11, jobs);
    } else if (kind == "normalized") {
        s = sweep(det, m.jpa, m.fp, m.drive, SpectrumKind::normalized_s11, jobs);
    } else if (kind == "gain") {
        s = sweep(det, m.jpa, m.fp, m.drive.value_or(DriveParams{}), SpectrumKind::net_gain_dB, jobs);
    } else if (kind == "normalized-gain") {
        const Spectrum z = sweep(det, m.jpa, m.fp, m.drive, SpectrumKind::normalized_s11, jobs);
        s.detunings = z.detunings;
        s.kind = SpectrumKind::net_gain_dB;
        for (const cplx& v : z.values) s.powers.push_back(to_db(std::norm(v)));
    } else {
        throw ValidationError("unknown --kind '" + kind + "'");
    }
    if (noise > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, noise);
        for (auto& v : s.values) v += cplx(nd(rng), nd(rng));
        for (auto& v : s.powers) v += nd(rng);
    }
    write_atomic(c.output, spectrum_csv(s));
    Outcome o;
    o.summary = {{"points", s.size()}, {"kind", kind}};
    row(o, "points", std::to_string(s.size()));
    row(o, "kind", kind);
    row(o, "kappa/2pi [Hz]", rad_to_hz(m.jpa.kappa));
    row(o, "Omega_p/2pi [Hz]", rad_to_hz(m.jpa.omega_pump_amp));
    return o;
}

// ---------- fit ----------

struct DiskName {
    std::string disk;
    double scale;  // disk value = internal * scale
};

DiskName disk_name(const std::string& name) {
    const double hz = 1.0 / (2.0 * kPi);
    auto base = name.substr(0, name.find('['));
    auto idx = name.size() > base.size() ? name.substr(base.size()) : std::string();
    if (base == "kappa" || base == "kappa0" || base == "fsr" || base == "omega_offset")
        return {base + "_Hz" + idx, hz};
    if (base == "c_p") return {"c_p_Hz_per_sqrt_W", hz};
    if (base == "phi0" || base == "phi_ref") return {base + "_rad", 1.0};
    return {name, 1.0};
}

ParamSetting read_setting(const json& j, const std::string& ctx, double scale) {
    Fields f(j, ctx);
    ParamSetting s;
    if (f.has("initial")) s.initial = f.number("initial") * scale;
    s.free = f.boolean("free", true);
    f.finish();
    return s;
}

Outcome cmd_fit(const Common& c, int starts, std::optional<unsigned> seed) {
    const json root = load_json_file(c.input);
    const fs::path dir = fs::path(c.input).parent_path();
    Fields f(root, "manifest");
    const std::string kind = f.text("kind");
    if (kind != "reflection" && kind != "gain") throw ValidationError("manifest.kind must be reflection or gain");

    std::vector<FitDataset> data;
    const json& ds = f.raw("datasets");
    if (!ds.is_array() || ds.empty()) throw ValidationError("manifest.datasets must be a non-empty array");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Fields d(ds[i], "manifest.datasets[" + std::to_string(i) + "]");
        const fs::path p = dir / d.text("path");
        const Spectrum s = parse_spectrum_csv(read_text(p));
        FitDataset fd;
        fd.detunings = s.detunings;
        if (kind == "reflection") {
            if (!s.is_complex()) throw ValidationError(p.string() + ": reflection fit needs re,im columns");
            fd.s_tilde = s.values;
        } else {
            if (s.is_complex()) throw ValidationError(p.string() + ": gain fit needs a gain_dB column");
            fd.gain_db = s.powers;
        }
        if (d.has("pump_power_W")) fd.pump_power = d.number("pump_power_W");
        d.finish();
        data.push_back(std::move(fd));
    }
    FitProblem prob = (kind == "reflection") ? make_reflection_problem(data.front()) : make_gain_problem(data);
    if (kind == "reflection" && data.size() != 1) throw ValidationError("reflection fits take exactly one dataset");

    const double rad = 2.0 * kPi;
    if (f.has("params")) {
        Fields p = f.object("params");
        auto one = [&](const char* key, ParamSetting& s, double scale) {
            if (p.has(key)) s = read_setting(p.raw(key), std::string("params.") + key, scale);
        };
        one("eta", prob.eta, 1.0);
        one("eta0", prob.eta0, 1.0);
        one("fsr_Hz", prob.fsr, rad);
        one("phi0_rad", prob.phi0, 1.0);
        one("phi_ref_rad", prob.phi_ref, 1.0);
        one("omega_offset_Hz", prob.omega_offset, rad);
        one("c_p_Hz_per_sqrt_W", prob.c_p, rad);
        auto many = [&](const char* key, std::vector<ParamSetting>& v) {
            if (!p.has(key)) return;
            const json& j = p.raw(key);
            v.clear();
            if (j.is_array()) {
                for (std::size_t i = 0; i < j.size(); ++i)
                    v.push_back(read_setting(j[i], std::string("params.") + key + "[" + std::to_string(i) + "]", rad));
            } else {
                v.assign(data.size(), read_setting(j, std::string("params.") + key, rad));
            }
        };
        many("kappa_Hz", prob.kappa);
        many("kappa0_Hz", prob.kappa0);
        p.finish();
    }
    if (f.has("options")) {
        Fields o = f.object("options");
        prob.options.starts = o.integer("starts", prob.options.starts);
        prob.options.max_iterations = o.integer("max_iterations", prob.options.max_iterations);
        prob.options.screen_iterations = o.integer("screen_iterations", prob.options.screen_iterations);
        prob.options.survivors = o.integer("survivors", prob.options.survivors);
        prob.options.jitter = o.number("jitter", prob.options.jitter);
        prob.options.seed = unsigned(o.integer("seed", 0));
        o.finish();
    }
    f.finish();
    if (starts > 0) prob.options.starts = starts;
    if (seed) prob.options.seed = *seed;
    prob.options.jobs = resolve_jobs(c.jobs);

    const FitResult r = fit(prob);

    json params = json::object();
    std::vector<double> free_scale;
    for (const FitParamValue& p : r.params) {
        const DiskName d = disk_name(p.name);
        params[d.disk] = {{"value", p.value * d.scale}, {"sigma", p.sigma * d.scale}, {"free", p.free}};
        if (p.free) free_scale.push_back(d.scale);
    }
    json cov = json::array();
    for (Eigen::Index i = 0; i < r.covariance.rows(); ++i) {
        json rowj = json::array();
        for (Eigen::Index j = 0; j < r.covariance.cols(); ++j)
            rowj.push_back(r.covariance(i, j) * free_scale[std::size_t(i)] * free_scale[std::size_t(j)]);
        cov.push_back(rowj);
    }
    json free_names = json::array();
    for (const FitParamValue& p : r.params)
        if (p.free) free_names.push_back(disk_name(p.name).disk);

    std::vector<std::string> model_files;
    const fs::path out(c.output);
    for (std::size_t i = 0; i < prob.datasets.size(); ++i) {
        fs::path mp = out.parent_path() / (out.stem().string() + "_model_" + std::to_string(i) + ".csv");
        write_atomic(mp, spectrum_csv(model_spectrum(prob, r, i)));
        model_files.push_back(mp.filename().string());
    }
    const json result{{"kind", kind},
                      {"params", params},
                      {"covariance", cov},
                      {"covariance_params", free_names},
                      {"covariance_reliable", r.covariance_reliable},
                      {"residual_norm", r.residual_norm},
                      {"objective", r.objective},
                      {"iterations", r.n_iterations},
                      {"converged", r.converged},
                      {"gradient_norm", r.gradient_norm},
                      {"best_start", r.best_start},
                      {"start_objectives", r.start_final_objectives},
                      {"per_dataset_residuals", r.per_dataset_residuals},
                      {"warnings", r.warnings},
                      {"model_files", model_files}};
    write_atomic(c.output, dump(result));

    Outcome o;
    o.summary = {{"converged", r.converged}, {"objective", r.objective}};
    for (const FitParamValue& p : r.params) {
        const DiskName d = disk_name(p.name);
        o.table.emplace_back(d.disk, format_double(p.value * d.scale) +
                                         (p.free ? " +- " + format_double(p.sigma * d.scale) : " (fixed)"));
    }
    row(o, "objective", r.objective);
    if (!r.converged) {
        o.code = kExitNumerical;
        o.reason = "fit did not reach the gradient tolerance";
    }
    return o;
}

// ---------- noise ----------

// Pump giving |C|^2 = g at a detuning, by bisection below threshold.
double pump_for_signal_gain(double g, double delta, const JpaParams& jpa, const FabryPerotParams& fp) {
    const double top = parametric_threshold(jpa, fp) * (1.0 - 1e-9);
    auto gain = [&](double om) { return std::norm(io_coefficients(delta, jpa, fp, DriveParams{om}).c); };
    if (gain(top) < g) throw ThresholdError("requested gain not reachable below threshold");
    double lo = 0.0, hi = top;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * top; ++i) {
        const double mid = 0.5 * (lo + hi);
        (gain(mid) < g ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Outcome cmd_noise(const Common& c) {
    const json root = load_json_file(c.input);
    Fields f(root, "noise");
    Outcome o;
    if (f.has("calibration")) {
        Fields k = f.object("calibration");
        CalibrationInputs in;
        in.p_on_s = k.number("p_on_s_W");
        in.p_on_n = k.number("p_on_n_W");
        in.p_off_s = k.number("p_off_s_W");
        in.p_off_n = k.number("p_off_n_W");
        in.p_calib_s = k.number("p_calib_s_W");
        in.eta0 = k.number("eta0");
        in.omega_s = hz_to_rad(k.number("signal_Hz"));
        in.b_if = k.number("b_if_Hz");
        if (k.has("s11_off_sq")) {
            in.s11_off_sq = k.number("s11_off_sq");
        } else {
            const double kap = hz_to_rad(k.number("kappa_Hz")), kap0 = hz_to_rad(k.number("kappa0_Hz"));
            in.s11_off_sq = s11_off_sq_from_rates(kap, kap0);
        }
        const double vac = k.number("vacuum_photons", kVacuumPhotons);
        in.p_vac_n = noise_power_from_photons(vac, in.omega_s, in.b_if);
        k.finish();
        f.finish();
        const AddedNoise a = added_noise_from_snr(in);
        write_atomic(c.output, dump(json{{"p_fpj_n_W", a.p_fpj_n},
                                         {"n_fpj", a.n_fpj},
                                         {"p_vac_n_W", in.p_vac_n},
                                         {"s11_off_sq", in.s11_off_sq}}));
        o.summary = {{"n_fpj", a.n_fpj}};
        row(o, "P_FPJ^N [W]", a.p_fpj_n);
        row(o, "N_FPJ [photons]", a.n_fpj);
        return o;
    }
    Fields mf = f.object("model");
    const Model m = read_model(mf);
    const double delta = hz_to_rad(mf.number("detuning_Hz", 0.0));
    if (mf.has("gains_dB")) {
        const json& gl = mf.raw("gains_dB");
        if (!gl.is_array() || gl.empty()) throw ValidationError("model.gains_dB must be a non-empty array");
        mf.finish();
        f.finish();
        std::string csv = "gain_dB,n_fpj\n";
        for (const json& g : gl) {
            if (!g.is_number()) throw ValidationError("model.gains_dB entries must be numbers");
            const double gd = g.get<double>();
            const double om = pump_for_signal_gain(from_db(gd), delta, m.jpa, m.fp);
            const EffectiveAmp e = effective_amplifier(io_coefficients(delta, m.jpa, m.fp, DriveParams{om}));
            csv += format_double(gd) + "," + format_double(e.n_fpj) + "\n";
        }
        write_atomic(c.output, csv);
        o.summary = {{"rows", gl.size()}};
        row(o, "rows", std::to_string(gl.size()));
        return o;
    }
    mf.finish();
    f.finish();
    const IOCoefficients k = io_coefficients(delta, m.jpa, m.fp, m.drive.value_or(DriveParams{}));
    const EffectiveAmp e = effective_amplifier(k);
    write_atomic(c.output, dump(json{{"g_fpj_dB", to_db(e.g_fpj)},
                                     {"g_eff", e.g_eff},
                                     {"eta_eff", e.eta_eff},
                                     {"n_fpj", e.n_fpj},
                                     {"approximate", e.approximate},
                                     {"unitarity_defect", k.unitarity_defect()}}));
    o.summary = {{"n_fpj", e.n_fpj}, {"approximate", e.approximate}};
    row(o, "G_FPJ [dB]", to_db(e.g_fpj));
    row(o, "eta_eff", e.eta_eff);
    row(o, "N_FPJ [photons]", e.n_fpj);
    return o;
}

// ---------- metrics ----------

json spectrum_metrics(const std::vector<double>& det, const std::vector<double>& g_lin, Outcome& o) {
    json j;
    const Bandwidth b = bandwidth_3db(det, g_lin);
    j["peak_gain_dB"] = to_db(b.peak_value);
    j["peak_detuning_Hz"] = rad_to_hz(b.peak_position);
    j["bandwidth_Hz"] = rad_to_hz(b.full_width);
    j["half_bandwidth_Hz"] = rad_to_hz(b.half_width);
    j["lower_Hz"] = rad_to_hz(b.lower);
    j["upper_Hz"] = rad_to_hz(b.upper);
    j["multi_lobe"] = b.multi_lobe;
    row(o, "peak gain [dB]", to_db(b.peak_value));
    row(o, "3 dB bandwidth [Hz]", rad_to_hz(b.full_width));
    if (det.front() <= 0.0 && det.back() >= 0.0) {
        const std::size_t k = std::size_t(std::lower_bound(det.begin(), det.end(), 0.0) - det.begin());
        double gc = g_lin[k];
        if (k > 0 && det[k] != 0.0) {
            const double t = -det[k - 1] / (det[k] - det[k - 1]);
            gc = g_lin[k - 1] + t * (g_lin[k] - g_lin[k - 1]);
        }
        j["ripple_visibility"] = ripple_visibility(g_lin, gc);
        row(o, "ripple visibility", j["ripple_visibility"].get<double>());
    }
    return j;
}

Outcome cmd_metrics(const Common& c, double kappa_tot_hz) {
    const std::string text = read_text(c.input);
    const bool is_json = !text.empty() && text.find_first_not_of(" \t\r\n") != std::string::npos &&
                         text[text.find_first_not_of(" \t\r\n")] == '{';
    Outcome o;
    json j;
    if (!is_json) {
        const Spectrum s = parse_spectrum_csv(text);
        std::vector<double> g;
        if (s.is_complex()) for (const cplx& v : s.values) g.push_back(std::norm(v));
        else for (double v : s.powers) g.push_back(from_db(v));
        j = spectrum_metrics(s.detunings, g, o);
        if (kappa_tot_hz > 0.0)
            j["gb_exponent"] = gb_exponent(hz_to_rad(j["half_bandwidth_Hz"].get<double>()), from_db(j["peak_gain_dB"].get<double>()),
                                           hz_to_rad(kappa_tot_hz));
    } else {
        const json root = parse_json(text, c.input);
        Fields f(root, "metrics");
        Model m = read_model(f);
        Fields gf = f.object("grid");
        const std::vector<double> det = grid_rad(Triple{gf.number("start_Hz"), gf.number("stop_Hz"),
                                                        std::size_t(gf.integer("n"))});
        gf.finish();
        if (f.has("target_gain_dB")) {
            m.jpa.omega_pump_amp = pump_for_peak_gain(f.number("target_gain_dB"), m.jpa, m.fp, det);
            m.drive = DriveParams{m.jpa.omega_pump_amp};
        }
        const double prefactor = f.number("saturation_prefactor", 1.0);
        f.finish();
        const DriveParams dr = m.drive.value_or(DriveParams{});
        const Spectrum s = sweep(det, m.jpa, m.fp, m.drive, SpectrumKind::normalized_s11, resolve_jobs(c.jobs));
        std::vector<double> g;
        for (const cplx& v : s.values) g.push_back(std::norm(v));
        j = spectrum_metrics(det, g, o);
        const double kt = m.jpa.kappa + m.jpa.kappa0;
        j["gb_exponent"] = gb_exponent(hz_to_rad(j["half_bandwidth_Hz"].get<double>()),
                                       from_db(j["peak_gain_dB"].get<double>()), kt);
        j["net_peak_gain_dB"] = j["peak_gain_dB"].get<double>() + to_db(m.fp.eta0 * m.fp.eta0);
        j["parametric_threshold_Hz"] = rad_to_hz(parametric_threshold(m.jpa, m.fp));
        j["omega_pump_amp_Hz"] = rad_to_hz(dr.omega_pump_amp);
        j["saturation_input_flux"] = saturation_input_flux(kt, from_db(j["peak_gain_dB"].get<double>()),
                                                           m.jpa.kerr, prefactor);
        row(o, "gb exponent", j["gb_exponent"].get<double>());
    }
    if (j.contains("saturation_input_flux") && !std::isfinite(j["saturation_input_flux"].get<double>()))
        j["saturation_input_flux"] = nullptr;
    write_atomic(c.output, dump(j));
    o.summary = {{"peak_gain_dB", j["peak_gain_dB"]}, {"bandwidth_Hz", j["bandwidth_Hz"]}};
    return o;
}

// ---------- visibility map ----------

Outcome cmd_visibility(const Common& c, const std::string& eta_grid, const std::string& fsr_grid) {
    const json root = load_json_file(c.input);
    Fields f(root, "base");
    VisibilityBaseline b;
    b.kappa = hz_to_rad(f.number("kappa_Hz", rad_to_hz(b.kappa)));
    b.kappa0 = hz_to_rad(f.number("kappa0_Hz", rad_to_hz(b.kappa0)));
    b.eta0 = f.number("eta0", b.eta0);
    b.phi0 = f.number("phi0_rad", b.phi0);
    b.baseline_gain_db = f.number("baseline_gain_dB", b.baseline_gain_db);
    VisibilityGrid g;
    if (f.has("grid")) {
        Fields gf = f.object("grid");
        g.n = gf.integer("n", g.n);
        g.span_fsr = gf.number("span_fsr", g.span_fsr);
        gf.finish();
    }
    f.finish();
    const Triple te = parse_triple(eta_grid, "--eta-grid"), tf = parse_triple(fsr_grid, "--fsr-grid");
    const std::vector<double> ome = GridSpec{te.a, te.b, te.n}.points();
    const std::vector<double> fob = GridSpec{tf.a, tf.b, tf.n}.points();
    const VisibilityMap vm = visibility_map(ome, fob, b, g, resolve_jobs(c.jobs));
    std::string csv = "one_minus_eta,fsr_over_beff,visibility\n";
    for (std::size_t i = 0; i < ome.size(); ++i)
        for (std::size_t k = 0; k < fob.size(); ++k)
            csv += format_double(ome[i]) + "," + format_double(fob[k]) + "," + format_double(vm.values[i][k]) + "\n";
    write_atomic(c.output, csv);
    Outcome o;
    o.summary = {{"cells", ome.size() * fob.size()}, {"b_eff_Hz", rad_to_hz(vm.b_eff)}};
    row(o, "cells", std::to_string(ome.size() * fob.size()));
    row(o, "B_eff [Hz]", rad_to_hz(vm.b_eff));
    row(o, "Omega_p/2pi [Hz]", rad_to_hz(vm.omega_pump_amp));
    return o;
}

// ---------- oracle ----------

json cplx_json(cplx z) { return json::array({z.real(), z.imag()}); }

Outcome cmd_oracle(const Common& c) {
    const json root = load_json_file(c.input);
    Fields f(root, "oracle");
    const std::string kind = f.text("kind");
    json out;
    if (kind == "squid") {
        const double phi = f.number("phi"), beta = f.number("beta"), phic = f.number("phi_c");
        f.finish();
        const oracle::SquidSolution s = oracle::squid_numeric_charge_flux(phi, beta, phic);
        const ChargeFluxSeries cf = charge_flux_expansion(beta, phic);
        out = {{"theta", s.theta}, {"theta_c", s.theta_c}, {"residual", s.residual}, {"series", cf(phi)}};
    } else {
        const Model m = read_model(f);
        const double delta = hz_to_rad(f.number("detuning_Hz", 0.0));
        const DriveParams dr = m.drive.value_or(DriveParams{});
        if (kind == "series") {
            f.finish();
            const oracle::SeriesResult s = oracle::truncated_series_reflection(delta, m.jpa, m.fp, {});
            out = {{"value", cplx_json(s.value)}, {"terms", s.terms}, {"closed_form", cplx_json(reflection_spectrum(delta, m.jpa, m.fp))}};
        } else if (kind == "matrix") {
            f.finish();
            const oracle::IoOracle io = oracle::signal_idler_io(delta, m.jpa, m.fp, dr);
            out = {{"c", cplx_json(io.c)}, {"u", cplx_json(io.u)}, {"v", cplx_json(io.v)}, {"d", cplx_json(io.d)},
                   {"closed_form", cplx_json(gain_spectrum(delta, m.jpa, m.fp, dr))}};
        } else if (kind == "time-domain") {
            f.finish();
            const oracle::TimeDomainResult t = oracle::time_domain_delay_simulation(m.jpa, m.fp, delta);
            out = {{"response", cplx_json(t.response)}, {"steady", t.steady}, {"drift", t.drift},
                   {"closed_form", cplx_json(reflection_spectrum(delta, m.jpa, m.fp))}};
        } else {
            throw ValidationError("oracle.kind must be squid, series, matrix or time-domain");
        }
    }
    write_atomic(c.output, dump(out));
    Outcome o;
    o.summary = {{"kind", kind}};
    row(o, "kind", kind);
    return o;
}

void print(std::ostream& out, const std::string& cmd, const Common& c, const Outcome& o) {
    json s = o.summary;
    s["command"] = cmd;
    s["status"] = o.code == kExitOk ? "ok" : "numerical_failure";
    s["output"] = c.output;
    out << s.dump() << "\n";
    std::size_t w = 0;
    for (const auto& [k, v] : o.table) w = std::max(w, k.size());
    for (const auto& [k, v] : o.table) out << std::left << std::setw(int(w) + 2) << k << v << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fabry-Perot JPA modeling toolkit", "fpjpa"};
    app.require_subcommand(1);
    Common com;
    app.add_option("--jobs", com.jobs, "worker threads (default: FPJPA_JOBS or 1)")->check(CLI::PositiveNumber);

    auto io_opts = [&](CLI::App* s) {
        s->add_option("-i,--input", com.input, "input file")->required();
        s->add_option("-o,--output", com.output, "output file")->required();
        s->add_option("--jobs", com.jobs, "worker threads")->check(CLI::PositiveNumber);
    };
    CLI::App* design = app.add_subcommand("design", "circuit values from design targets");
    io_opts(design);

    std::string grid, kind = "normalized";
    double noise = 0.0;
    unsigned seed = 0;
    CLI::App* simulate = app.add_subcommand("simulate", "reflection or gain spectrum on a detuning grid");
    io_opts(simulate);
    simulate->add_option("--grid", grid, "start_Hz,stop_Hz,n")->required();
    simulate->add_option("--kind", kind, "reflection | normalized | gain | normalized-gain")
        ->check(CLI::IsMember({"reflection", "normalized", "gain", "normalized-gain"}));
    simulate->add_option("--noise", noise, "gaussian noise std (per quadrature or dB)")->check(CLI::NonNegativeNumber);
    simulate->add_option("--seed", seed, "noise seed");

    int starts = 0;
    CLI::App* fitc = app.add_subcommand("fit", "fit spectra listed in a manifest");
    io_opts(fitc);
    fitc->add_option("--starts", starts, "multi-start count")->check(CLI::PositiveNumber);
    CLI::Option* seed_opt = fitc->add_option("--seed", seed, "seed for start jitter");

    CLI::App* noisec = app.add_subcommand("noise", "added noise from a calibration record or a model");
    io_opts(noisec);

    double kappa_tot = 0.0;
    CLI::App* metrics = app.add_subcommand("metrics", "bandwidth, visibility and gain-bandwidth exponent");
    io_opts(metrics);
    metrics->add_option("--kappa-tot-Hz", kappa_tot, "total linewidth for the exponent (CSV input)");

    std::string eta_grid, fsr_grid;
    CLI::App* vis = app.add_subcommand("visibility-map", "ripple visibility over (1 - eta, fsr / B_eff)");
    io_opts(vis);
    vis->add_option("--eta-grid", eta_grid, "a,b,n over 1 - eta")->required();
    vis->add_option("--fsr-grid", fsr_grid, "a,b,n over fsr / B_eff")->required();

    CLI::App* orc = app.add_subcommand("oracle", "");
    orc->group("");
    io_opts(orc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    std::string cmd = app.get_subcommands().front()->get_name();
    try {
        Outcome o;
        if (cmd == "design") o = cmd_design(com);
        else if (cmd == "simulate") o = cmd_simulate(com, grid, kind, noise, seed);
        else if (cmd == "fit") o = cmd_fit(com, starts, seed_opt->count() ? std::optional<unsigned>(seed) : std::nullopt);
        else if (cmd == "noise") o = cmd_noise(com);
        else if (cmd == "metrics") o = cmd_metrics(com, kappa_tot);
        else if (cmd == "visibility-map") o = cmd_visibility(com, eta_grid, fsr_grid);
        else o = cmd_oracle(com);
        print(out, cmd, com, o);
        if (o.code != kExitOk) err << "fpjpa " << cmd << ": " << o.reason << "\n";
        return o.code;
    } catch (const ValidationError& e) {
        err << "fpjpa " << cmd << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        err << "fpjpa " << cmd << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        err << "fpjpa " << cmd << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "fpjpa " << cmd << ": " << e.what() << "\n";
        return kExitNumerical;
    }
}

}  // namespace fpjpa::cli
