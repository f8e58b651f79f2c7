#include "io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"

namespace fpjpa::cli {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + path.string());
        out << content;
        out.flush();
        if (!out) throw ValidationError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ValidationError("cannot move output into place: " + path.string());
    }
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(what + ": malformed JSON (" + e.what() + ")");
    }
}

namespace {

double parse_number(const std::string& tok, std::size_t line) {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = b + tok.size();
    while (b < e && *b == ' ') ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
        throw ValidationError("csv line " + std::to_string(line) + ": bad number '" + tok + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
}

}  // namespace

Spectrum parse_spectrum_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty spectrum file");
    const std::string header = strip(line);
    Spectrum s;
    std::size_t cols;
    if (header == "detuning_Hz,re,im") {
        s.kind = SpectrumKind::normalized_s11;
        cols = 3;
    } else if (header == "detuning_Hz,gain_dB") {
        s.kind = SpectrumKind::net_gain_dB;
        cols = 2;
    } else {
        throw ValidationError("unknown spectrum header '" + header + "'");
    }
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        line = strip(line);
        if (line.empty()) continue;
        const auto tok = split(line, ',');
        if (tok.size() != cols)
            throw ValidationError("csv line " + std::to_string(n) + ": expected " + std::to_string(cols) + " columns");
        s.detunings.push_back(hz_to_rad(parse_number(tok[0], n)));
        if (cols == 3) s.values.emplace_back(parse_number(tok[1], n), parse_number(tok[2], n));
        else s.powers.push_back(parse_number(tok[1], n));
    }
    check_detunings(s.detunings);
    return s;
}

std::string spectrum_csv(const Spectrum& s) {
    std::string out = s.is_complex() ? "detuning_Hz,re,im\n" : "detuning_Hz,gain_dB\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += format_double(rad_to_hz(s.detunings[i]));
        if (s.is_complex()) {
            out += ',' + format_double(s.values[i].real()) + ',' + format_double(s.values[i].imag());
        } else {
            double v = s.powers[i];
            if (s.kind == SpectrumKind::net_gain_linear) v = to_db(v);
            out += ',' + format_double(v);
        }
        out += '\n';
    }
    return out;
}

Fields::Fields(const json& j, std::string context) : j_(&j), ctx_(std::move(context)) {
    if (!j.is_object()) throw ValidationError(ctx_ + ": expected a JSON object");
}

bool Fields::has(const std::string& key) const { return j_->contains(key); }

const json& Fields::at(const std::string& key) {
    if (!j_->contains(key)) throw ValidationError(ctx_ + ": missing field '" + key + "'");
    used_.insert(key);
    return (*j_)[key];
}

double Fields::number(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number()) throw ValidationError(ctx_ + ": field '" + key + "' must be a plain number");
    return v.get<double>();
}

double Fields::number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
}

int Fields::integer(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number_integer()) throw ValidationError(ctx_ + ": field '" + key + "' must be an integer");
    return v.get<int>();
}

int Fields::integer(const std::string& key, int fallback) { return has(key) ? integer(key) : fallback; }

bool Fields::boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) throw ValidationError(ctx_ + ": field '" + key + "' must be true or false");
    return v.get<bool>();
}

std::string Fields::text(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) throw ValidationError(ctx_ + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

std::string Fields::text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : fallback;
}

const json& Fields::raw(const std::string& key) { return at(key); }

Fields Fields::object(const std::string& key) { return Fields(at(key), ctx_ + "." + key); }

void Fields::finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it)
        if (!used_.count(it.key())) throw ValidationError(ctx_ + ": unknown field '" + it.key() + "'");
}

CircuitParams read_circuit(Fields f) {
    CircuitParams c;
    c.n_squids = f.integer("n_squids");
    c.l_loop = f.number("l_loop_H");
    c.l_josephson = f.number("l_josephson_H");
    c.l_geometric = f.number("l_geometric_H");
    c.c_internal = f.number("c_internal_F");
    c.c_coupling = f.number("c_coupling_F");
    c.z_waveguide = f.number("z_waveguide_Ohm", 50.0);
    c.mutual = f.number("mutual_H", 0.0);
    c.l_pump_shunt = f.number("l_pump_shunt_H", 0.0);
    f.finish();
    validate(c);
    return c;
}

json circuit_json(const CircuitParams& c) {
    return json{{"n_squids", c.n_squids},         {"l_loop_H", c.l_loop},
                {"l_josephson_H", c.l_josephson}, {"l_geometric_H", c.l_geometric},
                {"c_internal_F", c.c_internal},   {"c_coupling_F", c.c_coupling},
                {"z_waveguide_Ohm", c.z_waveguide}, {"mutual_H", c.mutual},
                {"l_pump_shunt_H", c.l_pump_shunt}};
}

json bias_json(const BiasState& b) {
    return json{{"phi_ex", b.phi_ex},
                {"phi_ex_eff", b.phi_ex_eff},
                {"circulating", b.circulating},
                {"branch", b.branch}};
}

json jpa_json(const JpaParams& p) {
    return json{{"omega_a_Hz", rad_to_hz(p.omega_a)},
                {"kappa_Hz", rad_to_hz(p.kappa)},
                {"kappa0_Hz", rad_to_hz(p.kappa0)},
                {"kerr_Hz", rad_to_hz(p.kerr)},
                {"omega_pump_amp_Hz", rad_to_hz(p.omega_pump_amp)},
                {"alpha_a", p.alpha_a},
                {"alpha0", p.alpha0},
                {"p_j", p.p_j},
                {"p_sq", p.p_sq},
                {"p_kappa", p.p_kappa},
                {"kbar", p.kbar},
                {"omegabar_p", p.omegabar_p},
                {"kappabar", p.kappabar},
                {"l_j_eff_H", p.l_j_eff},
                {"l_tot_H", p.l_tot},
                {"c_tot_F", p.c_tot}};
}

JpaParams read_jpa_rates(Fields f) {
    JpaParams p;
    p.kappa = hz_to_rad(f.number("kappa_Hz"));
    p.kappa0 = hz_to_rad(f.number("kappa0_Hz", 0.0));
    p.omega_pump_amp = hz_to_rad(f.number("omega_pump_amp_Hz", 0.0));
    p.kerr = hz_to_rad(f.number("kerr_Hz", 0.0));
    // derived values written by `design` are carried through unchanged
    p.omega_a = hz_to_rad(f.number("omega_a_Hz", 0.0));
    p.alpha_a = f.number("alpha_a", 0.0);
    p.alpha0 = f.number("alpha0", 0.0);
    p.p_j = f.number("p_j", 0.0);
    p.p_sq = f.number("p_sq", 0.0);
    p.p_kappa = f.number("p_kappa", 0.0);
    p.kbar = f.number("kbar", 0.0);
    p.omegabar_p = f.number("omegabar_p", 0.0);
    p.kappabar = f.number("kappabar", 0.0);
    p.l_j_eff = f.number("l_j_eff_H", 0.0);
    p.l_tot = f.number("l_tot_H", 0.0);
    p.c_tot = f.number("c_tot_F", 0.0);
    f.finish();
    if (!(p.kappa > 0.0)) throw ValidationError("kappa_Hz must be positive");
    if (!(p.kappa0 >= 0.0)) throw ValidationError("kappa0_Hz must be non-negative");
    if (!(p.omega_pump_amp >= 0.0)) throw ValidationError("omega_pump_amp_Hz must be non-negative");
    return p;
}

FabryPerotParams read_cavity(Fields f) {
    FabryPerotParams fp;
    fp.eta = f.number("eta", 1.0);
    fp.eta0 = f.number("eta0", 1.0);
    fp.fsr = hz_to_rad(f.number("fsr_Hz"));
    fp.phi0 = f.number("phi0_rad", 0.0);
    fp.phi_ref = f.number("phi_ref_rad", 0.0);
    f.finish();
    validate(fp);
    return fp;
}

json cavity_json(const FabryPerotParams& fp) {
    return json{{"eta", fp.eta},
                {"eta0", fp.eta0},
                {"fsr_Hz", rad_to_hz(fp.fsr)},
                {"phi0_rad", fp.phi0},
                {"phi_ref_rad", fp.phi_ref}};
}

Triple parse_triple(const std::string& s, const std::string& flag) {
    const auto tok = split(s, ',');
    if (tok.size() != 3) throw ValidationError(flag + " expects a,b,n");
    Triple t;
    t.a = parse_number(tok[0], 0);
    t.b = parse_number(tok[1], 0);
    const double n = parse_number(tok[2], 0);
    if (!(n >= 2.0) || n != std::floor(n)) throw ValidationError(flag + ": n must be an integer >= 2");
    if (!(t.b > t.a)) throw ValidationError(flag + ": need a < b");
    t.n = std::size_t(n);
    return t;
}

}  // namespace fpjpa::cli
