#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "../tools/cli.hpp"
#include "../tools/io.hpp"
#include "fpjpa/constants.hpp"

namespace fs = std::filesystem;
using namespace fpjpa;
using fpjpa::cli::json;

namespace {

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() / ("fpjpa_cli_" + std::to_string(::getpid()) + "_" +
                                           std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(dir);
    }
    ~Sandbox() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }
    std::string read(const std::string& name) const { return cli::read_text(dir / name); }
};

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "fpjpa");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

const char* kDesign = R"({"omega_a_Hz": 9.5e9, "kappabar": 0.04, "p_j": 0.8, "n_squids": 5,
  "l_loop_H": 20e-12, "l_geometric_H": 80e-12, "bias_phi_eff": 1.0471975511965976})";

// rates in Hz; kappa = 1 MHz keeps the fit cheap
const char* kModel = R"({"jpa": {"omega_a_Hz": 6e9, "kappa_Hz": 1e6, "kappa0_Hz": 8e4},
  "cavity": {"eta": 0.99, "eta0": 0.85, "fsr_Hz": 5e5, "phi0_rad": 0.7, "phi_ref_rad": 0.1}})";

}  // namespace

TEST_CASE("design writes the synthesized circuit") {
    Sandbox sb;
    sb.write("t.json", kDesign);
    const Run r = run({"design", "-i", sb.path("t.json"), "-o", sb.path("d.json")});
    REQUIRE(r.code == 0);
    const json d = json::parse(sb.read("d.json"));
    CHECK(d["circuit"]["c_internal_F"].get<double>() == doctest::Approx(449.959e-15).epsilon(1e-5));
    CHECK(d["circuit"]["c_coupling_F"].get<double>() == doctest::Approx(84.6467e-15).epsilon(1e-5));
    CHECK(r.out.find("\"command\":\"design\"") != std::string::npos);
}

TEST_CASE("simulate converts Hz on disk and reaches -1 at resonance") {
    Sandbox sb;
    sb.write("m.json", R"({"jpa": {"omega_a_Hz": 6e9, "kappa_Hz": 1e6, "kappa0_Hz": 0}})");
    REQUIRE(run({"simulate", "-i", sb.path("m.json"), "-o", sb.path("s.csv"), "--grid", "-2e6,2e6,5",
                 "--kind", "reflection"}).code == 0);
    const std::string csv = sb.read("s.csv");
    CHECK(csv.rfind("detuning_Hz,re,im\n", 0) == 0);
    CHECK(csv.find("\n0,-1,0\n") != std::string::npos);
    const Spectrum s = cli::parse_spectrum_csv(csv);
    CHECK(s.detunings.front() == doctest::Approx(-2e6 * 2.0 * kPi));
    CHECK(cli::spectrum_csv(s) == csv);
}

TEST_CASE("CSV doubles round-trip exactly") {
    Spectrum s;
    s.kind = SpectrumKind::normalized_s11;
    for (int i = 0; i < 50; ++i) {
        const double d = hz_to_rad(1e6 * (i - 25) / 7.0);
        s.detunings.push_back(d);
        s.values.emplace_back(std::sin(d * 1e-6) / 3.0, std::exp(-i / 9.0));
    }
    const std::string csv = cli::spectrum_csv(s);
    const Spectrum back = cli::parse_spectrum_csv(csv);
    REQUIRE(back.detunings.size() == s.detunings.size());
    for (std::size_t i = 0; i < s.detunings.size(); ++i) CHECK(back.values[i] == s.values[i]);
    CHECK(cli::spectrum_csv(back) == csv);
}

TEST_CASE("outputs are byte-identical across runs and worker counts") {
    Sandbox sb;
    sb.write("m.json", kModel);
    const std::vector<std::string> base{"simulate", "-i", sb.path("m.json"), "--grid", "-3e6,3e6,801",
                                        "--noise", "0.01", "--seed", "4"};
    auto with = [&](const std::string& out, const std::string& jobs) {
        auto a = base;
        a.insert(a.end(), {"-o", sb.path(out), "--jobs", jobs});
        return run(a).code;
    };
    REQUIRE(with("a.csv", "1") == 0);
    REQUIRE(with("b.csv", "1") == 0);
    REQUIRE(with("c.csv", "4") == 0);
    CHECK(sb.read("a.csv") == sb.read("b.csv"));
    CHECK(sb.read("a.csv") == sb.read("c.csv"));
}

TEST_CASE("fit recovers a simulated reflection bundle") {
    Sandbox sb;
    sb.write("m.json", kModel);
    REQUIRE(run({"simulate", "-i", sb.path("m.json"), "-o", sb.path("data.csv"), "--grid", "-1.1e6,1.1e6,601"}).code == 0);
    sb.write("fit.json", R"({"kind": "reflection", "datasets": [{"path": "data.csv"}],
      "options": {"starts": 4}})");
    const Run r = run({"fit", "-i", sb.path("fit.json"), "-o", sb.path("res.json")});
    REQUIRE(r.code == 0);
    const json res = json::parse(sb.read("res.json"));
    CHECK(res["params"]["kappa_Hz"]["value"].get<double>() == doctest::Approx(1e6).epsilon(1e-6));
    CHECK(res["params"]["fsr_Hz"]["value"].get<double>() == doctest::Approx(5e5).epsilon(1e-6));
    CHECK(res["params"]["eta0"]["value"].get<double>() == doctest::Approx(0.85).epsilon(1e-6));
    CHECK(res["converged"].get<bool>());
    CHECK(fs::exists(sb.dir / "res_model_0.csv"));
}

TEST_CASE("metrics and noise on a model") {
    Sandbox sb;
    sb.write("g.json", R"({"jpa": {"omega_a_Hz": 6e9, "kappa_Hz": 1e6, "kappa0_Hz": 0},
      "cavity": {"eta": 1, "eta0": 1, "fsr_Hz": 1e7},
      "grid": {"start_Hz": -1e6, "stop_Hz": 1e6, "n": 4001}, "target_gain_dB": 20})");
    REQUIRE(run({"metrics", "-i", sb.path("g.json"), "-o", sb.path("g_out.json")}).code == 0);
    const json g = json::parse(sb.read("g_out.json"));
    CHECK(g["peak_gain_dB"].get<double>() == doctest::Approx(20.0).epsilon(1e-8));
    CHECK(g["gb_exponent"].get<double>() == doctest::Approx(0.5).epsilon(0.01));
    CHECK(g["saturation_input_flux"].is_null());

    sb.write("n.json", R"({"model": {"jpa": {"omega_a_Hz": 6e9, "kappa_Hz": 1e6, "kappa0_Hz": 0},
      "cavity": {"eta": 1, "eta0": 1, "fsr_Hz": 1e7}, "gains_dB": [20, 30]}})");
    REQUIRE(run({"noise", "-i", sb.path("n.json"), "-o", sb.path("n.csv")}).code == 0);
    const std::string csv = sb.read("n.csv");
    CHECK(csv.rfind("gain_dB,n_fpj\n", 0) == 0);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        const double n = std::stod(line.substr(line.find(',') + 1));
        CHECK(n == doctest::Approx(0.5).epsilon(1e-9));
    }
}

TEST_CASE("visibility map writes one row per cell") {
    Sandbox sb;
    sb.write("b.json", R"({"grid": {"n": 801}})");
    REQUIRE(run({"visibility-map", "-i", sb.path("b.json"), "-o", sb.path("v.csv"), "--eta-grid",
                 "0.001,0.01,3", "--fsr-grid", "2,20,2"}).code == 0);
    const std::string csv = sb.read("v.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}

TEST_CASE("exit codes") {
    Sandbox sb;
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"design", "-i", sb.path("x.json")}).code == cli::kExitUsage);
    CHECK(run({"bogus"}).code == cli::kExitUsage);
    CHECK(run({"--help"}).code == cli::kExitOk);

    CHECK(run({"design", "-i", sb.path("missing.json"), "-o", sb.path("o.json")}).code == cli::kExitValidation);
    sb.write("bad.json", "{not json");
    CHECK(run({"design", "-i", sb.path("bad.json"), "-o", sb.path("o.json")}).code == cli::kExitValidation);
    sb.write("extra.json", std::string(kDesign).substr(0, std::string(kDesign).size() - 1) + R"(, "colour": 3})");
    const Run unknown = run({"design", "-i", sb.path("extra.json"), "-o", sb.path("o.json")});
    CHECK(unknown.code == cli::kExitValidation);
    CHECK(unknown.err.find("colour") != std::string::npos);
    CHECK_FALSE(fs::exists(sb.dir / "o.json"));

    // pump above threshold is a numerical failure
    sb.write("hot.json", R"({"jpa": {"omega_a_Hz": 6e9, "kappa_Hz": 1e6, "kappa0_Hz": 0, "omega_pump_amp_Hz": 2e6}})");
    CHECK(run({"simulate", "-i", sb.path("hot.json"), "-o", sb.path("h.csv"), "--grid", "-1e6,1e6,11",
               "--kind", "gain"}).code == cli::kExitNumerical);
}

TEST_CASE("installed binary reports usage errors") {
    const std::string cmd = std::string(FPJPA_TOOL) + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == cli::kExitUsage);
}
