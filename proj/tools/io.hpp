#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpjpa/circuit_model.hpp"
#include "fpjpa/interference.hpp"

namespace fpjpa::cli {

using nlohmann::json;

// Shortest decimal that parses back to the same double.
std::string format_double(double x);

std::string read_text(const std::filesystem::path& path);
// Writes via a temporary sibling and rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

json parse_json(const std::string& text, const std::string& what);

// Spectrum CSV: `detuning_Hz,re,im` or `detuning_Hz,gain_dB`; detunings rad/s in memory.
Spectrum parse_spectrum_csv(const std::string& text);
std::string spectrum_csv(const Spectrum& s);

// JSON object access that rejects keys nobody asked for.
class Fields {
public:
    Fields(const json& j, std::string context);

    bool has(const std::string& key) const;
    double number(const std::string& key);
    double number(const std::string& key, double fallback);
    int integer(const std::string& key);
    int integer(const std::string& key, int fallback);
    bool boolean(const std::string& key, bool fallback);
    std::string text(const std::string& key);
    std::string text(const std::string& key, const std::string& fallback);
    const json& raw(const std::string& key);
    Fields object(const std::string& key);

    // Throws ValidationError naming the first unread key.
    void finish() const;

private:
    const json* j_;
    std::string ctx_;
    std::set<std::string> used_;
    const json& at(const std::string& key);
};

CircuitParams read_circuit(Fields f);
json circuit_json(const CircuitParams& c);
json bias_json(const BiasState& b);
json jpa_json(const JpaParams& p);

// `{"kappa_Hz", "kappa0_Hz", "omega_pump_amp_Hz"?}`
JpaParams read_jpa_rates(Fields f);
// `{"eta", "eta0", "fsr_Hz", "phi0_rad", "phi_ref_rad"}`
FabryPerotParams read_cavity(Fields f);
json cavity_json(const FabryPerotParams& fp);

// "a,b,n"
struct Triple {
    double a = 0.0, b = 0.0;
    std::size_t n = 0;
};
Triple parse_triple(const std::string& s, const std::string& flag);

}  // namespace fpjpa::cli
