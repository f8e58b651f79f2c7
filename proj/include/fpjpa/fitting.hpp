#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fpjpa/interference.hpp"

namespace fpjpa {

enum class FitKind { reflection_complex, gain_power };

struct FitDataset {
    std::vector<double> detunings;  // rad/s
    std::vector<cplx> s_tilde;      // reflection data, normalized
    std::vector<double> gain_db;    // gain data, 10 log10 |S~11|^2
    std::optional<double> pump_power;  // W
};

// NaN initial value means "seed from the data".
struct ParamSetting {
    double initial = std::numeric_limits<double>::quiet_NaN();
    bool free = true;
};

struct FitOptions {
    int starts = 8;
    int max_iterations = 400;
    int screen_iterations = 12;  // per start before pruning
    int survivors = 2;           // starts that continue past screening
    int jobs = 1;
    unsigned seed = 0;
    double jitter = 0.0;  // relative perturbation of seeded amplitudes for starts > 0
};

struct FitProblem {
    FitKind kind = FitKind::reflection_complex;
    std::vector<FitDataset> datasets;

    ParamSetting omega_offset{0.0, true};  // shift of omega_a relative to the detuning axis
    ParamSetting eta, eta0, fsr, phi0, phi_ref;
    ParamSetting c_p;  // rad/s per sqrt(W)
    std::vector<ParamSetting> kappa, kappa0;  // per dataset; empty means seeded and free

    FitOptions options;
};

FitProblem make_reflection_problem(FitDataset data);
FitProblem make_gain_problem(std::vector<FitDataset> data);

void validate(const FitProblem& p);

struct FitParamValue {
    std::string name;
    double value = 0.0;
    double sigma = 0.0;
    bool free = false;
};

struct FitResult {
    std::vector<FitParamValue> params;
    Eigen::MatrixXd covariance;  // physical units, free parameters in params order
    double residual_norm = 0.0;
    double objective = 0.0;      // 0.5 * residual_norm^2
    int n_iterations = 0;
    bool converged = false;
    bool covariance_reliable = true;
    std::vector<double> per_dataset_residuals;  // residual 2-norm per dataset
    std::vector<std::string> warnings;
    int best_start = 0;
    std::vector<double> start_initial_objectives;
    std::vector<double> start_final_objectives;
    double gradient_norm = 0.0;  // infinity norm in internal coordinates

    double get(const std::string& name) const;
    const FitParamValue& param(const std::string& name) const;
};

// Parameter layout, transforms and residuals of a fit problem.
class FitModel {
public:
    enum class Role { offset, kappa, kappa0, eta, eta0, fsr, phi0, phi_ref, c_p };
    enum class Transform { scaled, log, logistic, phase };

    struct Param {
        std::string name;
        Role role;
        Transform transform;
        int dataset = -1;
        double value = 0.0;  // physical
        bool free = true;
        double scale = 1.0;
    };

    explicit FitModel(const FitProblem& problem);

    const std::vector<Param>& params() const { return params_; }
    std::vector<double> physical_values() const;
    void set_physical(const std::vector<double>& values);

    std::size_t n_free() const;
    std::size_t n_residuals() const;
    Eigen::VectorXd internal() const;                 // free parameters only
    void set_internal(const Eigen::VectorXd& u);
    Eigen::VectorXd transform_derivative() const;     // d physical / d internal, free only

    // false when the model hits the parametric threshold or leaves its domain
    bool residuals(Eigen::VectorXd& r) const;
    bool residuals_at(const Eigen::VectorXd& u, Eigen::VectorXd& r) const;
    double objective_at(const Eigen::VectorXd& u) const;
    // Central-difference Jacobian in internal coordinates.
    bool jacobian_at(const Eigen::VectorXd& u, Eigen::MatrixXd& jac, Eigen::VectorXd& r) const;
    Eigen::VectorXd gradient_at(const Eigen::VectorXd& u) const;

    // Model quantities for dataset i at the current parameters.
    JpaParams jpa(std::size_t i) const;
    FabryPerotParams fabry_perot() const;
    std::optional<DriveParams> drive(std::size_t i) const;
    double offset() const;

private:
    const FitProblem* problem_;
    std::vector<Param> params_;
    double get(Role role, int dataset = -1) const;
    std::size_t block_size(std::size_t i) const;
    bool residual_block(std::size_t i, double* out) const;
};

FitResult fit_reflection(const FitProblem& problem);
FitResult fit_gain_multi(const FitProblem& problem);
FitResult fit(const FitProblem& problem);

// Model spectrum for dataset i at the fitted parameters (complex S~ or gain dB).
Spectrum model_spectrum(const FitProblem& problem, const FitResult& result, std::size_t i);

struct PhaseLine {
    double fsr = 0.0;     // rad/s, +inf for zero slope
    double phi_R = 0.0;   // wrapped intercept
    double slope = 0.0;   // rad per rad/s
};

PhaseLine unwrap_phase_vs_frequency(std::vector<std::pair<double, double>> points);

}  // namespace fpjpa
