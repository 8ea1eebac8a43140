#pragma once

// Config-driven experiments: expansions, allocation, fully discrete error
// sweeps, joint space-parameter selection, rate fits and reports.

#include "spx/coeff_model.hpp"
#include "spx/dof_alloc.hpp"
#include "spx/ortho_expand.hpp"
#include "spx/spatial_fem.hpp"
#include "spx/taylor_engine.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spx {

struct ModelConfig {
    std::string kind = "wavelet";  ///< wavelet | constant | lognormal_wavelet
    double alpha = 1.5;
    unsigned levels = 4;
    double theta = 0.6;       ///< wavelet: target theta_uniform (ignored when amplitude > 0)
    double amplitude = 0.0;   ///< wavelet: explicit C; lognormal: always used
    std::size_t active_dims = 0;
    double c = 0.5;           ///< constant: psi_1 = c, abar = 1
};

struct ExpansionConfig {
    std::string kind = "legendre";  ///< taylor | legendre | jacobi | hermite
    double alpha_J = 0.0;
    double beta_J = 0.0;
    std::uint32_t max_degree = 3;
    std::uint32_t points = 0;       ///< quadrature points per dim; 0 = max_degree + 1
    std::size_t budget = 1000;      ///< taylor envelope size
    double weight_beta = 1.0;       ///< taylor wavelet weights rho_j = 1 + c 2^{beta level}
    double weight_c = 0.0;
    double rho = 2.0;               ///< taylor weights for non-wavelet models
};

struct AllocationConfig {
    std::string mode = "optimal";   ///< optimal | fixed
    std::string spatial = "linear"; ///< linear | nonlinear
    double s = 0.0;                 ///< 0: fitted from the coefficient norms
    double t = 1.0;
};

struct ExperimentConfig {
    ModelConfig model;
    int fe_degree = 2;
    std::size_t fe_elements = 5040;
    ExpansionConfig expansion;
    AllocationConfig allocation;
    std::vector<double> schedule = {2, 4, 8, 16, 32, 64, 128, 256};
    std::vector<double> joint_schedule;  ///< term counts for joint sweeps
    std::string error_kind = "l2";       ///< l2 | sup
    std::size_t samples = 64;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::optional<double> predicted;     ///< overrides the derived prediction
    double check_lo = -1e300;
    double check_hi = 1e300;
    std::string prefix = "run";
    nlohmann::json raw;                  ///< resolved config echoed into reports
};

/// Validates against the documented keys; unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

ParametricModel build_model(const ModelConfig& cfg);

/// Taylor weights: wavelet_weights(beta, c) on wavelet models, constant rho otherwise.
WeightSequence taylor_weights(const ExperimentConfig& cfg, const ParametricModel& model);
/// Envelope of the Taylor weights under the configured budget and degree cap.
DownwardClosedSet taylor_indices(const ExperimentConfig& cfg, const ParametricModel& model);
OrthoFamily ortho_family(const ExpansionConfig& cfg);
/// Tensor Gauss rule with `points` (default max_degree + 1) nodes per dimension.
TensorQuadrature ortho_quadrature(const ExperimentConfig& cfg, const ParametricModel& model);

struct RateFit {
    bool ok = false;
    std::string note;  ///< reason when not ok
    LogLogFit fit;
    double rate = 0.0;  ///< -slope
};

/// Log-log fit of (N, error); refused below 4 points or an N span under 1.5 decades.
RateFit fit_rate(std::span<const std::pair<double, double>> points);

struct SweepPoint {
    double n;
    std::uint64_t N;
    double error;
    double parametric_error;  ///< truncation part
    double spatial_error;     ///< discretization part (l2) or 0 (sup)
};

struct RateReport {
    std::string label;
    std::vector<SweepPoint> points;
    RateFit fit;
    double predicted = 0.0;
    double s_used = 0.0;
    double t_used = 0.0;
    std::uint64_t seed = 0;
    bool passed = true;  ///< fit ok and rate inside the configured check window
};

/// Best-n by V norm, allocation per the configured mode, realization by
/// projection (linear) or hierarchical thresholding (nonlinear), error per
/// the configured setting.
RateReport run_sweep(const ExperimentConfig& cfg);

struct JointSelection {
    std::size_t terms;
    double error;  ///< sqrt of the dropped squared coefficients
    std::vector<std::pair<std::size_t, std::size_t>> selected;  ///< (hierarchical position, index slot)
};

/// N largest energy-normalized coefficients c_{lambda,nu} over the hierarchical
/// basis times the stored indices. The expansion must live on basis.space().
JointSelection joint_best_N(const OrthoExpansion& expansion, const HierarchicalBasis& basis, std::size_t N,
                            bool keep_selection = false);

/// Joint selection at every count of the joint schedule.
RateReport run_joint(const ExperimentConfig& cfg);

/// Fails fast if `dir` cannot be created or written.
void ensure_writable(const std::filesystem::path& dir);

/// <prefix>.csv, <prefix>.json, <prefix>_plot.csv under dir.
void write_report(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RateReport& report);
nlohmann::json report_json(const ExperimentConfig& cfg, const RateReport& report);

}  // namespace spx
