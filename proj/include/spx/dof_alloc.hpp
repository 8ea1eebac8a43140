#pragma once

// Per-coefficient spatial degree-of-freedom allocation and convergence-rate
// prediction for fully discrete expansions.

#include "spx/multiindex.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace spx {

enum class ErrorSetting { Sup, L2 };

struct RateParams {
    double s;    ///< parametric (best n-term) rate
    double t;    ///< spatial rate
    double p_V;  ///< summability of the V norms
    double p_X;  ///< summability of the smoother X norms
    ErrorSetting setting = ErrorSetting::Sup;

    /// s derived from p_V: 1/p_V - 1 (sup) or 1/p_V - 1/2 (l2).
    static RateParams from_summability(double p_V, double p_X, double t, ErrorSetting setting);
};

struct RatePrediction {
    double rate;          ///< t in regime 1, else the regime-2 formula
    double formula_rate;  ///< regime-2 formula evaluated regardless of regime
    int regime;           ///< 1: spatial rate saturates, 2: X-sparsity limited
    double bracket_lo;    ///< 1/p_X - c
    double bracket_hi;    ///< 1/p_V - c
    bool in_bracket;      ///< regime 2: rate in [lo, hi]; regime 1: t <= lo
};

/// Throws ValidationError unless 0 < p_V <= p_X < 2 and s, t > 0.
RatePrediction predict_rate(const RateParams& params);

struct AllocationPlan {
    std::vector<double> real_dofs;
    std::vector<std::uint64_t> dofs;  ///< max(1, ceil(real)); 1 for zero-norm entries
    double eta = 0.0;
    double N_real = 0.0;        ///< closed form total
    std::uint64_t N_int = 0;    ///< sum of dofs
    double constraint_residual = 0.0;  ///< relative residual of the saturated constraint
};

/// Sup setting: n_nu = eta ||u_nu||_X^{1/(1+t)} with sum n_nu^{-t} ||u_nu||_X = n^{-s}.
AllocationPlan allocate(std::span<const double> norms_X, double s, double t, double n);
/// L2 setting: n_nu = eta ||u_nu||_X^{2/(1+2t)} with sum n_nu^{-2t} ||u_nu||_X^2 = n^{-2s}.
AllocationPlan allocate_l2(std::span<const double> norms_X, double s, double t, double n);

/// n_nu = n_hat for every entry.
AllocationPlan fixed_space_baseline(std::span<const double> norms_X, std::uint64_t n_hat);
/// ceil(n^{s/t}): the single spatial size balancing both error contributions.
std::uint64_t balanced_fixed_dofs(double n, double s, double t);

enum class WaveletMode { Linear, Nonlinear };

/// alpha/(2m) linear; min(alpha,1)/m nonlinear for m >= 2; min(2 alpha/3, 1) nonlinear for m = 1.
double wavelet_predicted_rate(double alpha, unsigned m, WaveletMode mode);

/// CSV rows: nu, norm_X, n_real, n_int.
void write_csv(std::ostream& out, const AllocationPlan& plan, std::span<const MultiIndex> indices,
               std::span<const double> norms_X);

}  // namespace spx
