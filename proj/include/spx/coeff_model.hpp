#pragma once

#include "spx/multiindex.hpp"
#include "spx/spatial_fem.hpp"

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

namespace spx {

/// Piecewise-linear field on a uniform grid of `cells()` cells over (0,1).
/// Each cell stores its one-sided endpoint values, so jumps are allowed.
class PiecewiseField {
public:
    PiecewiseField(std::vector<double> left, std::vector<double> right);

    static PiecewiseField constant(double value, std::size_t cells = 1);
    /// Continuous field from values at the uniform breakpoints 0, 1/c, ..., 1.
    static PiecewiseField from_nodes(std::span<const double> node_values);
    /// Hat on [x0, x1] with peak `height` at the midpoint, on a grid of `cells` cells.
    /// x0, x1 and the midpoint must be breakpoints.
    static PiecewiseField hat(std::size_t cells, double x0, double x1, double height);

    std::size_t cells() const { return left_.size(); }
    double left(std::size_t cell) const { return left_[cell]; }
    double right(std::size_t cell) const { return right_[cell]; }
    double slope(std::size_t cell) const;
    /// Value inside cell at local coordinate xi in [0,1].
    double value_in_cell(std::size_t cell, double xi) const;
    /// Value at x (cell chosen by floor; right-continuous except at x = 1).
    double value(double x) const;
    double derivative(double x) const;

    /// Same field on a grid of `cells` cells (a multiple of cells()).
    PiecewiseField refined(std::size_t cells) const;
    bool is_continuous(double tol = 1e-14) const;
    double sup_norm() const;
    double grad_sup_norm() const;
    double min_value() const;
    bool is_zero_on(std::size_t cell) const { return left_[cell] == 0.0 && right_[cell] == 0.0; }

    PiecewiseField& operator*=(double s);
    PiecewiseField& axpy(double s, const PiecewiseField& other);

private:
    std::vector<double> left_;
    std::vector<double> right_;
};

/// a(y) = abar + sum_j y_j psi_j, y in [-1,1]^J. All fields share one grid.
class AffineModel {
public:
    /// Validates essinf abar > 0 and theta_uniform < 1.
    AffineModel(PiecewiseField abar, std::vector<PiecewiseField> psi);

    const PiecewiseField& abar() const { return abar_; }
    std::span<const PiecewiseField> psi() const { return psi_; }
    std::size_t dims() const { return psi_.size(); }
    std::size_t cells() const { return abar_.cells(); }
    double abar_min() const { return abar_min_; }

private:
    PiecewiseField abar_;
    std::vector<PiecewiseField> psi_;
    double abar_min_;
};

/// a(y) = exp(sum_j y_j psi_j), y i.i.d. standard Gaussian.
class LognormalModel {
public:
    explicit LognormalModel(std::vector<PiecewiseField> psi);

    std::span<const PiecewiseField> psi() const { return psi_; }
    std::size_t dims() const { return psi_.size(); }
    std::size_t cells() const { return psi_.empty() ? 1 : psi_.front().cells(); }

private:
    std::vector<PiecewiseField> psi_;
};

using ParametricModel = std::variant<AffineModel, LognormalModel>;

std::size_t model_dims(const ParametricModel& model);

/// Dyadic hat family: level l has 2^l hats of height amplitude * 2^{-alpha l}
/// on the cells [k 2^{-l}, (k+1) 2^{-l}].
struct WaveletFamily {
    double alpha = 1.5;
    double amplitude = 0.3;
    unsigned levels = 4;  ///< max level L; 2^{L+1} - 1 functions
    /// Keep only the first `active_dims` functions (0 keeps all).
    std::size_t active_dims = 0;

    static constexpr unsigned overlap = 2;  ///< per-level bound on functions nonzero at a point
    std::size_t total_functions() const { return (std::size_t{2} << levels) - 1; }
};

/// Level of the j-th (1-based) function in the coarse-to-fine enumeration.
unsigned wavelet_level(std::size_t j);

/// ||sum_j |psi_j| / abar||_inf, exact on the piecewise-linear data.
double theta_uniform(const AffineModel& model);
/// theta_uniform with psi_j replaced by rho_j psi_j. Values >= 1 are returned as is.
double theta_weighted(const AffineModel& model, const WeightSequence& rho);
/// ||sum_j rho_j |psi_j'|||_inf.
double grad_weighted_sum(const AffineModel& model, const WeightSequence& rho);
/// ||sum_j rho_j |psi_j|||_inf.
double weighted_abs_sup(std::span<const PiecewiseField> fields, const WeightSequence& rho);

/// The psi_j of the family, coarse to fine, on a grid of 2^{L+1} cells.
std::vector<PiecewiseField> wavelet_fields(const WaveletFamily& family);
/// abar = 1 plus the family. Throws ValidationError when the resulting theta >= 1.
AffineModel build_wavelet_model(const WaveletFamily& family);
/// Amplitude giving theta_uniform == target (theta is linear in the amplitude).
double wavelet_amplitude_for_theta(WaveletFamily family, double target_theta);

struct WaveletWeights {
    WeightSequence rho;
    double theta;     ///< theta_weighted with these weights
    bool admissible;  ///< theta < 1
};

/// rho_j = 1 + c 2^{beta |lambda(j)|}; requires 0 < beta < alpha, c >= 0.
WaveletWeights wavelet_weights(const WaveletFamily& family, double beta, double c);

/// Exact piecewise-linear a(y). Requires |y_j| <= 1 and y.size() == dims().
PiecewiseField evaluate_affine(const AffineModel& model, std::span<const double> y);
/// a(y) at the quadrature points of `space`. Lognormal values are clamped
/// below at 1e-8.
ElementField sample_coefficient(const ParametricModel& model, const FeSpace& space, std::span<const double> y);
ElementField sample_field(const PiecewiseField& field, const FeSpace& space);
ElementField sample_field_derivative(const PiecewiseField& field, const FeSpace& space);

/// Caches abar and psi_j at the quadrature points of one space so that a(y)
/// can be formed repeatedly without re-locating points.
class CoefficientSampler {
public:
    CoefficientSampler(const ParametricModel& model, const FeSpace& space);

    const FeSpace& space() const { return space_; }
    std::size_t dims() const { return psi_.size(); }
    ElementField operator()(std::span<const double> y) const;

private:
    bool lognormal_;
    FeSpace space_;
    ElementField abar_;
    std::vector<ElementField> psi_;
};

/// theta_H = 1 + (1 - 1/sqrt 2)^2.
double hermite_theta();

struct RescaledWeights {
    WeightSequence rho;
    double factor;  ///< dyadic tau <= 1 applied to the input weights
    double K;       ///< ||sum_j rho'_j |psi_j|||_inf
    double bound;   ///< ln(theta_H) / sqrt(r)
};

/// Scales rho by the largest dyadic tau <= 1 with K(tau rho) < ln(theta_H)/sqrt(r).
RescaledWeights rescale_weights_lognormal(const LognormalModel& model, const WeightSequence& rho, unsigned r);

}  // namespace spx
