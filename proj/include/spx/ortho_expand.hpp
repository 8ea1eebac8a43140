#pragma once

// Orthonormal Jacobi and Hermite polynomial chaos coefficients of the discrete
// solution map, computed by full tensor Gauss quadrature.

#include "spx/coeff_model.hpp"
#include "spx/multiindex.hpp"
#include "spx/spatial_fem.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace spx {

enum class FamilyKind { Jacobi, Hermite };

/// Orthonormal polynomials for a probability measure: Jacobi weight
/// (1-t)^alpha (1+t)^beta on [-1,1], or the standard Gaussian.
class OrthoFamily {
public:
    static OrthoFamily jacobi(double alpha, double beta);
    static OrthoFamily legendre() { return jacobi(0.0, 0.0); }
    static OrthoFamily hermite();

    FamilyKind kind() const { return kind_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    std::string name() const;

    /// Orthonormal recurrence t p_k = b_{k+1} p_{k+1} + a_k p_k + b_k p_{k-1}.
    double a(std::uint32_t k) const;
    double b(std::uint32_t k) const;  ///< k >= 1

    /// p_0(t), ..., p_K(t).
    void eval_all(std::uint32_t K, double t, std::span<double> out) const;

    friend bool operator==(const OrthoFamily&, const OrthoFamily&) = default;

private:
    OrthoFamily(FamilyKind kind, double alpha, double beta) : kind_(kind), alpha_(alpha), beta_(beta) {}
    FamilyKind kind_;
    double alpha_;
    double beta_;
};

/// c_k^{alpha,beta}: orthonormal J_k = c_k P_k^{(alpha,beta)}. Log-Gamma evaluation.
double jacobi_norm_const(std::uint32_t k, double alpha, double beta);

double eval_poly(const OrthoFamily& family, std::uint32_t k, double t);

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;  ///< sum to 1
};

/// q-point Gauss rule for the family's measure (Golub-Welsch).
GaussRule gauss_rule(const OrthoFamily& family, std::uint32_t q);

/// Full tensor product of one q-point rule over d dimensions.
class TensorQuadrature {
public:
    static constexpr std::uint64_t max_nodes = 1'000'000;

    /// Throws ValidationError when q^d exceeds max_nodes.
    TensorQuadrature(const OrthoFamily& family, std::uint32_t dims, std::uint32_t q);

    const OrthoFamily& family() const { return family_; }
    std::uint32_t dims() const { return dims_; }
    std::uint32_t points() const { return q_; }
    const GaussRule& rule() const { return rule_; }
    std::size_t size() const { return size_; }
    /// Per-dimension node numbers of tensor node i (dimension 1 varies fastest).
    std::vector<std::uint32_t> digits(std::size_t i) const;
    std::vector<double> node(std::size_t i) const;
    double weight(std::size_t i) const;

private:
    OrthoFamily family_;
    std::uint32_t dims_;
    std::uint32_t q_;
    GaussRule rule_;
    std::size_t size_;
};

/// f(y)(x) = base(x) + sum_j y_j terms[j-1](x). Used to manufacture solution
/// maps with a known polynomial dependence.
struct ParametricLoad {
    std::function<double(double)> base = [](double) { return 1.0; };
    std::vector<std::function<double(double)>> terms;

    std::function<double(double)> at(std::span<const double> y) const;
};

struct OrthoOptions {
    ParametricLoad load;
    unsigned threads = 1;
};

struct OrthoTerm {
    MultiIndex index;
    GridFunction v;
    double norm_V;
    double norm_X;  ///< discrete Laplacian norm of v
};

class OrthoExpansion {
public:
    const OrthoFamily& family() const { return family_; }
    std::uint32_t quad_dims() const { return dims_; }
    std::uint32_t quad_points() const { return q_; }
    const FeSpace& space() const { return space_; }
    std::span<const OrthoTerm> terms() const { return terms_; }
    const OrthoTerm* find(const MultiIndex& nu) const;
    /// Quadrature value of int ||u_h(y)||_V^2 d sigma(y).
    double solution_energy() const { return solution_energy_; }

private:
    friend OrthoExpansion compute_coeffs(const ParametricModel&, const FeSpace&, const DownwardClosedSet&,
                                         const TensorQuadrature&, const OrthoOptions&);
    OrthoFamily family_ = OrthoFamily::legendre();
    std::uint32_t dims_ = 0;
    std::uint32_t q_ = 0;
    FeSpace space_{2, 1};
    std::vector<OrthoTerm> terms_;
    std::unordered_map<MultiIndex, std::size_t, MultiIndexHash> lookup_;
    double solution_energy_ = 0.0;
};

/// One FE solve per tensor node. Requires nu_j <= q - 1 for every index, so
/// the discrete coefficients inherit exact orthogonality, quadrature
/// dimensions equal to the model dimensions, Jacobi for affine and Hermite
/// for lognormal models.
OrthoExpansion compute_coeffs(const ParametricModel& model, const FeSpace& space, const DownwardClosedSet& indices,
                              const TensorQuadrature& quad, const OrthoOptions& options = {});

struct ParsevalCheck {
    double lhs;  ///< sum over stored nu of ||v_nu||_V^2
    double rhs;  ///< quadrature int ||u_h||_V^2
    double gap() const { return rhs - lhs; }
};

ParsevalCheck parseval_check(const OrthoExpansion& expansion);

struct ErrorSampling {
    /// Monte Carlo sample count; 0 uses the expansion's tensor quadrature.
    std::size_t samples = 0;
    std::uint64_t seed = 0;
};

/// sqrt of the mean of ||u_h(y) - sum_{subset} v_nu P_nu(y)||_V^2.
double l2_error_truncation(const OrthoExpansion& expansion, std::span<const MultiIndex> subset,
                           const ParametricModel& model, const ErrorSampling& sampling = {},
                           const OrthoOptions& options = {});

/// Indices by decreasing norm (ties: canonical order).
std::vector<MultiIndex> ortho_best_n(const OrthoExpansion& expansion, std::size_t n, bool by_X = false);

/// Header "# family=..., dims=d, points=q", then nu, order, norm_V, norm_X.
void write_csv(std::ostream& out, const OrthoExpansion& expansion);

}  // namespace spx
