#pragma once

// Conforming P1/P2 finite elements on D = (0,1) with homogeneous Dirichlet
// conditions, uniform meshes only.

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace spx {

/// 3-point Gauss-Legendre rule on the reference element [0,1].
struct ElementQuadrature {
    static constexpr std::size_t size = 3;
    static const std::array<double, 3> nodes;
    static const std::array<double, 3> weights;
};

class FeSpace {
public:
    FeSpace(std::size_t elements, int degree);

    std::size_t elements() const { return elements_; }
    int degree() const { return degree_; }
    /// Interior degrees of freedom, degree * elements - 1.
    std::size_t dofs() const { return static_cast<std::size_t>(degree_) * elements_ - 1; }
    double h() const { return 1.0 / static_cast<double>(elements_); }
    /// Lagrange nodes including both boundary nodes.
    std::size_t node_count() const { return static_cast<std::size_t>(degree_) * elements_ + 1; }
    double node_x(std::size_t node) const;
    double quad_x(std::size_t element, std::size_t q) const;
    /// True if every function of *this is also a function of `fine`.
    bool nested_in(const FeSpace& fine) const;

    /// Smallest uniform space of the given degree with at least `dofs` unknowns.
    static FeSpace with_min_dofs(std::size_t dofs, int degree);

    friend bool operator==(const FeSpace&, const FeSpace&) = default;

private:
    std::size_t elements_;
    int degree_;
};

/// Finite element function; coefficients at the interior Lagrange nodes
/// ordered by x. Boundary values are zero.
class GridFunction {
public:
    explicit GridFunction(const FeSpace& space);
    GridFunction(const FeSpace& space, std::vector<double> coeffs);

    const FeSpace& space() const { return space_; }
    std::span<const double> coeffs() const { return coeffs_; }
    std::span<double> coeffs() { return coeffs_; }
    /// Value at Lagrange node `node` (0 and node_count()-1 are boundary).
    double node_value(std::size_t node) const;
    double value(double x) const;

    GridFunction& operator+=(const GridFunction& other);
    GridFunction& operator-=(const GridFunction& other);
    GridFunction& operator*=(double s);
    /// this += s * other
    void axpy(double s, const GridFunction& other);

private:
    FeSpace space_;
    std::vector<double> coeffs_;
};

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(double s, GridFunction a);

/// L2 field known at the element quadrature points, elements() * 3 values.
class ElementField {
public:
    ElementField() = default;
    ElementField(std::size_t elements, std::vector<double> values);
    explicit ElementField(std::size_t elements, double fill = 0.0);

    std::size_t elements() const { return elements_; }
    double& at(std::size_t element, std::size_t q) { return values_[element * ElementQuadrature::size + q]; }
    double at(std::size_t element, std::size_t q) const { return values_[element * ElementQuadrature::size + q]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

private:
    std::size_t elements_ = 0;
    std::vector<double> values_;
};

ElementField sample(const FeSpace& space, const std::function<double(double)>& f);
ElementField values_at_quadrature(const GridFunction& u);
ElementField derivative_at_quadrature(const GridFunction& u);

/// Symmetric banded matrix, upper band stored in LAPACK "U" layout.
class BandedMatrix {
public:
    BandedMatrix(std::size_t n, std::size_t bandwidth);

    std::size_t size() const { return n_; }
    std::size_t bandwidth() const { return kd_; }
    /// Any (i, j) with |i - j| <= bandwidth; zero outside the band.
    double at(std::size_t i, std::size_t j) const;
    void add(std::size_t i, std::size_t j, double v);
    std::vector<double> apply(std::span<const double> x) const;
    BandedMatrix& operator*=(double s);
    std::span<const double> band() const { return ab_; }

private:
    std::size_t n_;
    std::size_t kd_;
    std::vector<double> ab_;
};

/// K_ij = int a phi_j' phi_i'. Throws ValidationError naming the first
/// element where a is not strictly positive.
BandedMatrix assemble_stiffness(const FeSpace& space, const ElementField& a);
BandedMatrix assemble_mass(const FeSpace& space);

/// b_i = int f phi_i.
std::vector<double> load_vector(const FeSpace& space, const std::function<double(double)>& f);
/// b_i = int g phi_i' for a field g given at quadrature points.
std::vector<double> flux_load(const FeSpace& space, const ElementField& g);

/// Cholesky factorization of an SPD banded matrix (LAPACK dpbtrf).
class BandedCholesky {
public:
    explicit BandedCholesky(const BandedMatrix& matrix);
    std::vector<double> solve(std::span<const double> rhs) const;
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::size_t kd_;
    std::vector<double> factor_;
};

/// Solver for -(a u')' = rhs with one factorization reused across right-hand sides.
class DirichletSolver {
public:
    DirichletSolver(const FeSpace& space, const ElementField& a);

    const FeSpace& space() const { return space_; }
    GridFunction solve(const std::function<double(double)>& f) const;
    GridFunction solve_load(std::span<const double> load) const;
    const BandedMatrix& stiffness() const { return stiffness_; }

private:
    FeSpace space_;
    BandedMatrix stiffness_;
    BandedCholesky factor_;
};

GridFunction solve_dirichlet(const FeSpace& space, const ElementField& a, const std::function<double(double)>& f);

/// |u|_{H^1} = ||u'||_{L2}.
double norm_V(const GridFunction& u);
/// int a |u'|^2.
double energy(const GridFunction& u, const ElementField& a);
double norm_L2(const ElementField& field);
/// (int |f|^tau)^{1/tau}, tau >= 1, with the quadrature that sampled the field.
double norm_Ltau(const ElementField& field, double tau);
/// ||Delta_h u||_{L2} with Delta_h = -M^{-1} K the discrete Laplacian of the space.
double discrete_laplacian_norm(const GridFunction& u);

/// H^1_0-orthogonal projection onto `coarse`, which must be nested in u's space.
GridFunction project(const GridFunction& u, const FeSpace& coarse);
/// Exact representation of a coarse function in a nested fine space.
GridFunction prolong(const GridFunction& u, const FeSpace& fine);

/// Dyadic hierarchical hat basis of P1 on 2^{levels} elements. Level l has
/// 2^l functions with peaks at (2k+1) 2^{-(l+1)}.
class HierarchicalBasis {
public:
    explicit HierarchicalBasis(unsigned levels);

    unsigned levels() const { return levels_; }
    std::size_t size() const { return (std::size_t{1} << levels_) - 1; }
    FeSpace space() const { return FeSpace(std::size_t{1} << levels_, 1); }
    /// Coefficients grouped by level, coarsest first, left to right.
    std::vector<double> to_hierarchical(const GridFunction& u) const;
    GridFunction to_nodal(std::span<const double> coeffs) const;
    /// |phi_i|_{H^1}^2 for hierarchical position i.
    double energy_weight(std::size_t i) const;
    unsigned level_of(std::size_t i) const;

private:
    unsigned levels_;
};

/// Keeps the n hierarchical terms with the largest H^1 energy (ties: level,
/// then position). Returns u itself when n covers every term.
GridFunction best_nterm_spatial(const GridFunction& u, const HierarchicalBasis& basis, std::size_t n);

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  ///< RMS of log-residuals
};

/// Least-squares line through (log x, log y).
LogLogFit fit_loglog(std::span<const std::pair<double, double>> points);
/// Negated log-log slope of (n, e) data.
double measure_spatial_rate(std::span<const std::pair<double, double>> errors);

/// CSV rows (x, value) over all Lagrange nodes, boundary included.
void write_csv(std::ostream& out, const GridFunction& u);

}  // namespace spx
