#include "spx/spatial_fem.hpp"

#include "spx/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include <lapacke.h>

namespace spx {

const std::array<double, 3> ElementQuadrature::nodes = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
const std::array<double, 3> ElementQuadrature::weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

namespace {

constexpr std::size_t kQ = ElementQuadrature::size;

// Lagrange shape functions on [0,1] and their xi-derivatives.
void shape(int degree, double xi, double* phi, double* dphi) {
    if (degree == 1) {
        phi[0] = 1.0 - xi;
        phi[1] = xi;
        dphi[0] = -1.0;
        dphi[1] = 1.0;
    } else {
        phi[0] = (1.0 - xi) * (1.0 - 2.0 * xi);
        phi[1] = 4.0 * xi * (1.0 - xi);
        phi[2] = xi * (2.0 * xi - 1.0);
        dphi[0] = 4.0 * xi - 3.0;
        dphi[1] = 4.0 - 8.0 * xi;
        dphi[2] = 4.0 * xi - 1.0;
    }
}

// dof index of a global node, or -1 for boundary nodes
long dof_of(const FeSpace& space, std::size_t node) {
    if (node == 0 || node + 1 == space.node_count()) return -1;
    return static_cast<long>(node) - 1;
}

struct Locator {
    std::size_t element;
    double xi;
};

Locator locate(const FeSpace& space, double x) {
    const double n = static_cast<double>(space.elements());
    double s = std::clamp(x, 0.0, 1.0) * n;
    auto e = static_cast<std::size_t>(std::floor(s));
    if (e >= space.elements()) e = space.elements() - 1;
    return {e, s - static_cast<double>(e)};
}

}  // namespace

FeSpace::FeSpace(std::size_t elements, int degree) : elements_(elements), degree_(degree) {
    if (degree != 1 && degree != 2) throw ValidationError("finite element degree must be 1 or 2");
    if (elements < 1 || (degree == 1 && elements < 2)) {
        throw ValidationError("finite element space needs at least one interior dof");
    }
}

double FeSpace::node_x(std::size_t node) const {
    return static_cast<double>(node) / static_cast<double>(degree_ * elements_);
}

double FeSpace::quad_x(std::size_t element, std::size_t q) const {
    return (static_cast<double>(element) + ElementQuadrature::nodes[q]) * h();
}

bool FeSpace::nested_in(const FeSpace& fine) const {
    return fine.elements_ % elements_ == 0 && degree_ <= fine.degree_;
}

FeSpace FeSpace::with_min_dofs(std::size_t dofs, int degree) {
    const std::size_t d = std::max<std::size_t>(dofs, 1);
    const std::size_t el = std::max<std::size_t>((d + 1 + degree - 1) / degree, degree == 1 ? 2 : 1);
    return FeSpace(el, degree);
}

GridFunction::GridFunction(const FeSpace& space) : space_(space), coeffs_(space.dofs(), 0.0) {}

GridFunction::GridFunction(const FeSpace& space, std::vector<double> coeffs)
    : space_(space), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != space_.dofs()) throw ValidationError("coefficient count does not match the space");
}

double GridFunction::node_value(std::size_t node) const {
    const long d = dof_of(space_, node);
    return d < 0 ? 0.0 : coeffs_[static_cast<std::size_t>(d)];
}

double GridFunction::value(double x) const {
    const auto [e, xi] = locate(space_, x);
    double phi[3], dphi[3];
    shape(space_.degree(), xi, phi, dphi);
    double v = 0.0;
    for (int l = 0; l <= space_.degree(); ++l) v += phi[l] * node_value(space_.degree() * e + l);
    return v;
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
    axpy(1.0, other);
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
    axpy(-1.0, other);
    return *this;
}

GridFunction& GridFunction::operator*=(double s) {
    for (double& c : coeffs_) c *= s;
    return *this;
}

void GridFunction::axpy(double s, const GridFunction& other) {
    if (!(other.space_ == space_)) throw ValidationError("grid functions live on different spaces");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * other.coeffs_[i];
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(double s, GridFunction a) { return a *= s; }

ElementField::ElementField(std::size_t elements, std::vector<double> values)
    : elements_(elements), values_(std::move(values)) {
    if (values_.size() != elements_ * kQ) throw ValidationError("element field size mismatch");
}

ElementField::ElementField(std::size_t elements, double fill) : elements_(elements), values_(elements * kQ, fill) {}

ElementField sample(const FeSpace& space, const std::function<double(double)>& f) {
    ElementField out(space.elements());
    for (std::size_t e = 0; e < space.elements(); ++e) {
        for (std::size_t q = 0; q < kQ; ++q) out.at(e, q) = f(space.quad_x(e, q));
    }
    return out;
}

ElementField values_at_quadrature(const GridFunction& u) {
    const FeSpace& sp = u.space();
    ElementField out(sp.elements());
    double phi[3], dphi[3];
    for (std::size_t q = 0; q < kQ; ++q) {
        shape(sp.degree(), ElementQuadrature::nodes[q], phi, dphi);
        for (std::size_t e = 0; e < sp.elements(); ++e) {
            double v = 0.0;
            for (int l = 0; l <= sp.degree(); ++l) v += phi[l] * u.node_value(sp.degree() * e + l);
            out.at(e, q) = v;
        }
    }
    return out;
}

ElementField derivative_at_quadrature(const GridFunction& u) {
    const FeSpace& sp = u.space();
    ElementField out(sp.elements());
    const double inv_h = static_cast<double>(sp.elements());
    double phi[3], dphi[3];
    for (std::size_t q = 0; q < kQ; ++q) {
        shape(sp.degree(), ElementQuadrature::nodes[q], phi, dphi);
        for (std::size_t e = 0; e < sp.elements(); ++e) {
            double v = 0.0;
            for (int l = 0; l <= sp.degree(); ++l) v += dphi[l] * u.node_value(sp.degree() * e + l);
            out.at(e, q) = v * inv_h;
        }
    }
    return out;
}

BandedMatrix::BandedMatrix(std::size_t n, std::size_t bandwidth)
    : n_(n), kd_(bandwidth), ab_((bandwidth + 1) * n, 0.0) {}

double BandedMatrix::at(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    if (j - i > kd_) return 0.0;
    return ab_[(kd_ + i - j) + j * (kd_ + 1)];
}

void BandedMatrix::add(std::size_t i, std::size_t j, double v) {
    if (i > j) return;  // only the upper band is stored
    if (j - i > kd_) throw Error("entry outside the matrix band");
    ab_[(kd_ + i - j) + j * (kd_ + 1)] += v;
}

std::vector<double> BandedMatrix::apply(std::span<const double> x) const {
    if (x.size() != n_) throw ValidationError("vector length does not match matrix");
    std::vector<double> y(n_, 0.0);
    const std::size_t ld = kd_ + 1;
    for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t i0 = j >= kd_ ? j - kd_ : 0;
        for (std::size_t i = i0; i <= j; ++i) {
            const double a = ab_[(kd_ + i - j) + j * ld];
            y[i] += a * x[j];
            if (i != j) y[j] += a * x[i];
        }
    }
    return y;
}

BandedMatrix& BandedMatrix::operator*=(double s) {
    for (double& v : ab_) v *= s;
    return *this;
}

namespace {

template <class LocalIntegrand>
BandedMatrix assemble(const FeSpace& space, LocalIntegrand&& integrand) {
    BandedMatrix K(space.dofs(), static_cast<std::size_t>(space.degree()));
    const int p = space.degree();
    double local[3][3];
    for (std::size_t e = 0; e < space.elements(); ++e) {
        for (auto& row : local) std::fill(std::begin(row), std::end(row), 0.0);
        integrand(e, local);
        for (int a = 0; a <= p; ++a) {
            const long da = dof_of(space, p * e + a);
            if (da < 0) continue;
            for (int b = a; b <= p; ++b) {
                const long db = dof_of(space, p * e + b);
                if (db < 0) continue;
                K.add(static_cast<std::size_t>(da), static_cast<std::size_t>(db), local[a][b]);
            }
        }
    }
    return K;
}

}  // namespace

BandedMatrix assemble_stiffness(const FeSpace& space, const ElementField& a) {
    if (a.elements() != space.elements()) throw ValidationError("coefficient field does not match the mesh");
    const int p = space.degree();
    const double inv_h = static_cast<double>(space.elements());
    return assemble(space, [&](std::size_t e, double (&local)[3][3]) {
        double phi[3], dphi[3];
        for (std::size_t q = 0; q < kQ; ++q) {
            const double aq = a.at(e, q);
            if (!(aq > 0.0) || !std::isfinite(aq)) {
                throw ValidationError("diffusion coefficient not strictly positive in element " + std::to_string(e) +
                                      " (x in [" + std::to_string(e * space.h()) + ", " +
                                      std::to_string((e + 1) * space.h()) + "])");
            }
            shape(p, ElementQuadrature::nodes[q], phi, dphi);
            const double w = ElementQuadrature::weights[q] * aq * inv_h;  // h * (1/h)^2
            for (int i = 0; i <= p; ++i)
                for (int j = i; j <= p; ++j) local[i][j] += w * dphi[i] * dphi[j];
        }
    });
}

BandedMatrix assemble_mass(const FeSpace& space) {
    const int p = space.degree();
    const double h = space.h();
    return assemble(space, [&](std::size_t, double (&local)[3][3]) {
        double phi[3], dphi[3];
        for (std::size_t q = 0; q < kQ; ++q) {
            shape(p, ElementQuadrature::nodes[q], phi, dphi);
            const double w = ElementQuadrature::weights[q] * h;
            for (int i = 0; i <= p; ++i)
                for (int j = i; j <= p; ++j) local[i][j] += w * phi[i] * phi[j];
        }
    });
}

std::vector<double> load_vector(const FeSpace& space, const std::function<double(double)>& f) {
    std::vector<double> b(space.dofs(), 0.0);
    const int p = space.degree();
    double phi[3], dphi[3];
    for (std::size_t e = 0; e < space.elements(); ++e) {
        for (std::size_t q = 0; q < kQ; ++q) {
            shape(p, ElementQuadrature::nodes[q], phi, dphi);
            const double w = ElementQuadrature::weights[q] * space.h() * f(space.quad_x(e, q));
            for (int l = 0; l <= p; ++l) {
                const long d = dof_of(space, p * e + l);
                if (d >= 0) b[static_cast<std::size_t>(d)] += w * phi[l];
            }
        }
    }
    return b;
}

std::vector<double> flux_load(const FeSpace& space, const ElementField& g) {
    if (g.elements() != space.elements()) throw ValidationError("flux field does not match the mesh");
    std::vector<double> b(space.dofs(), 0.0);
    const int p = space.degree();
    double phi[3], dphi[3][3];
    for (std::size_t q = 0; q < kQ; ++q) shape(p, ElementQuadrature::nodes[q], phi, dphi[q]);
    for (std::size_t e = 0; e < space.elements(); ++e) {
        for (std::size_t q = 0; q < kQ; ++q) {
            // h * (1/h) cancels
            const double w = ElementQuadrature::weights[q] * g.at(e, q);
            for (int l = 0; l <= p; ++l) {
                const long d = dof_of(space, p * e + l);
                if (d >= 0) b[static_cast<std::size_t>(d)] += w * dphi[q][l];
            }
        }
    }
    return b;
}

BandedCholesky::BandedCholesky(const BandedMatrix& matrix)
    : n_(matrix.size()), kd_(matrix.bandwidth()), factor_(matrix.band().begin(), matrix.band().end()) {
    const lapack_int info = LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'U', static_cast<lapack_int>(n_),
                                           static_cast<lapack_int>(kd_), factor_.data(),
                                           static_cast<lapack_int>(kd_ + 1));
    if (info != 0) {
        throw Error("banded Cholesky failed (matrix not SPD), LAPACK info = " + std::to_string(info));
    }
}

std::vector<double> BandedCholesky::solve(std::span<const double> rhs) const {
    if (rhs.size() != n_) throw ValidationError("right-hand side length mismatch");
    std::vector<double> x(rhs.begin(), rhs.end());
    const lapack_int info =
        LAPACKE_dpbtrs(LAPACK_COL_MAJOR, 'U', static_cast<lapack_int>(n_), static_cast<lapack_int>(kd_), 1,
                       factor_.data(), static_cast<lapack_int>(kd_ + 1), x.data(), static_cast<lapack_int>(n_));
    if (info != 0) throw Error("banded triangular solve failed, LAPACK info = " + std::to_string(info));
    return x;
}

DirichletSolver::DirichletSolver(const FeSpace& space, const ElementField& a)
    : space_(space), stiffness_(assemble_stiffness(space, a)), factor_(stiffness_) {}

GridFunction DirichletSolver::solve(const std::function<double(double)>& f) const {
    return solve_load(load_vector(space_, f));
}

GridFunction DirichletSolver::solve_load(std::span<const double> load) const {
    return GridFunction(space_, factor_.solve(load));
}

GridFunction solve_dirichlet(const FeSpace& space, const ElementField& a, const std::function<double(double)>& f) {
    return DirichletSolver(space, a).solve(f);
}

double norm_V(const GridFunction& u) {
    const ElementField du = derivative_at_quadrature(u);
    double s = 0.0;
    for (std::size_t e = 0; e < du.elements(); ++e)
        for (std::size_t q = 0; q < kQ; ++q) s += ElementQuadrature::weights[q] * du.at(e, q) * du.at(e, q);
    return std::sqrt(s * u.space().h());
}

double energy(const GridFunction& u, const ElementField& a) {
    const ElementField du = derivative_at_quadrature(u);
    if (a.elements() != du.elements()) throw ValidationError("coefficient field does not match the mesh");
    double s = 0.0;
    for (std::size_t e = 0; e < du.elements(); ++e)
        for (std::size_t q = 0; q < kQ; ++q)
            s += ElementQuadrature::weights[q] * a.at(e, q) * du.at(e, q) * du.at(e, q);
    return s * u.space().h();
}

double norm_Ltau(const ElementField& field, double tau) {
    if (!(tau >= 1.0)) throw ValidationError("L^tau norm requires tau >= 1");
    if (field.elements() == 0) return 0.0;
    const double h = 1.0 / static_cast<double>(field.elements());
    double s = 0.0;
    for (std::size_t e = 0; e < field.elements(); ++e)
        for (std::size_t q = 0; q < kQ; ++q)
            s += ElementQuadrature::weights[q] * std::pow(std::abs(field.at(e, q)), tau);
    return std::pow(s * h, 1.0 / tau);
}

double norm_L2(const ElementField& field) {
    if (field.elements() == 0) return 0.0;
    const double h = 1.0 / static_cast<double>(field.elements());
    double s = 0.0;
    for (std::size_t e = 0; e < field.elements(); ++e)
        for (std::size_t q = 0; q < kQ; ++q) s += ElementQuadrature::weights[q] * field.at(e, q) * field.at(e, q);
    return std::sqrt(s * h);
}

double discrete_laplacian_norm(const GridFunction& u) {
    const FeSpace& sp = u.space();
    const BandedMatrix K = assemble_stiffness(sp, ElementField(sp.elements(), 1.0));
    const std::vector<double> g = K.apply(u.coeffs());
    const std::vector<double> z = BandedCholesky(assemble_mass(sp)).solve(g);
    return std::sqrt(std::max(0.0, std::inner_product(g.begin(), g.end(), z.begin(), 0.0)));
}

GridFunction project(const GridFunction& u, const FeSpace& coarse) {
    const FeSpace& fine = u.space();
    if (!coarse.nested_in(fine)) {
        throw ValidationError("projection target (" + std::to_string(coarse.elements()) + " elements, P" +
                              std::to_string(coarse.degree()) + ") is not nested in the source space");
    }
    if (coarse == fine) return u;
    const ElementField du = derivative_at_quadrature(u);
    std::vector<double> b(coarse.dofs(), 0.0);
    const int p = coarse.degree();
    const std::size_t ratio = fine.elements() / coarse.elements();
    const double inv_hc = static_cast<double>(coarse.elements());
    double phi[3], dphi[3];
    for (std::size_t e = 0; e < fine.elements(); ++e) {
        const std::size_t ec = e / ratio;
        for (std::size_t q = 0; q < kQ; ++q) {
            const double xi_c = (static_cast<double>(e % ratio) + ElementQuadrature::nodes[q]) / static_cast<double>(ratio);
            shape(p, xi_c, phi, dphi);
            const double w = ElementQuadrature::weights[q] * fine.h() * du.at(e, q) * inv_hc;
            for (int l = 0; l <= p; ++l) {
                const long d = dof_of(coarse, p * ec + l);
                if (d >= 0) b[static_cast<std::size_t>(d)] += w * dphi[l];
            }
        }
    }
    return DirichletSolver(coarse, ElementField(coarse.elements(), 1.0)).solve_load(b);
}

GridFunction prolong(const GridFunction& u, const FeSpace& fine) {
    if (!u.space().nested_in(fine)) throw ValidationError("prolongation target is not a refinement");
    GridFunction out(fine);
    for (std::size_t d = 0; d < fine.dofs(); ++d) out.coeffs()[d] = u.value(fine.node_x(d + 1));
    return out;
}

HierarchicalBasis::HierarchicalBasis(unsigned levels) : levels_(levels) {
    if (levels < 1 || levels > 30) throw ValidationError("hierarchical basis needs 1..30 levels");
}

unsigned HierarchicalBasis::level_of(std::size_t i) const {
    unsigned l = 0;
    while (((std::size_t{2} << l) - 1) <= i) ++l;
    return l;
}

double HierarchicalBasis::energy_weight(std::size_t i) const {
    return std::ldexp(1.0, static_cast<int>(level_of(i)) + 2);
}

std::vector<double> HierarchicalBasis::to_hierarchical(const GridFunction& u) const {
    if (!(u.space() == space())) throw ValidationError("hierarchical basis expects P1 on 2^levels elements");
    std::vector<double> c(size());
    for (unsigned l = 0; l < levels_; ++l) {
        const std::size_t half = std::size_t{1} << (levels_ - l - 1);
        for (std::size_t k = 0; k < (std::size_t{1} << l); ++k) {
            const std::size_t node = (2 * k + 1) * half;
            c[(std::size_t{1} << l) - 1 + k] =
                u.node_value(node) - 0.5 * (u.node_value(node - half) + u.node_value(node + half));
        }
    }
    return c;
}

GridFunction HierarchicalBasis::to_nodal(std::span<const double> coeffs) const {
    if (coeffs.size() != size()) throw ValidationError("hierarchical coefficient count mismatch");
    const FeSpace sp = space();
    std::vector<double> nodal(sp.node_count(), 0.0);
    for (unsigned l = 0; l < levels_; ++l) {
        const std::size_t half = std::size_t{1} << (levels_ - l - 1);
        for (std::size_t k = 0; k < (std::size_t{1} << l); ++k) {
            const std::size_t node = (2 * k + 1) * half;
            nodal[node] = coeffs[(std::size_t{1} << l) - 1 + k] + 0.5 * (nodal[node - half] + nodal[node + half]);
        }
    }
    return GridFunction(sp, std::vector<double>(nodal.begin() + 1, nodal.end() - 1));
}

GridFunction best_nterm_spatial(const GridFunction& u, const HierarchicalBasis& basis, std::size_t n) {
    if (n >= basis.size()) return u;
    std::vector<double> c = basis.to_hierarchical(u);
    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return c[a] * c[a] * basis.energy_weight(a) > c[b] * c[b] * basis.energy_weight(b);
    });
    for (std::size_t k = n; k < order.size(); ++k) c[order[k]] = 0.0;
    return basis.to_nodal(c);
}

LogLogFit fit_loglog(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw ValidationError("log-log fit needs at least two points");
    const double m = static_cast<double>(points.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : points) {
        if (!(x > 0.0) || !(y > 0.0)) throw ValidationError("log-log fit needs positive data");
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = m * sxx - sx * sx;
    if (!(std::abs(denom) > 0.0)) throw ValidationError("log-log fit needs distinct abscissae");
    LogLogFit fit;
    fit.slope = (m * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / m;
    double r2 = 0.0;
    for (const auto& [x, y] : points) {
        const double d = std::log(y) - (fit.intercept + fit.slope * std::log(x));
        r2 += d * d;
    }
    fit.residual = std::sqrt(r2 / m);
    return fit;
}

double measure_spatial_rate(std::span<const std::pair<double, double>> errors) {
    return -fit_loglog(errors).slope;
}

void write_csv(std::ostream& out, const GridFunction& u) {
    out << "x,value\n";
    out.precision(17);
    for (std::size_t i = 0; i < u.space().node_count(); ++i) out << u.space().node_x(i) << ',' << u.node_value(i) << '\n';
}

}  // namespace spx
