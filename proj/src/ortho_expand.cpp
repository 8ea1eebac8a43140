#include "spx/ortho_expand.hpp"

#include "spx/error.hpp"
#include "spx/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

namespace spx {

namespace {

bool is_affine(const ParametricModel& m) { return std::holds_alternative<AffineModel>(m); }

void check_family(const OrthoFamily& family, const ParametricModel& model) {
    if (is_affine(model) && family.kind() != FamilyKind::Jacobi)
        throw ValidationError("affine models are expanded in Jacobi polynomials");
    if (!is_affine(model) && family.kind() != FamilyKind::Hermite)
        throw ValidationError("lognormal models are expanded in Hermite polynomials");
}

// Products prod_j P_{nu_j}(y_j) from per-dimension tables.
double tensor_poly(const MultiIndex& nu, const std::vector<std::vector<double>>& table) {
    double p = 1.0;
    for (const auto& e : nu.entries()) p *= table[e.dim - 1][e.exponent];
    return p;
}

std::vector<std::vector<double>> poly_table(const OrthoFamily& family, std::span<const double> y, std::uint32_t K) {
    std::vector<std::vector<double>> table(y.size(), std::vector<double>(K + 1));
    for (std::size_t j = 0; j < y.size(); ++j) family.eval_all(K, y[j], table[j]);
    return table;
}

std::uint32_t max_exponent(std::span<const MultiIndex> indices) {
    std::uint32_t K = 0;
    for (const auto& nu : indices)
        for (const auto& e : nu.entries()) K = std::max(K, e.exponent);
    return K;
}

GridFunction solve_at(const CoefficientSampler& sampler, const ParametricLoad& load, std::span<const double> y) {
    const ElementField a = sampler(y);
    return solve_dirichlet(sampler.space(), a, load.at(y));
}

}  // namespace

OrthoFamily OrthoFamily::jacobi(double alpha, double beta) {
    if (!(alpha > -1.0) || !(beta > -1.0)) throw ValidationError("Jacobi parameters must exceed -1");
    return OrthoFamily(FamilyKind::Jacobi, alpha, beta);
}

OrthoFamily OrthoFamily::hermite() { return OrthoFamily(FamilyKind::Hermite, 0.0, 0.0); }

std::string OrthoFamily::name() const {
    if (kind_ == FamilyKind::Hermite) return "hermite";
    std::ostringstream s;
    s << "jacobi(" << alpha_ << "," << beta_ << ")";
    return s.str();
}

double OrthoFamily::a(std::uint32_t k) const {
    if (kind_ == FamilyKind::Hermite) return 0.0;
    const double ab = alpha_ + beta_;
    if (k == 0) return (beta_ - alpha_) / (ab + 2.0);
    const double s = 2.0 * k + ab;
    return (beta_ * beta_ - alpha_ * alpha_) / (s * (s + 2.0));
}

double OrthoFamily::b(std::uint32_t k) const {
    if (k == 0) throw ValidationError("recurrence coefficient b_k needs k >= 1");
    if (kind_ == FamilyKind::Hermite) return std::sqrt(static_cast<double>(k));
    const double al = alpha_, be = beta_, ab = alpha_ + beta_;
    if (k == 1) return std::sqrt(4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab)));
    const double kk = k;
    const double s = 2.0 * kk + ab;
    return std::sqrt(4.0 * kk * (kk + al) * (kk + be) * (kk + ab) / (s * s * (s + 1.0) * (s - 1.0)));
}

void OrthoFamily::eval_all(std::uint32_t K, double t, std::span<double> out) const {
    if (out.size() < K + 1) throw ValidationError("output buffer too small for polynomial values");
    out[0] = 1.0;
    if (K == 0) return;
    out[1] = (t - a(0)) / b(1);
    for (std::uint32_t k = 1; k < K; ++k) out[k + 1] = ((t - a(k)) * out[k] - b(k) * out[k - 1]) / b(k + 1);
}

double jacobi_norm_const(std::uint32_t k, double alpha, double beta) {
    if (!(alpha > -1.0) || !(beta > -1.0)) throw ValidationError("Jacobi parameters must exceed -1");
    if (k == 0) return 1.0;
    const double kk = k;
    const double log_c2 = std::log(2.0 * kk + alpha + beta + 1.0) + std::lgamma(kk + 1.0) +
                          std::lgamma(kk + alpha + beta + 1.0) + std::lgamma(alpha + 1.0) + std::lgamma(beta + 1.0) -
                          std::lgamma(kk + alpha + 1.0) - std::lgamma(kk + beta + 1.0) -
                          std::lgamma(alpha + beta + 2.0);
    return std::exp(0.5 * log_c2);
}

double eval_poly(const OrthoFamily& family, std::uint32_t k, double t) {
    std::vector<double> v(k + 1);
    family.eval_all(k, t, v);
    return v[k];
}

GaussRule gauss_rule(const OrthoFamily& family, std::uint32_t q) {
    if (q == 0) throw ValidationError("a Gauss rule needs at least one point");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q, q);
    for (std::uint32_t k = 0; k < q; ++k) {
        J(k, k) = family.a(k);
        if (k + 1 < q) J(k, k + 1) = J(k + 1, k) = family.b(k + 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    GaussRule rule;
    for (std::uint32_t k = 0; k < q; ++k) {
        rule.nodes.push_back(eig.eigenvalues()(k));
        const double v0 = eig.eigenvectors()(0, k);
        rule.weights.push_back(v0 * v0);
    }
    // Symmetric measures: snap the middle node of odd rules to exactly zero.
    if (family.alpha() == family.beta() && q % 2 == 1) rule.nodes[q / 2] = 0.0;
    return rule;
}

TensorQuadrature::TensorQuadrature(const OrthoFamily& family, std::uint32_t dims, std::uint32_t q)
    : family_(family), dims_(dims), q_(q), rule_(gauss_rule(family, q)), size_(1) {
    for (std::uint32_t j = 0; j < dims; ++j) {
        if (size_ * q > max_nodes)
            throw ValidationError("tensor quadrature with " + std::to_string(q) + " points in " + std::to_string(dims) +
                                  " dimensions exceeds " + std::to_string(max_nodes) + " nodes");
        size_ *= q;
    }
}

std::vector<std::uint32_t> TensorQuadrature::digits(std::size_t i) const {
    std::vector<std::uint32_t> d(dims_);
    for (std::uint32_t j = 0; j < dims_; ++j) {
        d[j] = static_cast<std::uint32_t>(i % q_);
        i /= q_;
    }
    return d;
}

std::vector<double> TensorQuadrature::node(std::size_t i) const {
    std::vector<double> y;
    for (auto d : digits(i)) y.push_back(rule_.nodes[d]);
    return y;
}

double TensorQuadrature::weight(std::size_t i) const {
    double w = 1.0;
    for (auto d : digits(i)) w *= rule_.weights[d];
    return w;
}

std::function<double(double)> ParametricLoad::at(std::span<const double> y) const {
    if (terms.empty()) return base;
    std::vector<std::pair<double, std::function<double(double)>>> active;
    for (std::size_t j = 0; j < terms.size() && j < y.size(); ++j)
        if (y[j] != 0.0) active.emplace_back(y[j], terms[j]);
    return [b = base, active](double x) {
        double v = b(x);
        for (const auto& [c, f] : active) v += c * f(x);
        return v;
    };
}

const OrthoTerm* OrthoExpansion::find(const MultiIndex& nu) const {
    auto it = lookup_.find(nu);
    return it == lookup_.end() ? nullptr : &terms_[it->second];
}

OrthoExpansion compute_coeffs(const ParametricModel& model, const FeSpace& space, const DownwardClosedSet& indices,
                              const TensorQuadrature& quad, const OrthoOptions& options) {
    check_family(quad.family(), model);
    if (quad.dims() != model_dims(model))
        throw ValidationError("quadrature has " + std::to_string(quad.dims()) + " dimensions but the model has " +
                              std::to_string(model_dims(model)));
    const auto members = indices.members();
    const std::uint32_t K = max_exponent(members);
    if (K + 1 > quad.points())
        throw ValidationError("index degree " + std::to_string(K) + " needs at least " + std::to_string(K + 1) +
                              " quadrature points per dimension");

    const CoefficientSampler sampler(model, space);
    OrthoExpansion ex;
    ex.family_ = quad.family();
    ex.dims_ = quad.dims();
    ex.q_ = quad.points();
    ex.space_ = space;
    ex.terms_.reserve(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
        ex.terms_.push_back({members[k], GridFunction(space), 0.0, 0.0});
        ex.lookup_.emplace(members[k], k);
    }

    // Per-dimension polynomial values at the 1D nodes, shared by all tensor nodes.
    std::vector<std::vector<double>> at_node(quad.points(), std::vector<double>(K + 1));
    for (std::uint32_t d = 0; d < quad.points(); ++d) quad.family().eval_all(K, quad.rule().nodes[d], at_node[d]);

    // Solves run in parallel per batch; accumulation stays in node order.
    constexpr std::size_t batch = 256;
    std::vector<GridFunction> sol(std::min(batch, quad.size()), GridFunction(space));
    for (std::size_t first = 0; first < quad.size(); first += batch) {
        const std::size_t count = std::min(batch, quad.size() - first);
        parallel_for(count, options.threads, [&](std::size_t k) {
            const auto y = quad.node(first + k);
            sol[k] = solve_at(sampler, options.load, y);
        });
        for (std::size_t k = 0; k < count; ++k) {
            const auto dig = quad.digits(first + k);
            const double w = quad.weight(first + k);
            const double nv = norm_V(sol[k]);
            ex.solution_energy_ += w * nv * nv;
            for (auto& term : ex.terms_) {
                double p = w;
                for (const auto& e : term.index.entries()) p *= at_node[dig[e.dim - 1]][e.exponent];
                if (p != 0.0) term.v.axpy(p, sol[k]);
            }
        }
    }
    for (auto& term : ex.terms_) {
        term.norm_V = norm_V(term.v);
        term.norm_X = discrete_laplacian_norm(term.v);
    }
    return ex;
}

ParsevalCheck parseval_check(const OrthoExpansion& ex) {
    ParsevalCheck c{0.0, ex.solution_energy()};
    for (const auto& t : ex.terms()) c.lhs += t.norm_V * t.norm_V;
    return c;
}

double l2_error_truncation(const OrthoExpansion& ex, std::span<const MultiIndex> subset, const ParametricModel& model,
                           const ErrorSampling& sampling, const OrthoOptions& options) {
    check_family(ex.family(), model);
    std::vector<const OrthoTerm*> kept;
    for (const auto& nu : subset) {
        const OrthoTerm* t = ex.find(nu);
        if (!t) throw ValidationError("index " + nu.to_json() + " is not stored in the expansion");
        kept.push_back(t);
    }
    const std::uint32_t K = max_exponent(subset);
    const CoefficientSampler sampler(model, ex.space());

    std::vector<std::vector<double>> points;
    std::vector<double> weights;
    if (sampling.samples == 0) {
        const TensorQuadrature quad(ex.family(), ex.quad_dims(), ex.quad_points());
        for (std::size_t i = 0; i < quad.size(); ++i) {
            points.push_back(quad.node(i));
            weights.push_back(quad.weight(i));
        }
    } else {
        std::mt19937_64 rng(sampling.seed);
        std::normal_distribution<double> normal;
        std::gamma_distribution<double> ga(ex.family().beta() + 1.0);
        std::gamma_distribution<double> gb(ex.family().alpha() + 1.0);
        for (std::size_t s = 0; s < sampling.samples; ++s) {
            std::vector<double> y(ex.quad_dims());
            for (double& v : y) {
                if (ex.family().kind() == FamilyKind::Hermite) {
                    v = normal(rng);
                } else {
                    // (1+t)/2 ~ Beta(beta+1, alpha+1) for the weight (1-t)^alpha (1+t)^beta
                    const double x = ga(rng);
                    const double z = gb(rng);
                    v = 2.0 * x / (x + z) - 1.0;
                }
            }
            points.push_back(std::move(y));
            weights.push_back(1.0 / static_cast<double>(sampling.samples));
        }
    }

    std::vector<double> sq(points.size());
    parallel_for(points.size(), options.threads, [&](std::size_t i) {
        GridFunction diff = solve_at(sampler, options.load, points[i]);
        const auto table = poly_table(ex.family(), points[i], K);
        for (const OrthoTerm* t : kept) diff.axpy(-tensor_poly(t->index, table), t->v);
        const double e = norm_V(diff);
        sq[i] = e * e;
    });
    double mean = 0.0;
    for (std::size_t i = 0; i < sq.size(); ++i) mean += weights[i] * sq[i];
    return std::sqrt(std::max(mean, 0.0));
}

std::vector<MultiIndex> ortho_best_n(const OrthoExpansion& ex, std::size_t n, bool by_X) {
    std::vector<const OrthoTerm*> order;
    for (const auto& t : ex.terms()) order.push_back(&t);
    std::sort(order.begin(), order.end(), [by_X](const OrthoTerm* a, const OrthoTerm* b) {
        const double x = by_X ? a->norm_X : a->norm_V;
        const double y = by_X ? b->norm_X : b->norm_V;
        if (x != y) return x > y;
        return canonical_compare(a->index, b->index) < 0;
    });
    std::vector<MultiIndex> out;
    for (std::size_t k = 0; k < std::min(n, order.size()); ++k) out.push_back(order[k]->index);
    return out;
}

void write_csv(std::ostream& out, const OrthoExpansion& ex) {
    out << "# family=" << ex.family().name() << ", dims=" << ex.quad_dims() << ", points=" << ex.quad_points() << '\n';
    out << "nu,order,norm_V,norm_X\n";
    out.precision(17);
    for (const auto& t : ex.terms())
        out << '"' << t.index.to_json() << "\"," << t.index.order() << ',' << t.norm_V << ',' << t.norm_X << '\n';
}

}  // namespace spx
