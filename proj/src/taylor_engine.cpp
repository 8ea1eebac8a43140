#include "spx/taylor_engine.hpp"

#include "spx/error.hpp"
#include "spx/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <limits>
#include <random>
#include <string>

namespace spx {

namespace {

constexpr std::size_t kQ = ElementQuadrature::size;

// Model data sampled once at the quadrature points of the space.
struct Sampled {
    ElementField abar, dabar, load;
    std::vector<ElementField> psi, dpsi;
};

Sampled sample_model(const AffineModel& model, const FeSpace& space, const LoadFunction& load) {
    Sampled s;
    s.abar = sample_field(model.abar(), space);
    s.dabar = sample_field_derivative(model.abar(), space);
    s.load = sample(space, load);
    for (const auto& f : model.psi()) {
        s.psi.push_back(sample_field(f, space));
        s.dpsi.push_back(sample_field_derivative(f, space));
    }
    return s;
}

// int w * g^2 over the mesh.
double weighted_square(const ElementField& g, const ElementField& w) {
    double s = 0.0;
    for (std::size_t e = 0; e < g.elements(); ++e)
        for (std::size_t q = 0; q < kQ; ++q) s += ElementQuadrature::weights[q] * w.at(e, q) * g.at(e, q) * g.at(e, q);
    return s / static_cast<double>(g.elements());
}

// Parents (j, slot of nu - e_j) of a nonzero index.
template <class Lookup>
std::vector<std::pair<std::uint32_t, std::size_t>> parents(const MultiIndex& nu, const Lookup& lookup) {
    std::vector<std::pair<std::uint32_t, std::size_t>> out;
    for (const auto& entry : nu.entries()) {
        auto it = lookup.find(nu.decremented(entry.dim));
        if (it == lookup.end()) throw Error("internal: ancestor of " + nu.to_json() + " missing from the expansion");
        out.emplace_back(entry.dim, it->second);
    }
    return out;
}

// -abar Delta t_nu = abar' t_nu' + sum_j (psi_j Delta t_{nu-e_j} + psi_j' t_{nu-e_j}'),
// with the load on the right for nu = 0.
ElementField laplacian_field(const Sampled& s, const ElementField& dt, bool root,
                             std::span<const std::pair<std::uint32_t, std::size_t>> par,
                             std::span<const ElementField> deriv, std::span<const ElementField> lap) {
    ElementField out(dt.elements());
    for (std::size_t e = 0; e < dt.elements(); ++e) {
        for (std::size_t q = 0; q < kQ; ++q) {
            const double a = s.abar.at(e, q);
            if (!(a > 1e-12)) throw ValidationError("nominal coefficient vanishes at element " + std::to_string(e));
            double r = s.dabar.at(e, q) * dt.at(e, q);
            if (root) r += s.load.at(e, q);
            for (const auto& [j, slot] : par)
                r += s.psi[j - 1].at(e, q) * lap[slot].at(e, q) + s.dpsi[j - 1].at(e, q) * deriv[slot].at(e, q);
            out.at(e, q) = -r / a;
        }
    }
    return out;
}

void fill_laplacian_norms(TaylorTerm& term, const ElementField& lap, const ElementField& abar,
                          std::span<const double> taus) {
    term.norm_W = norm_L2(lap);
    term.laplacian_energy = weighted_square(lap, abar);
    term.ltau.clear();
    for (double tau : taus) term.ltau.emplace_back(tau, norm_Ltau(lap, tau));
}

void check_weights(const WeightSequence& rho) {
    for (double r : rho.values())
        if (!(r > 0.0)) throw ValidationError("weights must be positive");
}

}  // namespace

double TaylorTerm::ltau_norm(double tau) const {
    for (const auto& [t, v] : ltau)
        if (t == tau) return v;
    if (laplacian) return norm_Ltau(*laplacian, tau);
    throw ValidationError("L^tau norm of the Laplacian field was not cached for tau = " + std::to_string(tau));
}

const TaylorTerm* TaylorExpansion::find(const MultiIndex& nu) const {
    auto it = lookup_.find(nu);
    return it == lookup_.end() ? nullptr : &terms_[it->second];
}

bool TaylorExpansion::layer_complete(std::uint32_t n) const {
    if (n >= layer_sizes_.size()) return false;
    return layer_sizes_[n] == full_layer_size(static_cast<std::uint32_t>(model_->dims()), n);
}

TaylorExpansion compute_taylor(const AffineModel& model, const FeSpace& space, const DownwardClosedSet& indices,
                               TaylorOptions options) {
    if (indices.max_dim() > model.dims())
        throw ValidationError("index set uses dimension " + std::to_string(indices.max_dim()) + " but the model has " +
                              std::to_string(model.dims()));

    TaylorExpansion ex;
    ex.model_ = std::make_shared<const AffineModel>(model);
    ex.space_ = space;
    ex.load_ = options.load;
    ex.max_order_ = indices.max_order();
    ex.has_laplacians_ = options.laplacians;
    ex.has_fields_ = options.retain_fields;

    const Sampled s = sample_model(model, space, options.load);
    const DirichletSolver solver(space, s.abar);

    std::vector<std::vector<MultiIndex>> layers(ex.max_order_ + 1);
    for (std::uint32_t n = 0; n <= ex.max_order_; ++n) layers[n] = layer(indices, n);
    for (const auto& l : layers) ex.layer_sizes_.push_back(l.size());

    const std::size_t total = indices.size();
    ex.terms_.resize(total);
    std::vector<ElementField> deriv(total), lap(total);

    std::size_t begin = 0;
    std::size_t prev_begin = 0;
    for (std::uint32_t n = 0; n <= ex.max_order_; ++n) {
        const auto& members = layers[n];
        for (std::size_t i = 0; i < members.size(); ++i) ex.lookup_.emplace(members[i], begin + i);

        parallel_for(members.size(), options.threads, [&](std::size_t i) {
            const std::size_t slot = begin + i;
            TaylorTerm& term = ex.terms_[slot];
            term.index = members[i];
            const auto par = n == 0 ? std::vector<std::pair<std::uint32_t, std::size_t>>{}
                                    : parents(term.index, ex.lookup_);
            GridFunction t(space);
            if (n == 0) {
                t = solver.solve(options.load);
            } else {
                ElementField g(space.elements());
                for (const auto& [j, p] : par) {
                    auto gv = g.values();
                    const auto pv = s.psi[j - 1].values();
                    const auto dv = deriv[p].values();
                    for (std::size_t k = 0; k < gv.size(); ++k) gv[k] += pv[k] * dv[k];
                }
                auto rhs = flux_load(space, g);
                for (double& v : rhs) v = -v;
                t = solver.solve_load(rhs);
            }
            deriv[slot] = derivative_at_quadrature(t);
            term.norm_V = norm_L2(deriv[slot]);
            term.energy = weighted_square(deriv[slot], s.abar);
            if (options.laplacians) {
                lap[slot] = laplacian_field(s, deriv[slot], n == 0, par, deriv, lap);
                fill_laplacian_norms(term, lap[slot], s.abar, options.ltau_exponents);
                if (options.retain_fields) term.laplacian = lap[slot];
            }
            if (options.retain_fields) term.t = std::move(t);
        });

        // Fields of layer n-1 are no longer needed by anyone.
        if (n >= 1) {
            for (std::size_t k = prev_begin; k < begin; ++k) {
                deriv[k] = ElementField();
                lap[k] = ElementField();
            }
        }
        prev_begin = begin;
        begin += members.size();
    }
    return ex;
}

void compute_laplacians(TaylorExpansion& ex, std::span<const double> ltau_exponents) {
    if (!ex.has_fields_) throw ValidationError("Laplacians need an expansion computed with retained fields");
    const Sampled s = sample_model(*ex.model_, ex.space_, ex.load_);
    const std::size_t total = ex.terms_.size();
    std::vector<ElementField> deriv(total), lap(total);
    for (std::size_t k = 0; k < total; ++k) {
        TaylorTerm& term = ex.terms_[k];
        const auto par = term.index.is_zero() ? std::vector<std::pair<std::uint32_t, std::size_t>>{}
                                              : parents(term.index, ex.lookup_);
        deriv[k] = derivative_at_quadrature(*term.t);
        lap[k] = laplacian_field(s, deriv[k], term.index.is_zero(), par, deriv, lap);
        fill_laplacian_norms(term, lap[k], s.abar, ltau_exponents);
        term.laplacian = lap[k];
    }
    ex.has_laplacians_ = true;
}

SummabilityReport layer_sums(const TaylorExpansion& ex, const WeightSequence& rho) {
    check_weights(rho);
    SummabilityReport rep;
    for (std::uint32_t n = 0; n <= ex.max_order(); ++n)
        rep.layers.push_back({n, 0, ex.layer_complete(n), 0.0, ex.has_laplacians() ? 0.0 : -1.0});
    for (const auto& term : ex.terms()) {
        const double w = weight_power(rho, term.index);
        LayerSum& l = rep.layers[term.index.order()];
        ++l.size;
        l.D += w * w * term.energy;
        if (ex.has_laplacians()) l.C += w * w * term.laplacian_energy;
    }
    rep.theta = theta_weighted(ex.model(), rho);
    rep.kappa = rep.theta / (2.0 - rep.theta);
    return rep;
}

double weighted_l2(const TaylorExpansion& ex, const WeightSequence& rho, NormKind which) {
    check_weights(rho);
    if (which == NormKind::W && !ex.has_laplacians()) throw ValidationError("W norms need Laplacian fields");
    double s = 0.0;
    for (const auto& term : ex.terms()) {
        const double v = weight_power(rho, term.index) * (which == NormKind::V ? term.norm_V : term.norm_W);
        s += v * v;
    }
    return s;
}

double lp_quasinorm(std::span<const double> values, double p) {
    if (!(p > 0.0)) throw ValidationError("l^p requires p > 0");
    double s = 0.0;
    for (double v : values) s += std::pow(std::abs(v), p);
    return std::pow(s, 1.0 / p);
}

double holder_lp_bound(const TaylorExpansion& ex, const WeightSequence& rho, double p, NormKind which) {
    if (!(p > 0.0 && p < 2.0)) throw ValidationError("Hoelder bound requires 0 < p < 2");
    const double q = 2.0 * p / (2.0 - p);
    double log_prod = 0.0;
    for (std::uint32_t j = 1; j <= ex.model().dims(); ++j) {
        if (!(rho[j] > 1.0)) throw ValidationError("Hoelder bound requires rho_j > 1");
        log_prod -= std::log1p(-std::pow(rho[j], -q));
    }
    return std::sqrt(weighted_l2(ex, rho, which)) * std::exp(log_prod / q);
}

SummabilityReport summability_report(const TaylorExpansion& ex, const WeightSequence& rho,
                                     std::span<const double> p_values) {
    SummabilityReport rep = layer_sums(ex, rho);
    rep.weighted_l2_V = weighted_l2(ex, rho, NormKind::V);
    if (ex.has_laplacians()) rep.weighted_l2_W = weighted_l2(ex, rho, NormKind::W);
    std::vector<double> norms;
    for (const auto& term : ex.terms()) norms.push_back(term.norm_V);
    for (double p : p_values) {
        double bound = std::numeric_limits<double>::quiet_NaN();
        bool finite = p < 2.0;
        for (std::uint32_t j = 1; j <= ex.model().dims(); ++j) finite = finite && rho[j] > 1.0;
        if (finite) bound = holder_lp_bound(ex, rho, p, NormKind::V);
        rep.lp.push_back({p, lp_quasinorm(norms, p), bound});
    }
    std::sort(norms.begin(), norms.end(), std::greater<>());
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < norms.size(); ++k)
        if (norms[k] > 0.0) pts.emplace_back(static_cast<double>(k + 1), norms[k]);
    if (pts.size() >= 2) rep.tail_exponent = -fit_loglog(pts).slope;
    return rep;
}

std::vector<RankedIndex> select_best_n(const TaylorExpansion& ex, std::size_t n, NormKind metric) {
    if (metric == NormKind::W && !ex.has_laplacians()) throw ValidationError("W norms need Laplacian fields");
    std::vector<RankedIndex> all;
    all.reserve(ex.terms().size());
    for (const auto& term : ex.terms())
        all.push_back({term.index, metric == NormKind::V ? term.norm_V : term.norm_W});
    std::sort(all.begin(), all.end(), [](const RankedIndex& a, const RankedIndex& b) {
        if (a.norm != b.norm) return a.norm > b.norm;
        return canonical_compare(a.index, b.index) < 0;
    });
    if (n < all.size()) all.resize(n);
    return all;
}

GridFunction eval_truncated(const TaylorExpansion& ex, std::span<const MultiIndex> subset, std::span<const double> y) {
    if (!ex.has_fields()) throw ValidationError("evaluation needs an expansion computed with retained fields");
    if (y.size() != ex.model().dims()) throw ValidationError("parameter vector has the wrong length");
    for (double v : y)
        if (!(std::abs(v) <= 1.0)) throw ValidationError("parameters must satisfy |y_j| <= 1");
    GridFunction out(ex.space());
    for (const auto& nu : subset) {
        const TaylorTerm* term = ex.find(nu);
        if (!term) throw ValidationError("index " + nu.to_json() + " is not stored in the expansion");
        // y^nu as sign * exp(sum nu_j log|y_j|) so tiny products underflow cleanly.
        double log_abs = 0.0;
        bool negative = false;
        bool zero = false;
        for (const auto& e : nu.entries()) {
            const double v = y[e.dim - 1];
            if (v == 0.0) {
                zero = true;
                break;
            }
            log_abs += e.exponent * std::log(std::abs(v));
            if (v < 0.0 && (e.exponent % 2 == 1)) negative = !negative;
        }
        if (zero) continue;
        const double c = std::exp(log_abs);
        out.axpy(negative ? -c : c, *term->t);
    }
    return out;
}

SupErrorEstimate sup_error_at(const TaylorExpansion& ex, std::span<const MultiIndex> subset,
                              std::span<const std::vector<double>> points) {
    SupErrorEstimate est{0.0, 0.0, 0, points.size()};
    std::unordered_map<MultiIndex, bool, MultiIndexHash> kept;
    for (const auto& nu : subset) kept.emplace(nu, true);
    for (const auto& term : ex.terms())
        if (!kept.contains(term.index)) est.tail_bound += term.norm_V;

    const CoefficientSampler sampler(ParametricModel{ex.model()}, ex.space());
    for (const auto& y : points) {
        const GridFunction approx = eval_truncated(ex, subset, y);
        const ElementField a = sampler(y);
        GridFunction diff = solve_dirichlet(ex.space(), a, ex.load());
        diff -= approx;
        est.estimate = std::max(est.estimate, norm_V(diff));
    }
    return est;
}

SupErrorEstimate sup_error_estimate(const TaylorExpansion& ex, std::span<const MultiIndex> subset,
                                    std::size_t samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<std::vector<double>> points(samples, std::vector<double>(ex.model().dims()));
    for (auto& y : points)
        for (double& v : y) v = unif(rng);
    SupErrorEstimate est = sup_error_at(ex, subset, points);
    est.seed = seed;
    return est;
}

double ltau_summability(const TaylorExpansion& ex, double tau, const WeightSequence& rho) {
    check_weights(rho);
    if (!ex.has_laplacians()) throw ValidationError("L^tau summability needs Laplacian fields");
    double s = 0.0;
    for (const auto& term : ex.terms())
        s += std::pow(weight_power(rho, term.index) * (term.norm_V + term.ltau_norm(tau)), tau);
    return s;
}

double sorted_tail_rate(std::vector<double> norms, std::size_t first, std::size_t last, double q) {
    if (!(q > 0.0)) throw ValidationError("tail exponent requires q > 0");
    if (first < 1 || last <= first || last >= norms.size())
        throw ValidationError("tail fit range must satisfy 1 <= first < last < number of norms");
    std::sort(norms.begin(), norms.end(), std::greater<>());
    // tails[n] = sum_{k > n} a_k^q, ranks 1-based.
    std::vector<double> tails(norms.size() + 1, 0.0);
    for (std::size_t k = norms.size(); k-- > 0;) tails[k] = tails[k + 1] + std::pow(norms[k], q);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t n = first; n <= last; ++n)
        if (tails[n] > 0.0) pts.emplace_back(static_cast<double>(n), std::pow(tails[n], 1.0 / q));
    if (pts.size() < 2) throw ValidationError("tail vanishes on the fit range");
    return -fit_loglog(pts).slope;
}

void write_csv(std::ostream& out, const TaylorExpansion& ex) {
    out << "nu,order,norm_V,norm_W\n";
    out.precision(17);
    for (const auto& term : ex.terms())
        out << '"' << term.index.to_json() << "\"," << term.index.order() << ',' << term.norm_V << ','
            << (ex.has_laplacians() ? term.norm_W : std::nan("")) << '\n';
}

}  // namespace spx
