#include "spx/dof_alloc.hpp"

#include "spx/error.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace spx {

namespace {

void check_rates(double s, double t) {
    if (!(s > 0.0) || !(t > 0.0) || !std::isfinite(s) || !std::isfinite(t))
        throw ValidationError("rates s and t must be positive and finite");
}

// Both settings share one Lagrange problem, parameterized by k = 1 (sup) or 2 (l2).
AllocationPlan lagrange(std::span<const double> norms, double s, double t, double n, double k) {
    if (norms.empty()) throw ValidationError("allocation needs at least one coefficient");
    check_rates(s, t);
    if (!(n >= 1.0)) throw ValidationError("allocation needs n >= 1");
    for (double a : norms)
        if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("coefficient norms must be finite and >= 0");

    // minimize sum n_nu subject to sum n_nu^{-tk} a^k = n^{-sk}:
    // n_nu = eta a^{k/(1+tk)}, eta = n^{s/t} (sum a^{k/(1+tk)})^{1/(tk)}.
    const double e = k / (1.0 + t * k);
    double sum = 0.0;
    for (double a : norms)
        if (a > 0.0) sum += std::pow(a, e);

    AllocationPlan plan;
    plan.real_dofs.assign(norms.size(), 0.0);
    plan.dofs.assign(norms.size(), 1);
    if (sum == 0.0) {
        plan.N_int = norms.size();
        return plan;
    }
    plan.eta = std::pow(n, s / t) * std::pow(sum, 1.0 / (t * k));
    plan.N_real = std::pow(n, s / t) * std::pow(sum, (1.0 + t * k) / (t * k));
    double constraint = 0.0;
    for (std::size_t i = 0; i < norms.size(); ++i) {
        if (norms[i] == 0.0) continue;
        const double r = plan.eta * std::pow(norms[i], e);
        plan.real_dofs[i] = r;
        plan.dofs[i] = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(r)));
        constraint += std::pow(r, -t * k) * std::pow(norms[i], k);
    }
    const double target = std::pow(n, -s * k);
    plan.constraint_residual = std::abs(constraint - target) / target;
    for (auto d : plan.dofs) plan.N_int += d;
    return plan;
}

}  // namespace

RateParams RateParams::from_summability(double p_V, double p_X, double t, ErrorSetting setting) {
    const double c = setting == ErrorSetting::Sup ? 1.0 : 0.5;
    return {1.0 / p_V - c, t, p_V, p_X, setting};
}

RatePrediction predict_rate(const RateParams& p) {
    check_rates(p.s, p.t);
    if (!(p.p_V > 0.0 && p.p_V <= p.p_X && p.p_X < 2.0))
        throw ValidationError("summability exponents must satisfy 0 < p_V <= p_X < 2");
    const bool sup = p.setting == ErrorSetting::Sup;
    const double c = sup ? 1.0 : 0.5;
    RatePrediction r{};
    r.bracket_lo = 1.0 / p.p_X - c;
    r.bracket_hi = 1.0 / p.p_V - c;
    if (sup) {
        const double delta = 1.0 - 1.0 / (p.p_X * (1.0 + p.t));
        r.formula_rate = p.s * p.t / (p.s + (1.0 + p.t) * delta);
        r.regime = p.p_X <= 1.0 / (p.t + 1.0) ? 1 : 2;
    } else {
        r.formula_rate = p.s * p.t / (p.s + p.t + 0.5 - 1.0 / p.p_X);
        r.regime = p.p_X <= 2.0 / (2.0 * p.t + 1.0) ? 1 : 2;
    }
    constexpr double tol = 1e-12;
    if (r.regime == 1) {
        r.rate = p.t;
        r.in_bracket = p.t <= r.bracket_lo + tol;
    } else {
        r.rate = r.formula_rate;
        r.in_bracket = r.rate >= r.bracket_lo - tol && r.rate <= r.bracket_hi + tol;
    }
    return r;
}

AllocationPlan allocate(std::span<const double> norms_X, double s, double t, double n) {
    return lagrange(norms_X, s, t, n, 1.0);
}

AllocationPlan allocate_l2(std::span<const double> norms_X, double s, double t, double n) {
    return lagrange(norms_X, s, t, n, 2.0);
}

AllocationPlan fixed_space_baseline(std::span<const double> norms_X, std::uint64_t n_hat) {
    if (norms_X.empty()) throw ValidationError("allocation needs at least one coefficient");
    if (n_hat == 0) throw ValidationError("fixed spatial size must be at least 1");
    AllocationPlan plan;
    plan.real_dofs.assign(norms_X.size(), static_cast<double>(n_hat));
    plan.dofs.assign(norms_X.size(), n_hat);
    plan.N_real = static_cast<double>(n_hat * norms_X.size());
    plan.N_int = n_hat * norms_X.size();
    return plan;
}

std::uint64_t balanced_fixed_dofs(double n, double s, double t) {
    check_rates(s, t);
    if (!(n >= 1.0)) throw ValidationError("balanced size needs n >= 1");
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(std::pow(n, s / t) - 1e-9)));
}

double wavelet_predicted_rate(double alpha, unsigned m, WaveletMode mode) {
    if (!(alpha > 0.0)) throw ValidationError("wavelet decay alpha must be positive");
    if (m == 0) throw ValidationError("spatial dimension m must be at least 1");
    if (mode == WaveletMode::Linear) return alpha / (2.0 * m);
    if (m == 1) return std::min(2.0 * alpha / 3.0, 1.0);
    return std::min(alpha, 1.0) / m;
}

void write_csv(std::ostream& out, const AllocationPlan& plan, std::span<const MultiIndex> indices,
               std::span<const double> norms_X) {
    if (indices.size() != plan.dofs.size() || norms_X.size() != plan.dofs.size())
        throw ValidationError("plan, indices and norms differ in length");
    out << "nu,norm_X,n_real,n_int\n";
    out.precision(17);
    for (std::size_t i = 0; i < indices.size(); ++i)
        out << '"' << indices[i].to_json() << "\"," << norms_X[i] << ',' << plan.real_dofs[i] << ',' << plan.dofs[i]
            << '\n';
}

}  // namespace spx
