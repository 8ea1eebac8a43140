// Acceptance run: one PASS/FAIL line per criterion; exits 1 if any fails.

#include "spx/error.hpp"
#include "spx/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace spx;

namespace {

using Clock = std::chrono::steady_clock;

std::filesystem::path config_dir() {
    if (const char* env = std::getenv("SPX_CONFIG_DIR")) return env;
    return SPX_CONFIG_DIR;
}

ExperimentConfig config(const std::string& name) { return load_config(config_dir() / (name + ".json")); }

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(int k, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs > limit_s) {
        o.pass = false;
        o.detail += "; runtime over " + std::to_string(limit_s) + " s";
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k, title.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

AffineModel wavelet_affine(double alpha, unsigned levels, double theta) {
    WaveletFamily fam;
    fam.alpha = alpha;
    fam.levels = levels;
    fam.amplitude = wavelet_amplitude_for_theta(fam, theta);
    return build_wavelet_model(fam);
}

// Shared by criteria 2 and 3.
const TaylorExpansion& wavelet_taylor() {
    static const TaylorExpansion ex = [] {
        const auto model = wavelet_affine(1.5, 4, 0.6);
        const auto set = DownwardClosedSet::total_degree(static_cast<std::uint32_t>(model.dims()), 4);
        return compute_taylor(model, FeSpace(64, 1), set, {.laplacians = true, .retain_fields = false});
    }();
    return ex;
}

Outcome geometric_oracle() {
    const double c = 0.5;
    const AffineModel model(PiecewiseField::constant(1.0), {PiecewiseField::constant(c)});
    const FeSpace space(256, 1);
    const auto ex = compute_taylor(model, space, DownwardClosedSet::tensor(1, 12));
    const double t0 = ex.terms()[0].norm_V;
    double worst = 0.0;
    for (std::uint32_t k = 0; k <= 12; ++k) {
        const auto* term = ex.find(MultiIndex::unit(1, k));
        const double ratio = (k == 0 ? t0 : term->norm_V) / t0;
        worst = std::max(worst, std::abs(ratio - std::pow(c, k)) / std::pow(c, k));
    }
    const double y[] = {0.5};
    std::vector<MultiIndex> all(ex.terms().size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = ex.terms()[i].index;
    const auto approx = eval_truncated(ex, all, y);
    const auto direct = solve_dirichlet(space, ElementField(space.elements(), 1.0 + c * y[0]), [](double) { return 1.0; });
    const double err = norm_V(direct - approx);
    const double q = c * y[0];
    const double tail = t0 * std::pow(q, 13) / (1.0 - q);
    return {worst <= 1e-9 && err <= tail + 1e-9,
            fmt("max rel. deviation of ||t_k||/||t_0|| from c^k %.2e (tol 1e-9); truncation error %.3e <= tail %.3e + 1e-9",
                worst, err, tail)};
}

Outcome layer_decay() {
    const auto& ex = wavelet_taylor();
    const auto rep = layer_sums(ex, WeightSequence::constant(1.0));
    bool ok = std::abs(rep.theta - 0.6) < 1e-9;
    std::ostringstream s;
    s << "theta " << rep.theta << ", kappa " << rep.kappa << "; D_n/(kappa^n D_0):";
    for (std::uint32_t n = 1; n <= 4; ++n) {
        const double r = rep.layers[n].D / (std::pow(rep.kappa, n) * rep.layers[0].D);
        ok = ok && rep.layers[n].complete && r <= 1.05;
        s << ' ' << fmt("%.3f", r);
    }
    s << " (<= 1.05); C_n:";
    for (std::uint32_t n = 0; n <= 4; ++n) {
        ok = ok && std::isfinite(rep.layers[n].C) && rep.layers[n].C >= 0.0;
        s << ' ' << fmt("%.3e", rep.layers[n].C);
    }
    for (std::uint32_t n = 2; n < 4; ++n) ok = ok && rep.layers[n + 1].C < rep.layers[n].C;
    s << " (decreasing from n = 2)";
    return {ok, s.str()};
}

Outcome summability() {
    const auto& ex = wavelet_taylor();
    WaveletFamily fam;
    fam.alpha = 1.5;
    fam.levels = 4;
    fam.amplitude = wavelet_amplitude_for_theta(fam, 0.6);
    // largest c on a 0.01 grid keeping the weighted theta below 0.9
    double c = 0.0;
    for (int k = 1; k <= 200; ++k)
        if (wavelet_weights(fam, 1.0, 0.01 * k).theta <= 0.9) c = 0.01 * k;
    if (c == 0.0) return {false, "no admissible c"};
    const auto w = wavelet_weights(fam, 1.0, c);
    const double l2 = weighted_l2(ex, w.rho, NormKind::V);
    // the weighted layers must shrink geometrically for the sum to converge
    const auto layers = layer_sums(ex, w.rho);
    bool geometric = true;
    for (std::uint32_t n = 1; n <= 4; ++n)
        geometric = geometric && layers.layers[n].D <= 1.05 * std::pow(layers.kappa, n) * layers.layers[0].D;
    std::vector<double> norms;
    for (const auto& t : ex.terms()) norms.push_back(t.norm_V);
    const double rate = sorted_tail_rate(norms, 8, 256, 2.0);
    const double s = 1.5 / 1.0 - 0.5;
    return {std::isfinite(l2) && w.admissible && geometric && rate >= s - 0.2,
            fmt("c = %.2f (weighted theta %.4f), weighted l2 = %.4e with layers decaying by kappa %.3f: %s; tail slope "
                "over ranks 8..256 = %.3f >= %.2f (%zu coefficients)",
                c, w.theta, l2, layers.kappa, geometric ? "yes" : "no", rate, s - 0.2, norms.size())};
}

Outcome orthonormality() {
    const std::vector<OrthoFamily> families = {OrthoFamily::legendre(), OrthoFamily::jacobi(-0.5, -0.5),
                                               OrthoFamily::jacobi(1.0, 0.5), OrthoFamily::hermite()};
    double worst = 0.0;
    std::ostringstream s;
    for (const auto& f : families) {
        const auto rule = gauss_rule(f, 12);
        double dev = 0.0;
        std::vector<double> p(11);
        std::vector<std::vector<double>> gram(11, std::vector<double>(11, 0.0));
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            f.eval_all(10, rule.nodes[i], p);
            for (int a = 0; a <= 10; ++a)
                for (int b = 0; b <= 10; ++b) gram[a][b] += rule.weights[i] * p[a] * p[b];
        }
        for (int a = 0; a <= 10; ++a)
            for (int b = 0; b <= 10; ++b) dev = std::max(dev, std::abs(gram[a][b] - (a == b ? 1.0 : 0.0)));
        worst = std::max(worst, dev);
        s << f.name() << ' ' << fmt("%.1e", dev) << "; ";
    }
    double cdev = 0.0;
    for (std::uint32_t k = 0; k <= 8; ++k)
        cdev = std::max(cdev, std::abs(jacobi_norm_const(k, 0.0, 0.0) - std::sqrt(2.0 * k + 1.0)));
    s << fmt("max |c_k - sqrt(2k+1)| %.1e", cdev);
    return {worst <= 1e-11 && cdev <= 1e-12, "Gram deviation (tol 1e-11): " + s.str() + " (tol 1e-12)"};
}

Outcome allocation_exactness() {
    const double a[] = {1.0, 0.25};
    const auto plan = allocate(a, 1.0, 1.0, 2.0);
    const double hand = std::max({std::abs(plan.eta - 3.0), std::abs(plan.real_dofs[0] - 3.0),
                                  std::abs(plan.real_dofs[1] - 1.5), std::abs(plan.N_real - 4.5)});
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double resid = 0.0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> norms(1 + static_cast<std::size_t>(u(rng) * 40));
        for (double& v : norms) v = std::pow(10.0, -6.0 * u(rng));
        const double s = 0.2 + 2.0 * u(rng), t = 0.2 + 2.0 * u(rng), n = 1.0 + 500.0 * u(rng);
        const auto p = (i % 2) ? allocate(norms, s, t, n) : allocate_l2(norms, s, t, n);
        resid = std::max(resid, p.constraint_residual);
    }
    // brute force over integer pairs: no feasible pair beats the real optimum,
    // and the rounded-up plan is feasible
    bool brute = true;
    for (int i = 0; i < 200; ++i) {
        const double norms[] = {0.05 + u(rng), 0.05 + u(rng)};
        const double s = 0.5 + u(rng), t = 0.5 + u(rng), n = 1.0 + 4.0 * u(rng);
        const double k = (i % 2) ? 1.0 : 2.0;
        const auto p = k == 1.0 ? allocate(norms, s, t, n) : allocate_l2(norms, s, t, n);
        const double budget = std::pow(n, -s * k);
        auto feasible = [&](double n1, double n2) {
            return std::pow(n1, -t * k) * std::pow(norms[0], k) + std::pow(n2, -t * k) * std::pow(norms[1], k) <=
                   budget * (1.0 + 1e-12);
        };
        std::uint64_t best = 0;
        for (std::uint64_t n1 = 1; n1 <= 400; ++n1)
            for (std::uint64_t n2 = 1; n2 <= 400; ++n2)
                if (feasible(double(n1), double(n2)) && (best == 0 || n1 + n2 < best)) best = n1 + n2;
        brute = brute && best != 0 && double(best) >= p.N_real - 1e-9 && feasible(double(p.dofs[0]), double(p.dofs[1])) &&
                best <= p.N_int;
    }
    return {hand <= 1e-12 && resid <= 1e-12 && brute,
            fmt("hand example deviation %.1e; max constraint residual over 1000 instances %.1e; brute force %s", hand,
                resid, brute ? "ok" : "violated")};
}

Outcome rate_calculus() {
    const auto l2 = predict_rate(RateParams::from_summability(2.0 / 3.0, 1.0, 1.0, ErrorSetting::L2));
    const auto sup = predict_rate(RateParams::from_summability(0.5, 1.0, 1.0, ErrorSetting::Sup));
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const bool is_sup = i % 2;
        const double p_X = 0.05 + 1.9 * u(rng);
        // s = 1/p_V - c must stay positive
        const double p_V = std::min(p_X, is_sup ? 0.999 : 1.999) * (0.05 + 0.95 * u(rng));
        const double t = 0.1 + 3.0 * u(rng);
        const auto r =
            predict_rate(RateParams::from_summability(p_V, p_X, t, is_sup ? ErrorSetting::Sup : ErrorSetting::L2));
        bad += r.in_bracket ? 0 : 1;
    }
    const double w1 = wavelet_predicted_rate(1.5, 1, WaveletMode::Linear);
    const double w2 = wavelet_predicted_rate(0.9, 1, WaveletMode::Nonlinear);
    const bool ok = std::abs(l2.rate - 2.0 / 3.0) < 1e-12 && std::abs(sup.rate - 0.5) < 1e-12 && bad == 0 &&
                    std::abs(w1 - 0.75) < 1e-12 && std::abs(w2 - 0.6) < 1e-12;
    return {ok, fmt("l2 r = %.6f, sup r = %.6f, bracket violations %d/1000, wavelet rates %.4f / %.4f", l2.rate, sup.rate,
                    bad, w1, w2)};
}

double linear_slope = 0.0;

Outcome linear_rate() {
    const auto rep = run_sweep(config("wavelet_linear_optimal"));
    if (!rep.fit.ok) return {false, rep.fit.note};
    linear_slope = rep.fit.rate;
    return {rep.fit.rate >= 0.55 && rep.fit.rate <= 0.95,
            fmt("slope %.3f in [0.55, 0.95], predicted %.2f, N %llu..%llu, fitted s %.3f", rep.fit.rate, rep.predicted,
                (unsigned long long)rep.points.front().N, (unsigned long long)rep.points.back().N, rep.s_used)};
}

Outcome fixed_equivalence() {
    const auto rep = run_sweep(config("wavelet_linear_fixed"));
    if (!rep.fit.ok) return {false, rep.fit.note};
    if (linear_slope == 0.0) return {false, "optimal-allocation slope unavailable"};
    return {std::abs(rep.fit.rate - linear_slope) <= 0.1,
            fmt("fixed slope %.3f vs optimal %.3f (|diff| %.3f <= 0.1)", rep.fit.rate, linear_slope,
                std::abs(rep.fit.rate - linear_slope))};
}

Outcome joint_selection() {
    const auto joint = run_joint(config("joint_alpha08"));
    const auto linear = run_sweep(config("linear_alpha08"));
    if (!joint.fit.ok) return {false, joint.fit.note};
    if (!linear.fit.ok) return {false, "linear comparison: " + linear.fit.note};
    const double target = 2.0 * 0.8 / 3.0 - 0.15;
    const double lin_ref = 0.8 / 2.0 - 0.1;
    return {joint.fit.rate >= target && joint.fit.rate > lin_ref && joint.fit.rate > linear.fit.rate,
            fmt("joint slope %.3f >= %.3f and > %.2f; measured linear-mode slope on the same model %.3f", joint.fit.rate,
                target, lin_ref, linear.fit.rate)};
}

Outcome hermite_sanity() {
    const auto cfg = config("hermite_lognormal");
    const ParametricModel model = build_model(cfg.model);
    const FeSpace space(cfg.fe_elements, cfg.fe_degree);
    const TensorQuadrature quad(OrthoFamily::hermite(), 2, 8);
    std::vector<double> gaps;
    for (std::uint32_t K = 1; K <= 4; ++K)
        gaps.push_back(parseval_check(compute_coeffs(model, space, DownwardClosedSet::tensor(2, K), quad, {})).gap());
    bool ok = true;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        ok = ok && gaps[i] >= -1e-10;
        if (i) ok = ok && gaps[i] < gaps[i - 1];
    }
    ok = ok && gaps.back() < 1e-3 * gaps.front();
    std::ostringstream s;
    s << "gaps";
    for (double g : gaps) s << ' ' << fmt("%.3e", g);
    const auto& ln = std::get<LognormalModel>(model);
    for (unsigned r : {1u, 2u}) {
        const auto w = rescale_weights_lognormal(ln, WeightSequence::constant(2.0, ln.dims()), r);
        const double limit = std::log(1.0858) / std::sqrt(double(r));
        ok = ok && w.K < limit;
        s << fmt("; r = %u: K = %.4f < %.4f (scale %.4g)", r, w.K, limit, w.factor);
    }
    return {ok, s.str()};
}

}  // namespace

int main() {
    criterion(1, "geometric oracle", 5, geometric_oracle);
    criterion(2, "layer decay", 60, layer_decay);
    criterion(3, "summability diagnostics", 60, summability);
    criterion(4, "orthonormality", 60, orthonormality);
    criterion(5, "allocation exactness", 60, allocation_exactness);
    criterion(6, "rate calculus", 60, rate_calculus);
    criterion(7, "end-to-end linear rate", 600, linear_rate);
    criterion(8, "fixed-space equivalence", 600, fixed_equivalence);
    criterion(9, "nonlinear joint selection", 600, joint_selection);
    criterion(10, "Hermite sanity", 60, hermite_sanity);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
