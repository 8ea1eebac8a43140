// Batch front end for the experiment harness. Exit codes: 0 ok, 2 invalid
// input, 3 rate outside the configured window (with --check), 1 other errors.

#include "spx/error.hpp"
#include "spx/harness.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

namespace {

using nlohmann::json;
using namespace spx;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::optional<unsigned> threads;
    bool check = false;
};

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? parse_config(json::object()) : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = std::max(1u, *c.threads);
    cfg.raw = to_json(cfg);
    return cfg;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

int cmd_taylor(const Common& c) {
    ExperimentConfig cfg = resolve(c);
    cfg.expansion.kind = "taylor";
    ensure_writable(c.out);
    const ParametricModel model = build_model(cfg.model);
    const auto* affine = std::get_if<AffineModel>(&model);
    if (!affine) throw ValidationError("taylor needs an affine model");
    const WeightSequence rho = taylor_weights(cfg, model);
    TaylorOptions opt;
    opt.laplacians = true;
    opt.retain_fields = false;
    opt.threads = cfg.threads;
    const FeSpace space(cfg.fe_elements, cfg.fe_degree);
    const auto ex = compute_taylor(*affine, space, taylor_indices(cfg, model), opt);
    {
        std::ofstream out(std::filesystem::path(c.out) / (cfg.prefix + "_taylor.csv"));
        write_csv(out, ex);
    }
    const std::vector<double> ps = {0.5, 2.0 / 3.0, 1.0};
    const auto rep = summability_report(ex, rho, ps);
    json j;
    j["config"] = cfg.raw;
    j["terms"] = ex.terms().size();
    j["theta"] = rep.theta;
    j["kappa"] = rep.kappa;
    j["weighted_l2_V"] = rep.weighted_l2_V;
    j["weighted_l2_W"] = rep.weighted_l2_W;
    j["tail_exponent"] = rep.tail_exponent;
    for (const auto& l : rep.layers)
        j["layers"].push_back({{"order", l.order}, {"size", l.size}, {"complete", l.complete}, {"D", l.D}, {"C", l.C}});
    for (const auto& e : rep.lp)
        j["lp"].push_back({{"p", e.p}, {"direct", e.direct}, {"holder_bound", e.holder_bound}});
    write_json(std::filesystem::path(c.out) / (cfg.prefix + "_summability.json"), j);
    std::cout << ex.terms().size() << " coefficients, theta " << rep.theta << ", kappa " << rep.kappa << '\n';
    return 0;
}

int cmd_ortho(const Common& c, bool hermite) {
    ExperimentConfig cfg = resolve(c);
    if (hermite) {
        cfg.expansion.kind = "hermite";
        if (cfg.model.kind != "lognormal_wavelet") throw ValidationError("hermite needs model.kind = lognormal_wavelet");
    } else if (cfg.expansion.kind != "jacobi" && cfg.expansion.kind != "legendre") {
        cfg.expansion.kind = "legendre";
    }
    cfg.raw = to_json(cfg);
    ensure_writable(c.out);
    const ParametricModel model = build_model(cfg.model);
    const FeSpace space(cfg.fe_elements, cfg.fe_degree);
    OrthoOptions opt;
    opt.threads = cfg.threads;
    const auto dims = static_cast<std::uint32_t>(model_dims(model));
    const auto ex = compute_coeffs(model, space, DownwardClosedSet::tensor(dims, cfg.expansion.max_degree),
                                   ortho_quadrature(cfg, model), opt);
    {
        std::ofstream out(std::filesystem::path(c.out) / (cfg.prefix + "_coeffs.csv"));
        write_csv(out, ex);
    }
    const auto pc = parseval_check(ex);
    json j;
    j["config"] = cfg.raw;
    j["family"] = ex.family().name();
    j["terms"] = ex.terms().size();
    j["parseval"] = {{"coefficients", pc.lhs}, {"quadrature", pc.rhs}, {"gap", pc.gap()}};
    write_json(std::filesystem::path(c.out) / (cfg.prefix + "_parseval.json"), j);
    std::cout << ex.family().name() << ": " << ex.terms().size() << " coefficients, Parseval gap " << pc.gap() << '\n';
    return 0;
}

int cmd_allocate(const Common& c) {
    ExperimentConfig cfg = resolve(c);
    ensure_writable(c.out);
    const ParametricModel model = build_model(cfg.model);
    const FeSpace space(cfg.fe_elements, cfg.fe_degree);
    std::vector<MultiIndex> idx;
    std::vector<double> nv, nx;
    if (cfg.expansion.kind == "taylor") {
        const auto* affine = std::get_if<AffineModel>(&model);
        if (!affine) throw ValidationError("taylor needs an affine model");
        TaylorOptions opt;
        opt.laplacians = true;
        opt.retain_fields = false;
        opt.threads = cfg.threads;
        const auto ex = compute_taylor(*affine, space, taylor_indices(cfg, model), opt);
        for (const auto& t : ex.terms()) {
            idx.push_back(t.index);
            nv.push_back(t.norm_V);
            nx.push_back(t.norm_W);
        }
    } else {
        OrthoOptions opt;
        opt.threads = cfg.threads;
        const auto dims = static_cast<std::uint32_t>(model_dims(model));
        const auto ex = compute_coeffs(model, space, DownwardClosedSet::tensor(dims, cfg.expansion.max_degree),
                                       ortho_quadrature(cfg, model), opt);
        for (const auto& t : ex.terms()) {
            idx.push_back(t.index);
            nv.push_back(t.norm_V);
            nx.push_back(t.norm_X);
        }
    }
    std::vector<std::size_t> order(idx.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (nv[a] != nv[b]) return nv[a] > nv[b];
        return canonical_compare(idx[a], idx[b]) < 0;
    });
    const double n = cfg.schedule.back();
    if (n > static_cast<double>(idx.size())) throw ValidationError("sweep.n exceeds the stored coefficients");
    const auto count = static_cast<std::size_t>(n);
    std::vector<MultiIndex> sel;
    std::vector<double> sv, sx;
    for (std::size_t k = 0; k < idx.size(); ++k) sv.push_back(nv[order[k]]);
    for (std::size_t k = 0; k < count; ++k) {
        sel.push_back(idx[order[k]]);
        sx.push_back(nx[order[k]]);
    }
    const bool sup = cfg.error_kind == "sup";
    double s = cfg.allocation.s;
    if (s == 0.0) {
        const auto first = std::max<std::size_t>(static_cast<std::size_t>(cfg.schedule.front()), 1);
        s = sorted_tail_rate(sv, first, std::min(count, sv.size() - 1), sup ? 1.0 : 2.0);
    }
    const double t = cfg.allocation.t;
    const AllocationPlan plan = cfg.allocation.mode == "fixed" ? fixed_space_baseline(sx, balanced_fixed_dofs(n, s, t))
                                : sup                          ? allocate(sx, s, t, n)
                                                               : allocate_l2(sx, s, t, n);
    std::ofstream out(std::filesystem::path(c.out) / (cfg.prefix + "_allocation.csv"));
    write_csv(out, plan, sel, sx);
    std::cout << "n " << n << ", s " << s << ", t " << t << ", N " << plan.N_int << " (closed form " << plan.N_real
              << ")\n";
    return 0;
}

int cmd_report(const Common& c, bool joint) {
    ExperimentConfig cfg = resolve(c);
    ensure_writable(c.out);
    const RateReport rep = joint ? run_joint(cfg) : run_sweep(cfg);
    write_report(c.out, cfg, rep);
    std::cout << rep.label << ": ";
    if (rep.fit.ok)
        std::cout << "rate " << rep.fit.rate << " (predicted " << rep.predicted << ", residual " << rep.fit.fit.residual
                  << ")\n";
    else
        std::cout << rep.fit.note << '\n';
    if (c.check && !rep.passed) {
        std::cerr << "check failed: rate outside [" << cfg.check_lo << ", " << cfg.check_hi << "]\n";
        return 3;
    }
    return 0;
}

struct RatesArgs {
    std::optional<double> s;
    double t = 1.0;
    double p_V = 0.5;
    double p_X = 1.0;
    std::string setting = "sup";
    std::optional<double> alpha;
    unsigned m = 1;
};

int cmd_rates(const Common& c, const RatesArgs& a, bool write) {
    const ErrorSetting setting = a.setting == "l2" ? ErrorSetting::L2 : ErrorSetting::Sup;
    RateParams p = RateParams::from_summability(a.p_V, a.p_X, a.t, setting);
    if (a.s) p.s = *a.s;
    const RatePrediction r = predict_rate(p);
    json j = {{"setting", a.setting}, {"s", p.s},         {"t", p.t},
              {"p_V", p.p_V},         {"p_X", p.p_X},     {"rate", r.rate},
              {"formula_rate", r.formula_rate}, {"regime", r.regime}, {"bracket", {r.bracket_lo, r.bracket_hi}},
              {"in_bracket", r.in_bracket}};
    if (a.alpha) {
        j["wavelet"] = {{"alpha", *a.alpha},
                        {"m", a.m},
                        {"linear", wavelet_predicted_rate(*a.alpha, a.m, WaveletMode::Linear)},
                        {"nonlinear", wavelet_predicted_rate(*a.alpha, a.m, WaveletMode::Nonlinear)}};
    }
    std::cout << j.dump(2) << '\n';
    if (write) {
        ensure_writable(c.out);
        write_json(std::filesystem::path(c.out) / "rates.json", j);
    }
    if (c.check && !r.in_bracket) return 3;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse parametric expansions: coefficients, allocation and rate sweeps"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "override error.seed");
        sub->add_option("--out", common.out, "output directory")->capture_default_str();
        sub->add_option("--threads", common.threads, "worker threads");
        sub->add_flag("--check", common.check, "exit 3 when the fitted rate leaves the check window");
    };
    auto* taylor = app.add_subcommand("taylor", "Taylor coefficients and summability diagnostics");
    auto* jacobi = app.add_subcommand("jacobi", "Jacobi/Legendre coefficients and Parseval check");
    auto* hermite = app.add_subcommand("hermite", "Hermite coefficients of the lognormal model");
    auto* alloc = app.add_subcommand("allocate", "spatial dof allocation for the largest sweep.n");
    auto* sweep = app.add_subcommand("sweep", "fully discrete error against total dofs");
    auto* joint = app.add_subcommand("joint", "joint space-parameter best N-term sweep");
    auto* rates = app.add_subcommand("rates", "predicted convergence rates");
    for (auto* s : {taylor, jacobi, hermite, alloc, sweep, joint, rates}) add_common(s);
    RatesArgs ra;
    rates->add_option("--s", ra.s, "parametric rate (default from p_V)");
    rates->add_option("--t", ra.t, "spatial rate")->capture_default_str();
    rates->add_option("--p-v", ra.p_V, "summability of V norms")->capture_default_str();
    rates->add_option("--p-x", ra.p_X, "summability of X norms")->capture_default_str();
    rates->add_option("--setting", ra.setting, "sup or l2")->check(CLI::IsMember({"sup", "l2"}))->capture_default_str();
    rates->add_option("--alpha", ra.alpha, "wavelet decay for the wavelet rates");
    rates->add_option("--m", ra.m, "spatial dimension for the wavelet rates")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*taylor) return cmd_taylor(common);
        if (*jacobi) return cmd_ortho(common, false);
        if (*hermite) return cmd_ortho(common, true);
        if (*alloc) return cmd_allocate(common);
        if (*sweep) return cmd_report(common, false);
        if (*joint) return cmd_report(common, true);
        if (*rates) return cmd_rates(common, ra, rates->count("--out") > 0);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
