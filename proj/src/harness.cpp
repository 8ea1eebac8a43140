#include "spx/harness.hpp"

#include "spx/error.hpp"
#include "spx/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace spx {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw ValidationError("config: '" + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known = known || it.key() == k;
        if (!known) throw ValidationError("config: unknown key '" + where + "." + it.key() + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config: '" + where + "." + key + "' has the wrong type");
    }
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

unsigned log2_exact(std::size_t v) {
    unsigned l = 0;
    while ((std::size_t{1} << l) < v) ++l;
    return l;
}

WaveletFamily wavelet_family(const ModelConfig& m) {
    WaveletFamily fam;
    fam.alpha = m.alpha;
    fam.levels = m.levels;
    fam.active_dims = m.active_dims;
    fam.amplitude = m.amplitude > 0.0 ? m.amplitude : wavelet_amplitude_for_theta(fam, m.theta);
    return fam;
}

// Unified read-only view of an expansion, sorted by decreasing V norm.
struct CoefficientView {
    FeSpace space{2, 1};
    std::vector<MultiIndex> index;
    std::vector<const GridFunction*> field;
    std::vector<double> norm_V;
    std::vector<double> norm_X;
    double total_energy = 0.0;  // l2 only
};

CoefficientView sorted_view(const CoefficientView& in) {
    std::vector<std::size_t> order(in.index.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (in.norm_V[a] != in.norm_V[b]) return in.norm_V[a] > in.norm_V[b];
        return canonical_compare(in.index[a], in.index[b]) < 0;
    });
    CoefficientView out;
    out.space = in.space;
    out.total_energy = in.total_energy;
    for (auto k : order) {
        out.index.push_back(in.index[k]);
        out.field.push_back(in.field[k]);
        out.norm_V.push_back(in.norm_V[k]);
        out.norm_X.push_back(in.norm_X[k]);
    }
    return out;
}

// Holds whichever expansion the config asks for, plus the sorted view.
struct Computed {
    std::optional<TaylorExpansion> taylor;
    std::optional<OrthoExpansion> ortho;
    CoefficientView view;
};

Computed compute_expansion(const ExperimentConfig& cfg, const ParametricModel& model, const FeSpace& space,
                           bool need_X) {
    Computed c;
    CoefficientView v;
    v.space = space;
    if (cfg.expansion.kind == "taylor") {
        const auto* affine = std::get_if<AffineModel>(&model);
        if (!affine) throw ValidationError("config: taylor expansions need an affine model");
        TaylorOptions opt;
        opt.laplacians = need_X;
        opt.threads = cfg.threads;
        c.taylor = compute_taylor(*affine, space, taylor_indices(cfg, model), opt);
        for (const auto& t : c.taylor->terms()) {
            v.index.push_back(t.index);
            v.field.push_back(&*t.t);
            v.norm_V.push_back(t.norm_V);
            v.norm_X.push_back(need_X ? t.norm_W : t.norm_V);
        }
    } else {
        const auto dims = static_cast<std::uint32_t>(model_dims(model));
        OrthoOptions opt;
        opt.threads = cfg.threads;
        c.ortho = compute_coeffs(model, space, DownwardClosedSet::tensor(dims, cfg.expansion.max_degree),
                                 ortho_quadrature(cfg, model), opt);
        for (const auto& t : c.ortho->terms()) {
            v.index.push_back(t.index);
            v.field.push_back(&t.v);
            v.norm_V.push_back(t.norm_V);
            v.norm_X.push_back(t.norm_X);
        }
        v.total_energy = c.ortho->solution_energy();
    }
    c.view = sorted_view(v);
    return c;
}

double derived_prediction(const ExperimentConfig& cfg, bool nonlinear) {
    if (cfg.predicted) return *cfg.predicted;
    if (cfg.model.kind == "wavelet")
        return wavelet_predicted_rate(cfg.model.alpha, 1, nonlinear ? WaveletMode::Nonlinear : WaveletMode::Linear);
    if (cfg.model.kind == "constant") return cfg.allocation.t;
    return 0.0;
}

void finish(RateReport& rep, const ExperimentConfig& cfg) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : rep.points)
        if (p.error > 0.0) pts.emplace_back(static_cast<double>(p.N), p.error);
    rep.fit = fit_rate(pts);
    rep.passed = rep.fit.ok && rep.fit.rate >= cfg.check_lo && rep.fit.rate <= cfg.check_hi;
}

// Spatial realizations on coarse spaces nested in the reference space.
class Realizer {
public:
    Realizer(const CoefficientView& view, const ExperimentConfig& cfg) : view_(view), fine_(view.space) {
        nonlinear_ = cfg.allocation.spatial == "nonlinear";
        if (nonlinear_) {
            if (fine_.degree() != 1 || !is_power_of_two(fine_.elements()))
                throw ValidationError("config: nonlinear spatial mode needs fe.degree = 1 and a power-of-two mesh");
            basis_.emplace(log2_exact(fine_.elements()));
            max_dofs_ = basis_->size();
        } else {
            // the reference mesh stays at least 4x finer than any realization
            for (std::size_t el = 1; el <= fine_.elements() / 4; ++el)
                if (fine_.elements() % el == 0 && fine_.degree() * el >= 2)
                    coarse_.emplace_back(el, fine_.degree());
            if (coarse_.empty()) throw ValidationError("config: fe.elements too small for nested realizations");
            max_dofs_ = coarse_.back().dofs();
        }
    }

    /// Dofs actually used for a target n_nu.
    std::size_t realized_dofs(double target) const {
        if (nonlinear_) return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(target)), 1, max_dofs_);
        return coarse_[coarse_index(target)].dofs();
    }

    /// ||v - R v||_V^2 for coefficient k realized with `target` dofs.
    double error_sq(std::size_t k, double target) {
        if (nonlinear_) {
            const auto& tail = hierarchical_tail(k);
            const std::size_t n = realized_dofs(target);
            return n < tail.size() ? tail[n] : 0.0;
        }
        const std::size_t c = coarse_index(target);
        auto key = std::make_pair(k, c);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const double e = norm_V(*view_.field[k] - realize(k, target));
        cache_.emplace(key, e * e);
        return e * e;
    }

    /// R v on the reference space.
    GridFunction realize(std::size_t k, double target) const {
        const GridFunction& v = *view_.field[k];
        if (nonlinear_) return best_nterm_spatial(v, *basis_, realized_dofs(target));
        return prolong(project(v, coarse_[coarse_index(target)]), fine_);
    }

private:
    std::size_t coarse_index(double target) const {
        for (std::size_t i = 0; i < coarse_.size(); ++i)
            if (static_cast<double>(coarse_[i].dofs()) >= target) return i;
        return coarse_.size() - 1;
    }

    // tail[n] = energy dropped when keeping the n largest hierarchical terms.
    const std::vector<double>& hierarchical_tail(std::size_t k) {
        auto it = tails_.find(k);
        if (it != tails_.end()) return it->second;
        const auto h = basis_->to_hierarchical(*view_.field[k]);
        std::vector<double> e(h.size());
        for (std::size_t i = 0; i < h.size(); ++i) e[i] = h[i] * h[i] * basis_->energy_weight(i);
        std::sort(e.begin(), e.end(), std::greater<>());
        std::vector<double> tail(e.size() + 1, 0.0);
        for (std::size_t i = e.size(); i-- > 0;) tail[i] = tail[i + 1] + e[i];
        return tails_.emplace(k, std::move(tail)).first->second;
    }

    const CoefficientView& view_;
    FeSpace fine_;
    bool nonlinear_ = false;
    std::optional<HierarchicalBasis> basis_;
    std::vector<FeSpace> coarse_;
    std::size_t max_dofs_ = 0;
    std::map<std::pair<std::size_t, std::size_t>, double> cache_;
    std::map<std::size_t, std::vector<double>> tails_;
};

// y^nu or P_nu(y).
double basis_value(const Computed& c, const MultiIndex& nu, std::span<const double> y) {
    double v = 1.0;
    if (c.taylor) {
        for (const auto& e : nu.entries()) v *= std::pow(y[e.dim - 1], static_cast<double>(e.exponent));
        return v;
    }
    for (const auto& e : nu.entries()) v *= eval_poly(c.ortho->family(), e.exponent, y[e.dim - 1]);
    return v;
}

std::vector<std::vector<double>> sample_parameters(const ExperimentConfig& cfg, const Computed& c, std::size_t dims) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    if (c.ortho && c.ortho->family().kind() == FamilyKind::Hermite)
        throw ValidationError("config: sup errors are not defined for Gaussian parameters; use error.kind = l2");
    std::vector<std::vector<double>> ys(cfg.samples, std::vector<double>(dims));
    for (auto& y : ys)
        for (double& v : y) v = unif(rng);
    return ys;
}

}  // namespace

WeightSequence taylor_weights(const ExperimentConfig& cfg, const ParametricModel& model) {
    const auto& e = cfg.expansion;
    if (cfg.model.kind == "wavelet") {
        // c = 0 degenerates to the all-ones weight, which the envelope rejects
        if (!(e.weight_c > 0.0)) throw ValidationError("config: taylor on a wavelet model needs expansion.weight_c > 0");
        return wavelet_weights(wavelet_family(cfg.model), e.weight_beta, e.weight_c).rho;
    }
    return WeightSequence::constant(e.rho, model_dims(model));
}

DownwardClosedSet taylor_indices(const ExperimentConfig& cfg, const ParametricModel& model) {
    return generate_envelope(taylor_weights(cfg, model), cfg.expansion.budget, cfg.expansion.max_degree);
}

OrthoFamily ortho_family(const ExpansionConfig& e) {
    if (e.kind == "legendre") return OrthoFamily::legendre();
    if (e.kind == "jacobi") return OrthoFamily::jacobi(e.alpha_J, e.beta_J);
    if (e.kind == "hermite") return OrthoFamily::hermite();
    throw ValidationError("config: expansion.kind '" + e.kind + "' is not an orthogonal family");
}

TensorQuadrature ortho_quadrature(const ExperimentConfig& cfg, const ParametricModel& model) {
    const std::uint32_t q = cfg.expansion.points ? cfg.expansion.points : cfg.expansion.max_degree + 1;
    return TensorQuadrature(ortho_family(cfg.expansion), static_cast<std::uint32_t>(model_dims(model)), q);
}

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    reject_unknown(j, {"model", "fe", "expansion", "allocation", "sweep", "error", "check", "output", "threads"},
                   "config");
    if (j.contains("model")) {
        const auto& m = j["model"];
        reject_unknown(m, {"kind", "alpha", "levels", "theta", "amplitude", "active_dims", "c"}, "model");
        read(m, "kind", cfg.model.kind, "model");
        read(m, "alpha", cfg.model.alpha, "model");
        read(m, "levels", cfg.model.levels, "model");
        read(m, "theta", cfg.model.theta, "model");
        read(m, "amplitude", cfg.model.amplitude, "model");
        read(m, "active_dims", cfg.model.active_dims, "model");
        read(m, "c", cfg.model.c, "model");
    }
    if (j.contains("fe")) {
        const auto& f = j["fe"];
        reject_unknown(f, {"degree", "elements"}, "fe");
        read(f, "degree", cfg.fe_degree, "fe");
        read(f, "elements", cfg.fe_elements, "fe");
    }
    if (j.contains("expansion")) {
        const auto& e = j["expansion"];
        reject_unknown(e, {"kind", "alpha_J", "beta_J", "max_degree", "points", "budget", "weight_beta", "weight_c", "rho"},
                       "expansion");
        read(e, "kind", cfg.expansion.kind, "expansion");
        read(e, "alpha_J", cfg.expansion.alpha_J, "expansion");
        read(e, "beta_J", cfg.expansion.beta_J, "expansion");
        read(e, "max_degree", cfg.expansion.max_degree, "expansion");
        read(e, "points", cfg.expansion.points, "expansion");
        read(e, "budget", cfg.expansion.budget, "expansion");
        read(e, "weight_beta", cfg.expansion.weight_beta, "expansion");
        read(e, "weight_c", cfg.expansion.weight_c, "expansion");
        read(e, "rho", cfg.expansion.rho, "expansion");
    }
    if (j.contains("allocation")) {
        const auto& a = j["allocation"];
        reject_unknown(a, {"mode", "spatial", "s", "t"}, "allocation");
        read(a, "mode", cfg.allocation.mode, "allocation");
        read(a, "spatial", cfg.allocation.spatial, "allocation");
        read(a, "s", cfg.allocation.s, "allocation");
        read(a, "t", cfg.allocation.t, "allocation");
    }
    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        reject_unknown(s, {"n", "joint_N"}, "sweep");
        read(s, "n", cfg.schedule, "sweep");
        read(s, "joint_N", cfg.joint_schedule, "sweep");
    }
    if (j.contains("error")) {
        const auto& e = j["error"];
        reject_unknown(e, {"kind", "samples", "seed"}, "error");
        read(e, "kind", cfg.error_kind, "error");
        read(e, "samples", cfg.samples, "error");
        read(e, "seed", cfg.seed, "error");
    }
    if (j.contains("check")) {
        const auto& c = j["check"];
        reject_unknown(c, {"predicted", "lo", "hi"}, "check");
        if (c.contains("predicted")) {
            double p = 0.0;
            read(c, "predicted", p, "check");
            cfg.predicted = p;
        }
        read(c, "lo", cfg.check_lo, "check");
        read(c, "hi", cfg.check_hi, "check");
    }
    if (j.contains("output")) {
        const auto& o = j["output"];
        reject_unknown(o, {"prefix"}, "output");
        read(o, "prefix", cfg.prefix, "output");
    }
    read(j, "threads", cfg.threads, "config");

    auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed, const std::string& key) {
        for (const char* a : allowed)
            if (v == a) return;
        throw ValidationError("config: '" + key + "' has unsupported value '" + v + "'");
    };
    one_of(cfg.model.kind, {"wavelet", "constant", "lognormal_wavelet"}, "model.kind");
    one_of(cfg.expansion.kind, {"taylor", "legendre", "jacobi", "hermite"}, "expansion.kind");
    one_of(cfg.allocation.mode, {"optimal", "fixed"}, "allocation.mode");
    one_of(cfg.allocation.spatial, {"linear", "nonlinear"}, "allocation.spatial");
    one_of(cfg.error_kind, {"l2", "sup"}, "error.kind");
    if (cfg.fe_degree != 1 && cfg.fe_degree != 2) throw ValidationError("config: fe.degree must be 1 or 2");
    if (cfg.fe_elements < 2) throw ValidationError("config: fe.elements must be at least 2");
    if (cfg.model.kind == "wavelet" && cfg.model.amplitude <= 0.0 && !(cfg.model.theta > 0.0 && cfg.model.theta < 1.0))
        throw ValidationError("config: model.theta must lie in (0,1)");
    if (cfg.model.kind == "lognormal_wavelet" && !(cfg.model.amplitude > 0.0))
        throw ValidationError("config: lognormal_wavelet needs model.amplitude > 0");
    if (cfg.allocation.s < 0.0 || !(cfg.allocation.t > 0.0))
        throw ValidationError("config: allocation.s must be >= 0 (0 = fitted) and allocation.t > 0");
    if (cfg.schedule.empty()) throw ValidationError("config: sweep.n must not be empty");
    for (double n : cfg.schedule)
        if (!(n >= 1.0)) throw ValidationError("config: sweep.n entries must be >= 1");
    if (!std::is_sorted(cfg.schedule.begin(), cfg.schedule.end()))
        throw ValidationError("config: sweep.n must be increasing");
    for (double n : cfg.joint_schedule)
        if (!(n >= 1.0)) throw ValidationError("config: sweep.joint_N entries must be >= 1");
    if (cfg.samples == 0) throw ValidationError("config: error.samples must be positive");
    if (cfg.threads == 0) cfg.threads = 1;
    if (cfg.prefix.empty() || cfg.prefix.find('/') != std::string::npos)
        throw ValidationError("config: output.prefix must be a plain file name stem");
    cfg.raw = to_json(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["model"] = {{"kind", c.model.kind},         {"alpha", c.model.alpha},         {"levels", c.model.levels},
                  {"theta", c.model.theta},       {"amplitude", c.model.amplitude}, {"active_dims", c.model.active_dims},
                  {"c", c.model.c}};
    j["fe"] = {{"degree", c.fe_degree}, {"elements", c.fe_elements}};
    j["expansion"] = {{"kind", c.expansion.kind},       {"alpha_J", c.expansion.alpha_J},
                      {"beta_J", c.expansion.beta_J},   {"max_degree", c.expansion.max_degree},
                      {"points", c.expansion.points},   {"budget", c.expansion.budget},
                      {"weight_beta", c.expansion.weight_beta}, {"weight_c", c.expansion.weight_c},
                      {"rho", c.expansion.rho}};
    j["allocation"] = {{"mode", c.allocation.mode}, {"spatial", c.allocation.spatial}, {"s", c.allocation.s},
                       {"t", c.allocation.t}};
    j["sweep"] = {{"n", c.schedule}, {"joint_N", c.joint_schedule}};
    j["error"] = {{"kind", c.error_kind}, {"samples", c.samples}, {"seed", c.seed}};
    j["check"] = {{"lo", c.check_lo}, {"hi", c.check_hi}};
    if (c.predicted) j["check"]["predicted"] = *c.predicted;
    j["output"] = {{"prefix", c.prefix}};
    j["threads"] = c.threads;
    return j;
}

ParametricModel build_model(const ModelConfig& m) {
    if (m.kind == "constant") {
        if (!(std::abs(m.c) < 1.0)) throw ValidationError("config: constant model needs |c| < 1");
        return AffineModel(PiecewiseField::constant(1.0), {PiecewiseField::constant(m.c)});
    }
    if (m.kind == "wavelet") return build_wavelet_model(wavelet_family(m));
    if (m.kind == "lognormal_wavelet") {
        WaveletFamily fam;
        fam.alpha = m.alpha;
        fam.levels = m.levels;
        fam.active_dims = m.active_dims;
        fam.amplitude = m.amplitude;
        return LognormalModel(wavelet_fields(fam));
    }
    throw ValidationError("config: unknown model kind '" + m.kind + "'");
}

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
    RateFit r;
    if (points.size() < 4) {
        r.note = "fit refused: " + std::to_string(points.size()) + " points (need 4)";
        return r;
    }
    double lo = points.front().first, hi = lo;
    for (const auto& [n, e] : points) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    const double span = std::log10(hi / lo);
    if (span < 1.5) {
        std::ostringstream s;
        s << "fit refused: N spans " << span << " decades (need 1.5)";
        r.note = s.str();
        return r;
    }
    r.fit = fit_loglog(points);
    r.rate = -r.fit.slope;
    r.ok = true;
    return r;
}

RateReport run_sweep(const ExperimentConfig& cfg) {
    const ParametricModel model = build_model(cfg.model);
    const FeSpace fine(cfg.fe_elements, cfg.fe_degree);
    const bool sup = cfg.error_kind == "sup";
    if (!sup && cfg.expansion.kind == "taylor")
        throw ValidationError("config: taylor sweeps measure the sup error; set error.kind = sup");
    const Computed comp = compute_expansion(cfg, model, fine, true);
    const CoefficientView& v = comp.view;

    RateReport rep;
    rep.label = cfg.expansion.kind + "/" + cfg.allocation.mode + "/" + cfg.allocation.spatial;
    rep.seed = cfg.seed;
    rep.t_used = cfg.allocation.t;
    rep.predicted = derived_prediction(cfg, cfg.allocation.spatial == "nonlinear");
    if (cfg.schedule.back() > static_cast<double>(v.index.size()))
        throw ValidationError("config: sweep.n exceeds the " + std::to_string(v.index.size()) + " stored coefficients");

    rep.s_used = cfg.allocation.s;
    if (rep.s_used == 0.0) {
        const auto first = static_cast<std::size_t>(cfg.schedule.front());
        const auto last = std::min(static_cast<std::size_t>(cfg.schedule.back()), v.norm_V.size() - 1);
        rep.s_used = sorted_tail_rate(v.norm_V, std::max<std::size_t>(first, 1), last, sup ? 1.0 : 2.0);
        if (!(rep.s_used > 0.0)) throw ValidationError("fitted parametric rate is not positive; set allocation.s");
    }

    Realizer realizer(v, cfg);
    std::vector<std::vector<double>> ys;
    std::vector<GridFunction> truth;
    if (sup) {
        ys = sample_parameters(cfg, comp, model_dims(model));
        const CoefficientSampler sampler(model, fine);
        truth.assign(ys.size(), GridFunction(fine));
        parallel_for(ys.size(), cfg.threads, [&](std::size_t i) {
            const ElementField a = sampler(ys[i]);
            truth[i] = solve_dirichlet(fine, a, [](double) { return 1.0; });
        });
    }

    for (double n : cfg.schedule) {
        const auto count = static_cast<std::size_t>(n);
        const std::span<const double> norms(v.norm_X.data(), count);
        AllocationPlan plan;
        if (cfg.allocation.mode == "fixed")
            plan = fixed_space_baseline(norms, balanced_fixed_dofs(n, rep.s_used, rep.t_used));
        else
            plan = sup ? allocate(norms, rep.s_used, rep.t_used, n) : allocate_l2(norms, rep.s_used, rep.t_used, n);

        SweepPoint pt{n, 0, 0.0, 0.0, 0.0};
        for (std::size_t k = 0; k < count; ++k) pt.N += realizer.realized_dofs(static_cast<double>(plan.dofs[k]));

        if (!sup) {
            double kept = 0.0;
            double spatial = 0.0;
            for (std::size_t k = 0; k < count; ++k) {
                kept += v.norm_V[k] * v.norm_V[k];
                spatial += realizer.error_sq(k, static_cast<double>(plan.dofs[k]));
            }
            pt.parametric_error = std::sqrt(std::max(v.total_energy - kept, 0.0));
            pt.spatial_error = std::sqrt(spatial);
            pt.error = std::sqrt(pt.parametric_error * pt.parametric_error + spatial);
        } else {
            std::vector<GridFunction> realized;
            realized.reserve(count);
            for (std::size_t k = 0; k < count; ++k) realized.push_back(realizer.realize(k, static_cast<double>(plan.dofs[k])));
            std::vector<double> err(ys.size()), perr(ys.size());
            parallel_for(ys.size(), cfg.threads, [&](std::size_t i) {
                GridFunction full = truth[i];
                GridFunction semi = truth[i];
                for (std::size_t k = 0; k < count; ++k) {
                    const double b = basis_value(comp, v.index[k], ys[i]);
                    full.axpy(-b, realized[k]);
                    semi.axpy(-b, *v.field[k]);
                }
                err[i] = norm_V(full);
                perr[i] = norm_V(semi);
            });
            pt.error = *std::max_element(err.begin(), err.end());
            pt.parametric_error = *std::max_element(perr.begin(), perr.end());
        }
        rep.points.push_back(pt);
    }
    finish(rep, cfg);
    return rep;
}

JointSelection joint_best_N(const OrthoExpansion& ex, const HierarchicalBasis& basis, std::size_t N,
                            bool keep_selection) {
    if (!(ex.space() == basis.space()))
        throw ValidationError("joint selection needs the expansion on the hierarchical basis space");
    struct Entry {
        double c2;
        std::size_t lambda;
        std::size_t slot;
    };
    std::vector<Entry> all;
    const auto terms = ex.terms();
    all.reserve(terms.size() * basis.size());
    for (std::size_t s = 0; s < terms.size(); ++s) {
        const auto h = basis.to_hierarchical(terms[s].v);
        for (std::size_t i = 0; i < h.size(); ++i) all.push_back({h[i] * h[i] * basis.energy_weight(i), i, s});
    }
    auto larger = [](const Entry& a, const Entry& b) {
        if (a.c2 != b.c2) return a.c2 > b.c2;
        if (a.slot != b.slot) return a.slot < b.slot;
        return a.lambda < b.lambda;
    };
    const std::size_t keep = std::min(N, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), larger);
    JointSelection sel{keep, 0.0, {}};
    // dropped energy summed smallest first
    std::vector<double> dropped;
    for (std::size_t k = keep; k < all.size(); ++k) dropped.push_back(all[k].c2);
    std::sort(dropped.begin(), dropped.end());
    for (double d : dropped) sel.error += d;
    sel.error = std::sqrt(sel.error);
    if (keep_selection)
        for (std::size_t k = 0; k < keep; ++k) sel.selected.emplace_back(all[k].lambda, all[k].slot);
    return sel;
}

RateReport run_joint(const ExperimentConfig& cfg) {
    if (cfg.expansion.kind == "taylor") throw ValidationError("config: joint selection needs an orthonormal family");
    if (cfg.fe_degree != 1 || !is_power_of_two(cfg.fe_elements))
        throw ValidationError("config: joint selection needs fe.degree = 1 and a power-of-two mesh");
    if (cfg.joint_schedule.empty()) throw ValidationError("config: sweep.joint_N must not be empty");
    const ParametricModel model = build_model(cfg.model);
    const FeSpace fine(cfg.fe_elements, 1);
    const HierarchicalBasis basis(log2_exact(cfg.fe_elements));
    const Computed comp = compute_expansion(cfg, model, fine, false);

    // all energy-normalized squared coefficients, sorted once; tails by suffix sums
    std::vector<double> c2;
    for (const auto& t : comp.ortho->terms()) {
        const auto h = basis.to_hierarchical(t.v);
        for (std::size_t i = 0; i < h.size(); ++i) c2.push_back(h[i] * h[i] * basis.energy_weight(i));
    }
    std::sort(c2.begin(), c2.end(), std::greater<>());
    std::vector<double> tail(c2.size() + 1, 0.0);
    for (std::size_t k = c2.size(); k-- > 0;) tail[k] = tail[k + 1] + c2[k];

    RateReport rep;
    rep.label = cfg.expansion.kind + "/joint";
    rep.seed = cfg.seed;
    rep.predicted = derived_prediction(cfg, true);
    for (double n : cfg.joint_schedule) {
        const auto N = std::min(static_cast<std::size_t>(n), c2.size());
        const double e = std::sqrt(tail[N]);
        rep.points.push_back({n, N, e, e, 0.0});
    }
    finish(rep, cfg);
    return rep;
}

void ensure_writable(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
    const auto probe = dir / ".write_probe";
    {
        std::ofstream out(probe);
        if (!out || !(out << "ok")) throw ValidationError("output directory " + dir.string() + " is not writable");
    }
    std::filesystem::remove(probe, ec);
}

json report_json(const ExperimentConfig& cfg, const RateReport& rep) {
    json j;
    j["config"] = to_json(cfg);
    j["label"] = rep.label;
    json pts = json::array();
    for (const auto& p : rep.points)
        pts.push_back({{"n", p.n}, {"N", p.N}, {"error", p.error}, {"parametric_error", p.parametric_error},
                       {"spatial_error", p.spatial_error}});
    j["points"] = pts;
    j["summary"] = {{"fit_ok", rep.fit.ok},        {"note", rep.fit.note},          {"rate", rep.fit.rate},
                    {"slope", rep.fit.fit.slope},  {"intercept", rep.fit.fit.intercept},
                    {"residual", rep.fit.fit.residual}, {"predicted", rep.predicted}, {"s", rep.s_used},
                    {"t", rep.t_used},             {"seed", rep.seed},              {"passed", rep.passed}};
    j["environment"] = {{"compiler", __VERSION__}, {"cxx_standard", static_cast<long>(__cplusplus)},
                        {"threads", cfg.threads}};
    return j;
}

void write_report(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RateReport& rep) {
    ensure_writable(dir);
    {
        std::ofstream out(dir / (cfg.prefix + ".csv"));
        out.precision(17);
        out << "n,N,error,parametric_error,spatial_error\n";
        for (const auto& p : rep.points)
            out << p.n << ',' << p.N << ',' << p.error << ',' << p.parametric_error << ',' << p.spatial_error << '\n';
    }
    {
        json j = report_json(cfg, rep);
        // wall-clock time lives in its own field so the rest stays reproducible
        j["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        std::ofstream out(dir / (cfg.prefix + ".json"));
        out << j.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / (cfg.prefix + "_plot.csv"));
        out.precision(17);
        out << "log10_N,log10_error,log10_predicted\n";
        // predicted line C N^{-r} with log C matched to the data in the mean
        double logC = 0.0;
        std::size_t used = 0;
        for (const auto& p : rep.points)
            if (p.error > 0.0) {
                logC += std::log10(p.error) + rep.predicted * std::log10(static_cast<double>(p.N));
                ++used;
            }
        if (used) logC /= static_cast<double>(used);
        for (const auto& p : rep.points) {
            if (!(p.error > 0.0)) continue;
            const double lN = std::log10(static_cast<double>(p.N));
            out << lN << ',' << std::log10(p.error) << ',' << logC - rep.predicted * lN << '\n';
        }
    }
}

}  // namespace spx
