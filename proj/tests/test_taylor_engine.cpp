#include "doctest.h"

#include "spx/error.hpp"
#include "spx/taylor_engine.hpp"

#include <cmath>
#include <sstream>

using namespace spx;

namespace {

// abar = 1, one constant psi = c: u(y) = t_0 / (1 + c y), so t_k = (-c)^k t_0.
AffineModel constant_model(double c) {
    return AffineModel(PiecewiseField::constant(1.0), {PiecewiseField::constant(c)});
}

DownwardClosedSet chain(std::uint32_t k) { return DownwardClosedSet::total_degree(1, k); }

AffineModel wavelet_model(double theta, unsigned levels = 4) {
    WaveletFamily fam;
    fam.levels = levels;
    fam.amplitude = wavelet_amplitude_for_theta(fam, theta);
    return build_wavelet_model(fam);
}

}  // namespace

TEST_CASE("geometric oracle for a constant parameter field") {
    const double c = 0.4;
    const FeSpace space(64, 2);
    const auto ex = compute_taylor(constant_model(c), space, chain(12));
    REQUIRE(ex.terms().size() == 13);
    const double n0 = ex.find(MultiIndex())->norm_V;
    CHECK(n0 > 0.0);
    for (std::uint32_t k = 1; k <= 12; ++k) {
        const auto* t = ex.find(MultiIndex::unit(1, k));
        REQUIRE(t != nullptr);
        CHECK(std::abs(t->norm_V - std::pow(c, k) * n0) <= 1e-10 * n0);
    }
    // sign alternates: t_1 = -c t_0
    const auto& t0 = *ex.find(MultiIndex())->t;
    const auto& t1 = *ex.find(MultiIndex::unit(1))->t;
    CHECK(t1.coeffs()[10] == doctest::Approx(-c * t0.coeffs()[10]).epsilon(1e-12));
}

TEST_CASE("t_0 solves the nominal problem") {
    const FeSpace space(32, 1);
    const auto model = constant_model(0.3);
    const auto ex = compute_taylor(model, space, chain(0));
    const auto direct = solve_dirichlet(space, sample_field(model.abar(), space), [](double) { return 1.0; });
    for (std::size_t i = 0; i < space.dofs(); ++i)
        CHECK(ex.terms()[0].t->coeffs()[i] == doctest::Approx(direct.coeffs()[i]).epsilon(1e-13));
}

TEST_CASE("mixed index is independent of the ancestor order") {
    // disjoint supports on [0,1/2] and [1/2,1]
    const auto p1 = PiecewiseField::hat(4, 0.0, 0.5, 0.3);
    const auto p2 = PiecewiseField::hat(4, 0.5, 1.0, 0.3);
    const AffineModel model(PiecewiseField::constant(1.0, 4), {p1, p2});
    const auto ex = compute_taylor(model, FeSpace(32, 2), DownwardClosedSet::total_degree(2, 2));
    const auto* t12 = ex.find(MultiIndex::from_pairs({{1, 1}, {2, 1}}));
    REQUIRE(t12 != nullptr);
    // recompute by hand from both parents separately; the sum must agree
    const FeSpace space(32, 2);
    const DirichletSolver solver(space, sample_field(model.abar(), space));
    GridFunction sum(space);
    for (std::uint32_t j : {1u, 2u}) {
        const std::uint32_t other = 3 - j;
        const auto& parent = *ex.find(MultiIndex::unit(other))->t;
        ElementField g = sample_field(model.psi()[j - 1], space);
        const ElementField d = derivative_at_quadrature(parent);
        for (std::size_t k = 0; k < g.values().size(); ++k) g.values()[k] *= d.values()[k];
        auto rhs = flux_load(space, g);
        for (double& v : rhs) v = -v;
        sum += solver.solve_load(rhs);
    }
    sum -= *t12->t;
    CHECK(norm_V(sum) <= 1e-13);
}

TEST_CASE("linearity in the load") {
    const auto model = wavelet_model(0.5, 2);
    const FeSpace space(16, 1);
    const auto set = DownwardClosedSet::total_degree(static_cast<std::uint32_t>(model.dims()), 2);
    TaylorOptions a;
    TaylorOptions b;
    b.load = [](double) { return 3.0; };
    const auto ea = compute_taylor(model, space, set, a);
    const auto eb = compute_taylor(model, space, set, b);
    for (std::size_t k = 0; k < ea.terms().size(); ++k)
        CHECK(eb.terms()[k].norm_V == doctest::Approx(3.0 * ea.terms()[k].norm_V).epsilon(1e-12));
}

TEST_CASE("threads do not change results") {
    const auto model = wavelet_model(0.6, 3);
    const FeSpace space(32, 1);
    const auto set = DownwardClosedSet::total_degree(static_cast<std::uint32_t>(model.dims()), 3);
    TaylorOptions one;
    TaylorOptions four;
    four.threads = 4;
    one.laplacians = four.laplacians = true;
    const auto e1 = compute_taylor(model, space, set, one);
    const auto e4 = compute_taylor(model, space, set, four);
    REQUIRE(e1.terms().size() == e4.terms().size());
    for (std::size_t k = 0; k < e1.terms().size(); ++k) {
        CHECK(e1.terms()[k].index == e4.terms()[k].index);
        CHECK(e1.terms()[k].norm_V == e4.terms()[k].norm_V);
        CHECK(e1.terms()[k].norm_W == e4.terms()[k].norm_W);
    }
}

TEST_CASE("Laplacian recursion") {
    SUBCASE("abar = 1, f = 1 gives Delta t_0 = -1") {
        const auto ex = compute_taylor(constant_model(0.5), FeSpace(256, 1), chain(0), {.laplacians = true});
        CHECK(ex.terms()[0].norm_W == doctest::Approx(1.0).epsilon(1e-2));
        for (double v : ex.terms()[0].laplacian->values()) CHECK(v == doctest::Approx(-1.0));
    }
    SUBCASE("constant psi: W norms are geometric") {
        const double c = 0.3;
        const auto ex = compute_taylor(constant_model(c), FeSpace(64, 1), chain(6), {.laplacians = true});
        for (std::uint32_t k = 0; k <= 6; ++k)
            CHECK(ex.find(MultiIndex::unit(1, k))->norm_W == doctest::Approx(std::pow(c, k)).epsilon(1e-12));
    }
    SUBCASE("after the fact matches during traversal") {
        const auto model = wavelet_model(0.6, 2);
        const FeSpace space(32, 2);
        const auto set = DownwardClosedSet::total_degree(static_cast<std::uint32_t>(model.dims()), 3);
        auto late = compute_taylor(model, space, set);
        compute_laplacians(late, std::vector<double>{1.5});
        const auto early = compute_taylor(model, space, set, {.laplacians = true, .ltau_exponents = {1.5}});
        for (std::size_t k = 0; k < late.terms().size(); ++k) {
            CHECK(late.terms()[k].norm_W == doctest::Approx(early.terms()[k].norm_W).epsilon(1e-13));
            CHECK(late.terms()[k].ltau_norm(1.5) == doctest::Approx(early.terms()[k].ltau_norm(1.5)).epsilon(1e-13));
        }
    }
    SUBCASE("W consistency converges at first order or better") {
        // abar = 1 + x/2 is not constant, so the FE derivative enters Delta t_0
        const AffineModel model(PiecewiseField::from_nodes(std::vector<double>{1.0, 1.5}),
                                {PiecewiseField::constant(0.1)});
        const double fine = compute_taylor(model, FeSpace(4096, 2), chain(0), {.laplacians = true}).terms()[0].norm_W;
        double prev = 0.0;
        for (std::size_t el : {16, 32, 64}) {
            const double w = compute_taylor(model, FeSpace(el, 1), chain(0), {.laplacians = true}).terms()[0].norm_W;
            const double err = std::abs(w - fine);
            if (prev > 0.0) CHECK(prev / err >= 1.9);
            prev = err;
        }
    }
    SUBCASE("compute_laplacians needs the fields") {
        auto ex = compute_taylor(constant_model(0.2), FeSpace(8, 1), chain(2), {.retain_fields = false});
        CHECK_THROWS_AS(compute_laplacians(ex), ValidationError);
    }
}

TEST_CASE("layer sums") {
    SUBCASE("D_0 and kappa") {
        const auto ex = compute_taylor(constant_model(0.5), FeSpace(32, 2), chain(3));
        const auto rep = layer_sums(ex, WeightSequence::constant(1.0));
        CHECK(rep.theta == doctest::Approx(0.5));
        CHECK(rep.kappa == doctest::Approx(1.0 / 3.0));
        const auto& t0 = *ex.terms()[0].t;
        CHECK(rep.layers[0].D == doctest::Approx(norm_V(t0) * norm_V(t0)).epsilon(1e-13));
        CHECK(rep.layers[3].complete);
    }
    SUBCASE("wavelet model decays by kappa per layer") {
        const auto model = wavelet_model(0.6);
        const FeSpace space(64, 1);
        const auto set = DownwardClosedSet::total_degree(static_cast<std::uint32_t>(model.dims()), 3);
        const auto ex = compute_taylor(model, space, set, {.laplacians = true, .retain_fields = false});
        const auto rep = layer_sums(ex, WeightSequence::constant(1.0));
        CHECK(rep.theta == doctest::Approx(0.6).epsilon(1e-12));
        for (std::uint32_t n = 1; n <= 3; ++n) {
            CHECK(rep.layers[n].complete);
            CHECK(rep.layers[n].D <= 1.05 * rep.kappa * rep.layers[n - 1].D);
            CHECK(rep.layers[n].D <= 1.05 * std::pow(rep.kappa, n) * rep.layers[0].D);
            CHECK(rep.layers[n].C >= 0.0);
        }
    }
    SUBCASE("incomplete top layer is flagged") {
        const auto model = wavelet_model(0.5, 2);
        const auto env = generate_envelope(WeightSequence::constant(2.0, model.dims()), 10, 5);
        const auto ex = compute_taylor(model, FeSpace(16, 1), env);
        CHECK_FALSE(ex.layer_complete(ex.max_order()));
    }
}

TEST_CASE("weighted l2 and l^p") {
    const double c = 0.4;
    const auto ex = compute_taylor(constant_model(c), FeSpace(32, 2), chain(30), {.laplacians = true});
    const double n0 = ex.terms()[0].norm_V;
    const WeightSequence rho({1.0 / (2.0 * c)});
    CHECK(weighted_l2(ex, rho, NormKind::V) ==
          doctest::Approx(n0 * n0 * (4.0 / 3.0) * (1.0 - std::pow(4.0, -31))).epsilon(1e-10));
    CHECK(weighted_l2(compute_taylor(constant_model(c), FeSpace(32, 2), chain(0)), rho, NormKind::V) ==
          doctest::Approx(n0 * n0).epsilon(1e-12));

    const double v[] = {3.0, 4.0};
    CHECK(lp_quasinorm(v, 1.0) == doctest::Approx(7.0));
    CHECK(lp_quasinorm(v, 2.0) == doctest::Approx(5.0));

    // rho = 2 > 1/c keeps the weighted sum finite; the Hoelder bound dominates
    const WeightSequence big({2.0});
    std::vector<double> norms;
    for (const auto& t : ex.terms()) norms.push_back(t.norm_V);
    for (double p : {0.5, 1.0, 1.5})
        CHECK(holder_lp_bound(ex, big, p, NormKind::V) >= lp_quasinorm(norms, p));
    const double ps[] = {0.5, 1.0};
    const auto rep = summability_report(ex, big, ps);
    REQUIRE(rep.lp.size() == 2);
    for (const auto& e : rep.lp) CHECK(e.holder_bound >= e.direct);
    CHECK(rep.weighted_l2_W > 0.0);
}

TEST_CASE("best n selection and truncated evaluation") {
    const double c = 0.5;
    const auto model = constant_model(c);
    const FeSpace space(64, 2);
    const auto ex = compute_taylor(model, space, chain(10));

    CHECK(select_best_n(ex, 100, NormKind::V).size() == 11);
    const auto one = select_best_n(ex, 1, NormKind::V);
    CHECK(one[0].index.is_zero());
    const auto b4 = select_best_n(ex, 4, NormKind::V);
    const auto b5 = select_best_n(ex, 5, NormKind::V);
    for (std::size_t k = 0; k < 4; ++k) CHECK(b4[k].index == b5[k].index);

    const auto full = chain(10);
    const std::vector<MultiIndex> all(full.members().begin(), full.members().end());
    const std::vector<MultiIndex> zero{MultiIndex()};
    const double y0[] = {0.0};
    const double yh[] = {0.5};
    GridFunction diff = eval_truncated(ex, all, y0);
    diff -= *ex.terms()[0].t;
    CHECK(norm_V(diff) == 0.0);
    diff = eval_truncated(ex, zero, yh);
    diff -= *ex.terms()[0].t;
    CHECK(norm_V(diff) == 0.0);

    // u(0.5) = t_0 / (1 + c/2); the remainder after degree K is geometric
    const auto exact = solve_dirichlet(space, ElementField(space.elements(), 1.0 + 0.5 * c), [](double) { return 1.0; });
    diff = eval_truncated(ex, all, yh);
    diff -= exact;
    const double n0 = ex.terms()[0].norm_V;
    CHECK(norm_V(diff) <= std::pow(c, 11) * n0 / (1.0 - c / 2.0) + 1e-12);

    const double bad[] = {1.5};
    CHECK_THROWS_AS(eval_truncated(ex, all, bad), ValidationError);
}

TEST_CASE("sup error estimate") {
    const auto model = wavelet_model(0.6, 1);
    const FeSpace space(32, 1);
    const auto set = DownwardClosedSet::total_degree(static_cast<std::uint32_t>(model.dims()), 14);
    const auto ex = compute_taylor(model, space, set);
    const auto best = select_best_n(ex, 20, NormKind::V);
    std::vector<MultiIndex> lambda;
    for (const auto& r : best) lambda.push_back(r.index);

    const std::vector<std::vector<double>> origin{std::vector<double>(model.dims(), 0.0)};
    CHECK(sup_error_at(ex, lambda, origin).estimate <= 1e-14);

    const auto a = sup_error_estimate(ex, lambda, 8, 42);
    const auto b = sup_error_estimate(ex, lambda, 8, 42);
    CHECK(a.estimate == b.estimate);
    CHECK(a.seed == 42);
    CHECK(a.estimate > 0.0);
    // degree >= 15 is not stored; its contribution is far below the dropped tail
    CHECK(a.estimate <= a.tail_bound + 1e-10);
}

TEST_CASE("L^tau summability") {
    const double c = 0.3;
    const auto ex = compute_taylor(constant_model(c), FeSpace(32, 1), chain(8), {.laplacians = true});
    const auto one = WeightSequence::constant(1.0);
    double expect = 0.0;
    for (const auto& t : ex.terms()) expect += (t.norm_V + t.norm_W) * (t.norm_V + t.norm_W);
    CHECK(ltau_summability(ex, 2.0, one) == doctest::Approx(expect).epsilon(1e-12));

    WaveletFamily fam;
    fam.alpha = 0.8;
    fam.levels = 3;
    fam.amplitude = wavelet_amplitude_for_theta(fam, 0.5);
    const auto wm = build_wavelet_model(fam);
    const auto wex = compute_taylor(wm, FeSpace(32, 1),
                                    DownwardClosedSet::total_degree(static_cast<std::uint32_t>(wm.dims()), 3),
                                    {.laplacians = true, .ltau_exponents = {1.2}});
    const double total = ltau_summability(wex, 1.2, one);
    CHECK(std::isfinite(total));
    std::vector<double> per_layer(4, 0.0);
    for (const auto& t : wex.terms()) per_layer[t.index.order()] += std::pow(t.norm_V + t.ltau_norm(1.2), 1.2);
    for (int n = 1; n <= 3; ++n) CHECK(per_layer[n] < per_layer[n - 1]);
}

TEST_CASE("tail rate and csv export") {
    std::vector<double> a;
    for (int k = 1; k <= 2000; ++k) a.push_back(std::pow(k, -2.0));
    // sum_{k>n} k^-2 ~ 1/n
    CHECK(sorted_tail_rate(a, 8, 256, 1.0) == doctest::Approx(1.0).epsilon(0.03));
    CHECK_THROWS_AS(sorted_tail_rate(a, 8, 5000, 1.0), ValidationError);

    const auto ex = compute_taylor(constant_model(0.5), FeSpace(8, 1), chain(2));
    std::ostringstream out;
    write_csv(out, ex);
    CHECK(out.str().rfind("nu,order,norm_V,norm_W\n\"[]\",0,", 0) == 0);
}
