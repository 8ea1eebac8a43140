#include "doctest.h"

#include "spx/error.hpp"
#include "spx/multiindex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

using namespace spx;

namespace {

// every mu <= nu, by odometer over the support of nu
std::vector<MultiIndex> all_dominated(const MultiIndex& nu) {
    std::vector<MultiIndex> out;
    const auto dense = nu.dense(nu.max_dim());
    std::vector<std::uint32_t> mu(dense.size(), 0);
    while (true) {
        out.push_back(MultiIndex::from_dense(mu));
        std::size_t k = 0;
        while (k < mu.size() && mu[k] == dense[k]) mu[k++] = 0;
        if (k == mu.size()) break;
        ++mu[k];
    }
    return out;
}

double brute_b_weight(const MultiIndex& nu, const std::vector<double>& rho, std::uint32_t r) {
    double s = 0.0;
    for (const auto& mu : all_dominated(nu)) {
        bool ok = true;
        for (const auto& e : mu.entries()) ok = ok && e.exponent <= r;
        if (!ok) continue;
        double p = 1.0;
        for (const auto& e : mu.entries()) p *= std::pow(rho[e.dim - 1], 2.0 * e.exponent);
        s += static_cast<double>(binomial(nu, mu)) * p;
    }
    return s;
}

}  // namespace

TEST_CASE("multi-index storage invariants") {
    auto nu = MultiIndex::from_pairs({{3, 2}, {1, 1}, {2, 0}});
    CHECK(nu.order() == 3);
    CHECK(nu.entries().size() == 2);
    CHECK(nu.entries()[0].dim == 1);
    CHECK(nu.entries()[1].dim == 3);
    CHECK(nu[2] == 0);
    CHECK(nu.decremented(1) == MultiIndex::unit(3, 2));
    CHECK(nu.incremented(2)[2] == 1);
    CHECK_THROWS_AS(nu.decremented(2), ValidationError);
    CHECK_THROWS_AS(MultiIndex::from_pairs({{1, 1}, {1, 2}}), ValidationError);
    CHECK_THROWS_AS(MultiIndex::from_pairs({{0, 1}}), ValidationError);
}

TEST_CASE("JSON serialization round trip") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::uint32_t> d(6);
        for (auto& x : d) x = static_cast<std::uint32_t>(gen() % 3);
        const auto nu = MultiIndex::from_dense(d);
        CHECK(MultiIndex::from_json(nu.to_json()) == nu);
    }
    CHECK(MultiIndex::from_pairs({{1, 2}, {3, 1}}).to_json() == "[[1,2],[3,1]]");
    CHECK(MultiIndex{}.to_json() == "[]");
    CHECK_THROWS_AS(MultiIndex::from_json("[[1]]"), ValidationError);
}

TEST_CASE("factorial") {
    CHECK(factorial(MultiIndex{}) == 1);
    CHECK(factorial(MultiIndex::from_dense({2, 1})) == 2);
    CHECK(factorial(MultiIndex::from_dense({3, 0, 2})) == 12);
    CHECK(factorial(MultiIndex::unit(1, 20)) == 2432902008176640000ull);
    CHECK_THROWS_AS(factorial(MultiIndex::unit(1, 21)), ValidationError);
}

TEST_CASE("weight power") {
    WeightSequence rho({2.0, 3.0, 5.0});
    CHECK(weight_power(rho, MultiIndex::from_dense({1, 2})) == doctest::Approx(18.0));
    CHECK(weight_power(rho, MultiIndex{}) == 1.0);
    CHECK(weight_power(WeightSequence::constant(1.0), MultiIndex::from_dense({4, 1, 7})) == 1.0);
    // tail reuses the last value
    CHECK(rho[10] == 5.0);

    SUBCASE("multiplicative in unit increments") {
        std::mt19937_64 gen(11);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<std::uint32_t> d(5);
            for (auto& x : d) x = static_cast<std::uint32_t>(gen() % 4);
            const auto nu = MultiIndex::from_dense(d);
            const auto j = static_cast<std::uint32_t>(1 + gen() % 6);
            CHECK(weight_power(rho, nu.incremented(j)) == doctest::Approx(weight_power(rho, nu) * rho[j]).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(WeightSequence({1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(WeightSequence({1.0, -2.0}), ValidationError);
}

TEST_CASE("binomial") {
    const auto nu = MultiIndex::from_dense({2, 1});
    CHECK(binomial(nu, MultiIndex::from_dense({1, 1})) == 2);
    CHECK(binomial(nu, MultiIndex::from_dense({3, 0})) == 0);
    CHECK(binomial(nu, MultiIndex::from_dense({0, 0, 1})) == 0);
    CHECK(binomial(nu, MultiIndex{}) == 1);
    CHECK_THROWS_AS(binomial(MultiIndex::from_dense({200, 200}), MultiIndex::from_dense({100, 100})), OverflowError);

    SUBCASE("Vandermonde-type identity against enumeration") {
        // sum_{kappa <= mu <= nu} binom(nu, mu) binom(mu, kappa) = 2^{|nu - kappa|} binom(nu, kappa)
        for (const auto& nu : all_dominated(MultiIndex::from_dense({2, 1, 1}))) {
            for (const auto& kappa : all_dominated(nu)) {
                std::uint64_t lhs = 0;
                for (const auto& mu : all_dominated(nu)) lhs += binomial(nu, mu) * binomial(mu, kappa);
                const std::uint64_t rhs = (std::uint64_t{1} << (nu.order() - kappa.order())) * binomial(nu, kappa);
                CHECK(lhs == rhs);
            }
        }
        // sum_mu binom(nu, mu) = 2^|nu|
        for (const auto& nu : all_dominated(MultiIndex::from_dense({3, 1}))) {
            std::uint64_t s = 0;
            for (const auto& mu : all_dominated(nu)) s += binomial(nu, mu);
            CHECK(s == (std::uint64_t{1} << nu.order()));
        }
    }
}

TEST_CASE("b weight") {
    CHECK(b_weight(MultiIndex{}, WeightSequence({2.0}), 1) == 1.0);
    CHECK(b_weight(MultiIndex::unit(1), WeightSequence({2.0}), 1) == doctest::Approx(5.0));
    CHECK(b_weight(MultiIndex::unit(1, 2), WeightSequence({1.0}), 1) == doctest::Approx(3.0));

    SUBCASE("zero weights give one") {
        const std::vector<double> zeros(4, 0.0);
        for (const auto& nu : all_dominated(MultiIndex::from_dense({2, 3, 1}))) CHECK(b_weight(nu, zeros, 2) == 1.0);
    }
    SUBCASE("matches brute-force enumeration") {
        const std::vector<double> rho{1.3, 0.7, 2.1};
        for (std::uint32_t r = 1; r <= 3; ++r) {
            for (const auto& nu : all_dominated(MultiIndex::from_dense({3, 2, 2}))) {
                CHECK(b_weight(nu, rho, r) == doctest::Approx(brute_b_weight(nu, rho, r)).epsilon(1e-13));
            }
        }
    }
    CHECK_THROWS_AS(b_weight(MultiIndex{}, WeightSequence({2.0}), 0), ValidationError);
}

TEST_CASE("downward closed sets") {
    DownwardClosedSet s;
    CHECK(s.size() == 1);
    CHECK(s.contains(MultiIndex{}));
    CHECK_THROWS_AS(s.insert(MultiIndex::from_dense({1, 1})), ValidationError);
    CHECK(s.insert(MultiIndex::unit(1)));
    CHECK_FALSE(s.insert(MultiIndex::unit(1)));
    CHECK(s.insert(MultiIndex::unit(2)));
    CHECK(s.insert(MultiIndex::from_dense({1, 1})));
    CHECK(is_downward_closed(s.members()));

    const auto t = DownwardClosedSet::tensor(3, 2);
    CHECK(t.size() == 27);
    CHECK(is_downward_closed(t.members()));
    const auto td = DownwardClosedSet::total_degree(4, 3);
    CHECK(td.size() == 35);  // binom(7, 3)
    CHECK(is_downward_closed(td.members()));

    std::vector<MultiIndex> broken{MultiIndex{}, MultiIndex::unit(2, 2)};
    CHECK_FALSE(is_downward_closed(broken));
}

TEST_CASE("layers") {
    DownwardClosedSet s;
    s.insert(MultiIndex::unit(2));
    s.insert(MultiIndex::unit(1));
    s.insert(MultiIndex::unit(1, 2));
    CHECK(layer(s, 1) == std::vector<MultiIndex>{MultiIndex::unit(1), MultiIndex::unit(2)});
    CHECK(layer(s, 0) == std::vector<MultiIndex>{MultiIndex{}});
    const auto td = DownwardClosedSet::total_degree(3, 4);
    std::size_t total = 0;
    for (std::uint32_t n = 0; n <= 4; ++n) {
        const auto l = layer(td, n);
        CHECK(l.size() == full_layer_size(3, n));
        total += l.size();
    }
    CHECK(total == td.size());
}

TEST_CASE("envelope generation") {
    CHECK(generate_envelope(WeightSequence({2.0, 3.0}), 1, 10).size() == 1);

    SUBCASE("dyadic weights, budget 4") {
        std::vector<double> rho;
        for (int j = 1; j <= 4; ++j) rho.push_back(std::ldexp(1.0, j));
        const auto env = generate_envelope(WeightSequence(rho), 4, 10);
        std::vector<MultiIndex> got(env.members().begin(), env.members().end());
        std::sort(got.begin(), got.end(), CanonicalLess{});
        std::vector<MultiIndex> want{MultiIndex{}, MultiIndex::unit(1), MultiIndex::unit(1, 2), MultiIndex::unit(2)};
        std::sort(want.begin(), want.end(), CanonicalLess{});
        CHECK(got == want);
        // generation order: surrogate desc, then degree: e_2 (1/4, |nu|=1) before 2e_1 (1/4, |nu|=2)
        CHECK(env.members()[2] == MultiIndex::unit(2));
        CHECK(env.members()[3] == MultiIndex::unit(1, 2));
    }

    SUBCASE("matches brute-force ranking") {
        const WeightSequence rho({1.7, 2.3, 3.1, 4.9});
        // all |nu| <= 6 on 4 dims, ranked by rho^{-nu}
        const auto pool = DownwardClosedSet::total_degree(4, 6);
        std::vector<std::pair<double, MultiIndex>> ranked;
        for (const auto& nu : pool.members()) ranked.emplace_back(1.0 / weight_power(rho, nu), nu);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t budget : {1u, 5u, 17u, 40u}) {
            const auto env = generate_envelope(rho, budget, 6);
            CHECK(env.size() == budget);
            double worst_in = 1.0;
            for (const auto& nu : env.members()) worst_in = std::min(worst_in, 1.0 / weight_power(rho, nu));
            CHECK(worst_in == doctest::Approx(ranked[budget - 1].first));
        }
    }

    SUBCASE("property: always downward closed") {
        std::mt19937_64 gen(3);
        std::uniform_real_distribution<double> w(1.05, 6.0);
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<double> rho(1 + gen() % 8);
            for (auto& r : rho) r = w(gen);
            const auto env = generate_envelope(WeightSequence(rho), 1 + gen() % 300, 1 + gen() % 8);
            CHECK(env.contains(MultiIndex{}));
            CHECK(is_downward_closed(env.members()));
        }
    }
    CHECK_THROWS_AS(generate_envelope(WeightSequence({2.0, 1.0}), 4, 3), ValidationError);
    CHECK_THROWS_AS(generate_envelope(WeightSequence({2.0}), 0, 3), ValidationError);
}
