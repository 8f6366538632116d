#include "doctest.h"

#include "fixtures.hpp"
#include "ndro/transport.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace ndro;

TEST_CASE("two-path trees: Wasserstein and nested distances") {
    const double eps = 0.1;
    auto a = fixtures::twopath_nominal();
    auto b = fixtures::twopath_perturbed(eps);
    DistanceSpec s1{1.0, Norm::l1};
    CHECK(std::abs(wasserstein_distance(a, b, s1) - 2 * eps) < 1e-8);
    CHECK(std::abs(nested_distance(a, b, s1) - (1 + 2 * eps)) < 1e-8);
    CHECK(std::abs(nested_distance_oracle(a, b, s1) - (1 + 2 * eps)) < 1e-8);
    double c = causal_distance(a, b, s1);
    CHECK(c >= 2 * eps - 1e-9);
    CHECK(c <= 1 + 2 * eps + 1e-9);
    DistanceSpec s2{2.0, Norm::l1};
    CHECK(std::abs(wasserstein_distance(a, b, s2) - std::sqrt(2.0) * eps) < 1e-8);
}

TEST_CASE("identical distributions have zero distance") {
    std::vector<double> mu{0.2, 0.3, 0.5};
    MatrixXd c(3, 3);
    c << 0, 1, 2, 1, 0, 1, 2, 1, 0;
    auto r = discrete_wasserstein(mu, mu, c, 1.0);
    CHECK(r.value == doctest::Approx(0.0).epsilon(1e-12));
    for (int i = 0; i < 3; ++i) CHECK(r.coupling(i, i) == doctest::Approx(mu[i]));
    auto t = fixtures::coupling_tree_a();
    for (double p : {1.0, 2.0, kInf}) {
        DistanceSpec s{p, Norm::l2};
        CHECK(nested_distance(t, t, s) == doctest::Approx(0.0));
        CHECK(nested_distance_oracle(t, t, s) == doctest::Approx(0.0));
        CHECK(causal_distance(t, t, s) == doctest::Approx(0.0));
    }
}

TEST_CASE("discrete Wasserstein: errors") {
    MatrixXd c = MatrixXd::Ones(2, 2);
    CHECK_THROWS_AS(discrete_wasserstein({0.5, 0.6}, {0.5, 0.5}, c, 1.0), DomainError);
    c(0, 1) = -1;
    CHECK_THROWS_AS(discrete_wasserstein({0.5, 0.5}, {0.5, 0.5}, c, 1.0), DomainError);
}

TEST_CASE("discrete Wasserstein: matches transportation polytope vertex enumeration") {
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> U(0.0, 3.0);
    for (int rep = 0; rep < 25; ++rep) {
        auto mu = oracles::random_simplex(gen, 3);
        auto nu = oracles::random_simplex(gen, 3);
        MatrixXd c(3, 3);
        for (int k = 0; k < 9; ++k) c(k / 3, k % 3) = U(gen);
        // rows: 3 row sums + first 2 column sums (the last one is implied)
        MatrixXd A = MatrixXd::Zero(5, 9);
        VectorXd b(5);
        for (int k = 0; k < 9; ++k) {
            A(k / 3, k) = 1;
            if (k % 3 < 2) A(3 + k % 3, k) = 1;
        }
        b << mu[0], mu[1], mu[2], nu[0], nu[1];
        for (double p : {1.0, 2.0, kInf}) {
            double best = kInf;
            oracles::for_each_bfs(A, b, [&](const VectorXd& x) {
                double v = 0;
                for (int k = 0; k < 9; ++k) {
                    if (std::isfinite(p)) v += x(k) * std::pow(c(k / 3, k % 3), p);
                    else if (x(k) > 1e-12) v = std::max(v, c(k / 3, k % 3));
                }
                best = std::min(best, std::isfinite(p) ? std::pow(v, 1.0 / p) : v);
            });
            CHECK(std::abs(discrete_wasserstein(mu, nu, c, p).value - best) < 1e-8);
        }
    }
}

TEST_CASE("coupling trees: causality of the three plans") {
    auto a = fixtures::coupling_tree_a();
    auto b = fixtures::coupling_tree_b();
    auto g = fixtures::coupling_plain();
    auto gc = fixtures::coupling_causal();
    auto gbc = fixtures::coupling_bicausal();
    CHECK_FALSE(is_causal(g, a, b, Direction::a_to_b));
    CHECK_FALSE(is_causal(g, a, b, Direction::b_to_a));
    CHECK(is_causal(gc, a, b, Direction::a_to_b));
    CHECK_FALSE(is_causal(gc, a, b, Direction::b_to_a));
    CHECK_FALSE(is_bicausal(gc, a, b));
    CHECK(is_bicausal(gbc, a, b));
    MatrixXd bad = g;
    bad(0, 0) += 0.01;
    CHECK_THROWS_AS(is_causal(bad, a, b, Direction::a_to_b), DomainError);
    for (double p : {1.0, 2.0, kInf})
        for (Norm n : {Norm::l1, Norm::l2}) {
            DistanceSpec s{p, n};
            CHECK(nested_distance_oracle(a, b, s) <= plan_cost(gbc, a, b, s) + 1e-9);
            CHECK(causal_distance(a, b, s) <= plan_cost(gc, a, b, s) + 1e-9);
        }
}

TEST_CASE("product and Monge couplings") {
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 10; ++rep) {
        auto a = oracles::random_tree(gen, 3, 3);
        auto b = oracles::random_tree(gen, 3, 3);
        auto pa = leaf_probs(a), pb = leaf_probs(b);
        MatrixXd prod(pa.size(), pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i)
            for (std::size_t j = 0; j < pb.size(); ++j) prod(i, j) = pa[i] * pb[j];
        CHECK(is_bicausal(prod, a, b));
    }
    // fans with identical weights and distinct stage-2 values; permutation coupling
    std::vector<SamplePath> pa, pb;
    std::normal_distribution<double> Z;
    for (int i = 0; i < 4; ++i) {
        pa.push_back(SamplePath{{fixtures::v1(i), fixtures::v1(Z(gen))}});
        pb.push_back(SamplePath{{fixtures::v1(10 + i), fixtures::v1(Z(gen))}});
    }
    auto fa = build_fan(pa, std::vector<double>(4, 0.25));
    auto fb = build_fan(pb, std::vector<double>(4, 0.25));
    int perm[4] = {2, 0, 3, 1};
    MatrixXd g = MatrixXd::Zero(4, 4);
    for (int i = 0; i < 4; ++i) g(i, perm[i]) = 0.25;
    CHECK(is_bicausal(g, fa, fb));
}

TEST_CASE("nested distance: recursion agrees with the path-pair LP") {
    std::mt19937_64 gen(2718);
    for (int rep = 0; rep < 15; ++rep) {
        auto a = oracles::random_tree(gen, 3, 3);
        auto b = oracles::random_tree(gen, 3, 3);
        for (double p : {1.0, 2.0, kInf}) {
            DistanceSpec s{p, Norm::l1};
            double rec = nested_distance(a, b, s);
            auto lp = adapted_transport_lp(a, b, s, PlanClass::bicausal);
            CHECK(std::abs(rec - lp.value) < 1e-7);
            CHECK(is_bicausal(lp.coupling, a, b, 1e-7));
            CHECK(std::abs(nested_distance(b, a, s) - rec) < 1e-9);
            auto cz = adapted_transport_lp(a, b, s, PlanClass::causal);
            CHECK(is_causal(cz.coupling, a, b, Direction::a_to_b, 1e-7));
            double w = wasserstein_distance(a, b, s);
            CHECK(w <= cz.value + 1e-7);
            CHECK(cz.value <= rec + 1e-7);
        }
    }
}

TEST_CASE("nested distance: multivariate outcomes and other norms") {
    std::mt19937_64 gen(99);
    for (int rep = 0; rep < 5; ++rep) {
        auto a = oracles::random_tree(gen, 3, 2, 2);
        auto b = oracles::random_tree(gen, 3, 2, 2);
        for (Norm n : {Norm::l2, Norm::linf}) {
            DistanceSpec s{1.0, n};
            CHECK(std::abs(nested_distance(a, b, s) - nested_distance_oracle(a, b, s)) < 1e-7);
        }
    }
}

TEST_CASE("two-stage trees: nested distance equals Wasserstein") {
    std::mt19937_64 gen(8);
    for (int rep = 0; rep < 10; ++rep) {
        auto a = oracles::random_tree(gen, 2, 4);
        auto b = oracles::random_tree(gen, 2, 4);
        for (double p : {1.0, 3.0, kInf}) {
            DistanceSpec s{p, Norm::l1};
            CHECK(std::abs(nested_distance(a, b, s) - wasserstein_distance(a, b, s)) < 1e-7);
        }
    }
}

TEST_CASE("stage count mismatch is rejected") {
    std::mt19937_64 gen(1);
    auto a = oracles::random_tree(gen, 2, 2);
    auto b = oracles::random_tree(gen, 3, 2);
    CHECK_THROWS_AS(nested_distance(a, b, {}), DomainError);
}
