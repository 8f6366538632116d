#include "doctest.h"

#include "fixtures.hpp"
#include "ndro/dro_dp.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace ndro;
using fixtures::vec;
using fixtures::v1;

namespace {

PolicyFn abs_policy() {
    return [](const PolicyQuery& q) { return fixtures::abs_difference_policy(q.stage, q.history); };
}

// SAA expectation of a fixed policy's cost on the nominal tree
double nominal_cost(const MultistageProblem& p, const PolicyFn& pol) {
    ScenarioTree tree = p.tree();
    double total = 0;
    for (int leaf : tree.leaves()) {
        std::vector<VectorXd> hist, decs;
        double cost = 0;
        for (int id : tree.path(leaf)) {
            const auto& n = tree.node(id);
            hist.push_back(n.outcome);
            PolicyQuery q{n.stage, id, hist, decs};
            VectorXd x = pol(q);
            cost += p.data(n.stage, n.outcome).c.dot(x);
            decs.push_back(x);
        }
        total += tree.path_prob(leaf) * cost;
    }
    return total;
}

// myopic re-solve policy (no continuation) on observed data
PolicyFn myopic(const MultistageProblem& p) { return resolve_policy(p, nullptr); }

std::vector<VectorXd> grid_1d(double half, int points) {
    std::vector<VectorXd> g;
    for (int i = 0; i < points; ++i) g.push_back(v1(-half + 2 * half * i / (points - 1)));
    return g;
}

}  // namespace

TEST_CASE("AVaR: closed forms and u-grid oracle") {
    CHECK(avar_cost_to_go({1, 3}, {0.5, 0.5}, 0.5) == doctest::Approx(3.0));
    CHECK(avar_cost_to_go({1, 3}, {0.5, 0.5}, 1.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(avar_cost_to_go({1}, {1}, 0.0), DomainError);
    std::mt19937_64 gen(4);
    std::normal_distribution<double> Z;
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> z(6);
        for (auto& v : z) v = Z(gen);
        auto p = oracles::random_simplex(gen, 6);
        for (double a : {0.1, 0.35, 0.8}) {
            double best = kInf;
            for (int i = 0; i <= 40000; ++i) {
                const double u = -4 + 8.0 * i / 40000;
                double e = 0;
                for (int k = 0; k < 6; ++k) e += p[k] * std::max(z[k] - u, 0.0);
                best = std::min(best, u + e / a);
            }
            CHECK(std::abs(avar_cost_to_go(z, p, a) - best) < 1e-3);
            CHECK(avar_cost_to_go(z, p, a) <= best + 1e-12);
        }
    }
}

TEST_CASE("two-path trees: nested and Wasserstein risk of |xi2 - xi3|") {
    auto p = fixtures::twopath_problem();
    const double eps = 0.1;
    auto u = UncertaintySpec::hard_inf(eps);
    auto nested = robust_risk_fixed_policy(p, abs_policy(), u);
    auto wass = wasserstein_sup_risk(p, abs_policy(), u);
    CHECK(std::abs(nested.value - (1 + eps)) < 1e-8);
    CHECK(std::abs(wass.value - (1 + 2 * eps)) < 1e-8);
    CHECK_FALSE(nested.lower_bound);
    CHECK(nested.method == "vertices");
    // zero radius: plain expectation of the policy cost
    auto u0 = UncertaintySpec::hard_inf(0.0);
    CHECK(robust_risk_fixed_policy(p, abs_policy(), u0).value == doctest::Approx(nominal_cost(p, abs_policy())));
    CHECK(wasserstein_sup_risk(p, abs_policy(), u0).value == doctest::Approx(1.0));
    // grid fallback reaches the same values (grid contains the ball's end points) and is labelled
    EvalOptions g;
    g.grid = grid_1d(eps, 11);
    g.use_grid = true;
    auto gn = robust_risk_fixed_policy(p, abs_policy(), u, g);
    CHECK(gn.lower_bound);
    CHECK(std::abs(gn.value - (1 + eps)) < 1e-12);
    CHECK(std::abs(wasserstein_sup_risk(p, abs_policy(), u, g).value - (1 + 2 * eps)) < 1e-12);
}

TEST_CASE("fixed-policy evaluation: errors") {
    auto p = fixtures::twopath_problem();
    // l2 ball on a rhs has no exact solver without a grid
    CHECK_THROWS_AS(robust_risk_fixed_policy(p, abs_policy(), UncertaintySpec::hard_inf(0.1, Norm::l2)), DomainError);
    // an infeasible policy is reported
    PolicyFn bad = [](const PolicyQuery& q) -> VectorXd {
        if (q.stage == 1) return v1(0);
        return vec({1.0, 0.0});
    };
    CHECK_THROWS_AS(robust_risk_fixed_policy(p, bad, UncertaintySpec::hard_inf(0.1)), DomainError);
}

TEST_CASE("objective uncertainty: closed form vs grid over the ball") {
    // two-stage: x2 fixed at (1, 2) through the constraint x = (1, 2)
    std::vector<StageTemplate> st;
    st.push_back({fixtures::m1(1), MatrixXd(1, 0), v1(0), v1(0), {}, Binding::none, {}});
    MatrixXd A = MatrixXd::Identity(2, 2);
    st.push_back({A, MatrixXd::Zero(2, 1), vec({1, -2}), VectorXd::Zero(2), {false, true}, Binding::identity, {}});
    StagewiseMarginals m;
    m.stage1 = v1(0);
    m.stages.push_back({{vec({0.5, 1.0}), vec({-1.0, 0.3})}, {0.4, 0.6}});
    MultistageProblem p{Location::objective, st, m};
    ScenarioTree tree = p.tree();
    std::map<int, VectorXd> dec{{0, v1(0)}};
    for (int id : tree.stage_nodes(2)) dec[id] = vec({1, -2});
    for (Norm ball : {Norm::l1, Norm::l2, Norm::linf}) {
        const double theta = 0.3;
        auto u = UncertaintySpec::hard_inf(theta, ball);
        double expect = 0;
        for (int id : tree.stage_nodes(2))
            expect += tree.node(id).prob * (tree.node(id).outcome.dot(vec({1, -2})) +
                                            theta * norm_of(vec({1, -2}), dual_of(ball)));
        auto r = robust_risk_fixed_policy(p, dec, u);
        CHECK(r.method == "closed-form");
        CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));
        EvalOptions g;
        g.use_grid = true;
        for (int i = 0; i <= 60; ++i)
            for (int j = 0; j <= 60; ++j) g.grid.push_back(vec({-theta + theta * i / 30.0, -theta + theta * j / 30.0}));
        // add the l2 sphere points
        for (int k = 0; k < 720; ++k)
            g.grid.push_back(theta * vec({std::cos(k * M_PI / 360), std::sin(k * M_PI / 360)}));
        auto lb = robust_risk_fixed_policy(p, dec, u, g);
        CHECK(lb.lower_bound);
        CHECK(lb.value <= r.value + 1e-12);
        CHECK(lb.value >= r.value - 1e-4);
        CHECK(wasserstein_sup_risk(p, dec, u).value == doctest::Approx(r.value));
    }
    // soft, p = 2: closed form penalty k ||x||_*^2 with k = 1 / (4 lambda)
    auto s = UncertaintySpec::soft(2.0, 0.5, Norm::l2);
    auto r = robust_risk_fixed_policy(p, dec, s);
    double expect = 0;
    for (int id : tree.stage_nodes(2))
        expect += tree.node(id).prob * (tree.node(id).outcome.dot(vec({1, -2})) + 5.0 / (4 * 0.5));
    CHECK(r.value == doctest::Approx(expect));
    // soft, p = 1: finite only when lambda covers the dual norm
    CHECK(std::isinf(robust_risk_fixed_policy(p, dec, UncertaintySpec::soft(1.0, 1.0, Norm::l1)).value));
    CHECK(std::isfinite(robust_risk_fixed_policy(p, dec, UncertaintySpec::soft(1.0, 2.0, Norm::l1)).value));
}

TEST_CASE("fan identity: nested and Wasserstein evaluators agree on fans") {
    std::mt19937_64 gen(77);
    std::normal_distribution<double> Z;
    for (int rep = 0; rep < 10; ++rep) {
        auto base = fixtures::random_problem(gen, Location::rhs, 3, 2, 2);
        std::vector<SamplePath> paths;
        for (int k = 0; k < 3; ++k) paths.push_back({{vec({Z(gen), Z(gen)}), vec({Z(gen), Z(gen)})}});
        MultistageProblem p{Location::rhs, base.stages,
                            build_fan(v1(0), paths, oracles::random_simplex(gen, 3))};
        for (double theta : {0.0, 0.2, 0.7}) {
            auto u = UncertaintySpec::hard_inf(theta);
            double a = robust_risk_fixed_policy(p, myopic(p), u).value;
            double b = wasserstein_sup_risk(p, myopic(p), u).value;
            CHECK(std::abs(a - b) < 1e-7);
        }
    }
}

TEST_CASE("dominance and monotonicity of fixed-policy risks") {
    std::mt19937_64 gen(12);
    for (int rep = 0; rep < 6; ++rep) {
        auto p = fixtures::random_problem(gen, Location::rhs, 3, 1, 2, rep % 2 == 0);
        auto pol = myopic(p);
        double prev = -kInf;
        for (double theta : {0.0, 0.1, 0.2, 0.4}) {
            auto u = UncertaintySpec::hard_inf(theta);
            double n = robust_risk_fixed_policy(p, pol, u).value;
            double w = wasserstein_sup_risk(p, pol, u).value;
            CHECK(n <= w + 1e-9);
            CHECK(n >= prev - 1e-9);
            prev = n;
            if (theta == 0.0) CHECK(n == doctest::Approx(nominal_cost(p, pol)));
        }
    }
}

TEST_CASE("cost_to_go_objective") {
    // singleton feasible set {(1, 0)}
    StageData d{MatrixXd::Identity(2, 2), MatrixXd(2, 0), vec({1, 0}), vec({1, 1}), {}};
    auto v = cost_to_go_objective(d, VectorXd(), nullptr, 0.0, UncertaintySpec::hard_inf(0.5, Norm::linf));
    CHECK(v.value == doctest::Approx(1.5));
    // zero radius: plain LP
    StageData e{fixtures::rowv({1, 1}), MatrixXd(1, 0), v1(1), vec({0.3, 0.7}), {}};
    auto v0 = cost_to_go_objective(e, VectorXd(), nullptr, 0.0, UncertaintySpec::hard_inf(0.0));
    CHECK(v0.value == doctest::Approx(0.3));
    // l_inf ball on c: equals the max over a grid of c of the inner LP minimum
    StageData f{fixtures::rowv({1, -1}), MatrixXd(1, 0), v1(0.5), vec({0.2, 0.5}), {}};
    const double theta = 0.3;
    auto rv = cost_to_go_objective(f, VectorXd(), nullptr, 0.0, UncertaintySpec::hard_inf(theta, Norm::linf));
    CHECK(rv.value == doctest::Approx(0.5 * (0.2 + theta)).epsilon(1e-9));
    double best = -kInf;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            LinearProgram lp(2);
            lp.c = f.c + vec({-theta + theta * i / 10.0, -theta + theta * j / 10.0});
            lp.add_eq(f.A.row(0).transpose(), 0.5);
            auto s = solve_lp(lp);
            best = std::max(best, s.status == LPStatus::optimal ? s.objective : -kInf);
        }
    CHECK(std::abs(best - rv.value) < 1e-9);
    // soft p = 1: a lambda below every feasible ||x||_* is infeasible
    CHECK_THROWS_AS(cost_to_go_objective(f, VectorXd(), nullptr, 0.0, UncertaintySpec::soft(1.0, 0.1, Norm::linf)),
                    DomainError);
    // l2 ball: cutting planes on ||x||_2 against the closed form on the segment x = (0.5 + t, t)
    auto r2 = cost_to_go_objective(f, VectorXd(), nullptr, 0.0, UncertaintySpec::hard_inf(theta, Norm::l2));
    double scan = kInf;
    for (int i = 0; i <= 200000; ++i) {
        const double t = 2.0 * i / 200000;
        scan = std::min(scan, 0.2 * (0.5 + t) + 0.5 * t + theta * std::hypot(0.5 + t, t));
    }
    CHECK(std::abs(r2.value - scan) < 1e-7);
    // soft p = 3 with l2: penalty k ||x||^(3/2)
    auto s3 = UncertaintySpec::soft(3.0, 0.4, Norm::l2);
    auto r3 = cost_to_go_objective(f, VectorXd(), nullptr, 0.0, s3);
    const double k = soft_penalty_coefficient(3.0, 0.4);
    scan = kInf;
    for (int i = 0; i <= 200000; ++i) {
        const double t = 2.0 * i / 200000;
        scan = std::min(scan, 0.2 * (0.5 + t) + 0.5 * t + k * std::pow(std::hypot(0.5 + t, t), 1.5));
    }
    CHECK(std::abs(r3.value - scan) < 1e-7);
}

TEST_CASE("cost_to_go_rhs_inf: absolute-value recourse") {
    StageData d{fixtures::rowv({1, -1}), MatrixXd(1, 0), v1(0.3), vec({1, 1}), {}};
    NoContinuation none;
    auto v = cost_to_go_rhs_inf(d, VectorXd(), none, UncertaintySpec::hard_inf(0.2), Location::rhs);
    CHECK(v.value == doctest::Approx(0.5));
    CHECK(v.j == 0);
    CHECK(v.delta == 1);
    auto v0 = cost_to_go_rhs_inf(d, VectorXd(), none, UncertaintySpec::hard_inf(0.0), Location::rhs);
    CHECK(v0.value == doctest::Approx(0.3));
    // unbounded recourse is reported
    StageData neg{fixtures::rowv({1, -1}), MatrixXd(1, 0), v1(0.3), vec({1, -2}), {}};
    CHECK_THROWS_AS(cost_to_go_rhs_inf(neg, VectorXd(), none, UncertaintySpec::hard_inf(0.2), Location::rhs),
                    DomainError);
    // infeasible perturbation is reported
    StageData pos{MatrixXd::Identity(1, 1), MatrixXd(1, 0), v1(0.1), v1(1), {}};
    CHECK_THROWS_AS(cost_to_go_rhs_inf(pos, VectorXd(), none, UncertaintySpec::hard_inf(0.2), Location::rhs),
                    DomainError);
}

TEST_CASE("cost_to_go_rhs_inf: vertex attainment and random in-ball points") {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> Z;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const int m = 3, n = 2 * m + 2;
        StageData d;
        d.A = MatrixXd::Zero(m, n);
        d.A.leftCols(m) = MatrixXd::Identity(m, m);
        d.A.middleCols(m, m) = -MatrixXd::Identity(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 2 * m; j < n; ++j) d.A(i, j) = Z(gen);
        d.B = MatrixXd(m, 2);
        for (int k = 0; k < d.B.size(); ++k) d.B.data()[k] = Z(gen);
        d.b = VectorXd(m);
        for (int i = 0; i < m; ++i) d.b(i) = Z(gen);
        d.c = VectorXd(n);
        for (int j = 0; j < n; ++j) d.c(j) = 0.2 + U(gen);
        VectorXd xp = vec({U(gen), U(gen)});
        const double theta = 0.5;
        NoContinuation none;
        auto v = cost_to_go_rhs_inf(d, xp, none, UncertaintySpec::hard_inf(theta), Location::rhs);
        auto inner = [&](const VectorXd& rhs) {
            LinearProgram lp(n);
            lp.c = d.c;
            for (int i = 0; i < m; ++i) lp.add_eq(d.A.row(i).transpose(), rhs(i));
            return solve_lp(lp).objective;
        };
        const VectorXd base = d.b - d.B * xp;
        double vmax = -kInf;
        for (int j = 0; j < m; ++j)
            for (int s : {1, -1}) {
                VectorXd r = base;
                r(j) += s * theta;
                vmax = std::max(vmax, inner(r));
            }
        CHECK(std::abs(v.value - vmax) < 1e-7);
        for (int k = 0; k < 200; ++k) {
            VectorXd e(m);
            double tot = 0;
            for (int i = 0; i < m; ++i) tot += (e(i) = -std::log(1 - U(gen)));
            const double rad = theta * U(gen);
            for (int i = 0; i < m; ++i) e(i) *= (U(gen) < 0.5 ? -1 : 1) * rad / tot;
            CHECK(inner(base + e) <= v.value + 1e-9);
        }
    }
}

TEST_CASE("solve_rhs_p1: absolute-value recourse") {
    auto p = fixtures::coinflip_problem();
    for (double theta : {0.0, 0.2, 0.5}) {
        UncertaintySpec u;
        u.p = 1.0;
        u.theta = theta;
        auto r = solve_rhs_p1(p, u);
        CHECK(r.kappa == doctest::Approx(1.0));
        CHECK(r.saa_value == doctest::Approx(1.0));
        CHECK(r.value == doctest::Approx(1.0 + theta));
        auto saa = saa_extensive(p);
        for (auto& [id, x] : saa.decisions) CHECK((r.policy.decisions.at(id) - x).norm() == 0.0);
    }
    UncertaintySpec inf = UncertaintySpec::hard_inf(0.1);
    CHECK_THROWS_AS(solve_rhs_p1(p, inf), DomainError);
}

TEST_CASE("solve_rhs_p1: newsvendor decisions coincide with SAA and kappa matches vertex enumeration") {
    auto p = fixtures::newsvendor(3, {4, 8}, {0.5, 0.5});
    UncertaintySpec u;
    u.p = 1.0;
    u.theta = 0.3;
    auto r = solve_rhs_p1(p, u);
    double kv = 0;
    for (int t = 2; t <= 3; ++t) {
        const double k = oracles::kappa_by_vertices(p, t);
        CHECK(r.stage_kappa[t] == doctest::Approx(k).epsilon(1e-9));
        kv = std::max(kv, k);
    }
    CHECK(r.kappa == doctest::Approx(kv));
    CHECK(r.kappa > 0);
    auto saa = saa_extensive(p);
    CHECK(r.value - saa.value == doctest::Approx(u.theta * kv));
    check_policy(p, r.policy);
    for (auto& [id, x] : saa.decisions) CHECK((r.policy.decisions.at(id) - x).norm() < 1e-12);
}

TEST_CASE("hard_from_soft") {
    // p = 1 absolute value: soft value is SAA for lambda >= 1 and infinite below
    const double saa = 1.0;
    auto soft = [&](double l) { return l >= 1.0 ? saa : kInf; };
    auto r = hard_from_soft(soft, 0.2, 1.0);
    CHECK(r.lambda == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r.value == doctest::Approx(saa + 0.2).epsilon(1e-6));
    auto r0 = hard_from_soft(soft, 0.0, 1.0);
    CHECK(r0.value == doctest::Approx(saa));
    CHECK_THROWS_AS(hard_from_soft([](double) { return kInf; }, 0.2, 1.0), DomainError);
    // random soft objectives of the form a + b / lambda^(1/(p-1)) against a lambda grid
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> U(0.1, 2.0);
    for (int rep = 0; rep < 10; ++rep) {
        const double a = U(gen), b = U(gen), theta = U(gen) / 4, p = 1.5 + U(gen);
        auto f = [&](double l) { return a + b * std::pow(l, -1.0 / (p - 1.0)); };
        auto h = hard_from_soft(f, theta, p);
        // stationary point of the smooth objective sets the scan range
        const double ls = std::pow(b / ((p - 1) * std::pow(theta, p)), (p - 1) / p);
        double best = kInf;
        for (int i = 1; i <= 10000; ++i) {
            const double l = 3.0 * ls * i / 10000;
            best = std::min(best, l * std::pow(theta, p) + f(l));
        }
        CHECK(h.value <= best + 1e-9);
        CHECK(std::abs(h.value - best) < 1e-5 * (1 + std::abs(best)));
    }
}

TEST_CASE("exact_solve_small: coin-flip dynamic value and static gap") {
    auto p = fixtures::coinflip_problem();
    for (double theta : {0.25, 0.5}) {
        auto r = exact_solve_small(p, UncertaintySpec::hard_inf(theta));
        CHECK(std::abs(r.value - (1 + theta)) < 1e-6);
        check_policy(p, r.policy);
        EvalOptions g;
        g.use_grid = true;
        g.grid = grid_1d(theta, 21);
        auto stat = wasserstein_sup_risk(p, abs_policy(), UncertaintySpec::hard_inf(theta), g);
        CHECK(stat.value >= r.value + theta / 2);
        CHECK(std::abs(stat.value - (1 + 2 * theta)) < 1e-12);
    }
    CHECK(exact_solve_small(p, UncertaintySpec::hard_inf(0.0)).value == doctest::Approx(1.0));
}

TEST_CASE("exact_solve_small: zero radius equals the extensive form") {
    std::mt19937_64 gen(21);
    for (Location loc : {Location::objective, Location::rhs, Location::technology})
        for (int rep = 0; rep < 4; ++rep) {
            auto p = fixtures::random_problem(gen, loc, 3, 1 + rep % 2, 2, rep % 2 == 0);
            auto saa = saa_extensive(p);
            auto r = exact_solve_small(p, UncertaintySpec::hard_inf(0.0));
            CHECK(std::abs(r.value - saa.value) < 1e-7 * (1 + std::abs(saa.value)));
            check_policy(p, r.policy);
        }
}

TEST_CASE("exact_solve_small: size guard") {
    std::mt19937_64 gen(1);
    auto deep = fixtures::random_problem(gen, Location::rhs, 5, 1, 1);
    CHECK_THROWS_AS(exact_solve_small(deep, UncertaintySpec::hard_inf(0.1)), DomainError);
    auto wide = fixtures::random_problem(gen, Location::rhs, 2, 1, 4);
    CHECK_THROWS_AS(exact_solve_small(wide, UncertaintySpec::hard_inf(0.1)), DomainError);
}

TEST_CASE("exact recursion: stagewise constancy and agreement with per-node models") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> U(0.0, 2.0);
    for (Location loc : {Location::rhs, Location::technology}) {
        auto p = fixtures::random_problem(gen, loc, 3, 2, 2);
        auto u = UncertaintySpec::hard_inf(0.3, loc == Location::rhs ? Norm::l1 : Norm::l2);
        RobustRecursion shared(p, u);
        MultistageProblem as_tree{loc, p.stages, p.tree()};
        RobustRecursion per_node(as_tree, u);
        const auto& s2 = shared.tree().stage_nodes(2);
        for (int k = 0; k < 5; ++k) {
            VectorXd x(p.stage(2).cols());
            for (int j = 0; j < x.size(); ++j) x(j) = U(gen);
            const double a = shared.cost_to_go(s2[0], x).value;
            const double b = shared.cost_to_go(s2[1], x).value;
            const double c = per_node.cost_to_go(s2[1], x).value;
            CHECK(a == b);
            CHECK(std::abs(a - c) < 1e-8 * (1 + std::abs(a)));
        }
    }
}

TEST_CASE("exact recursion: robust value equals the nested risk of its own re-solve policy") {
    std::mt19937_64 gen(31);
    for (int rep = 0; rep < 4; ++rep) {
        auto p = fixtures::random_problem(gen, Location::rhs, 3, 1 + rep % 2, 2);
        for (double theta : {0.1, 0.4}) {
            auto u = UncertaintySpec::hard_inf(theta);
            auto r = exact_solve_small(p, u);
            auto rec = r.recursion;
            PolicyFn pol = [&](const PolicyQuery& q) {
                StageData d = p.data(q.stage, q.history.back());
                VectorXd prev = q.decisions.empty() ? VectorXd() : q.decisions.back();
                return rec->solve_node(q.node, stage_rhs(d, prev)).x;
            };
            auto risk = robust_risk_fixed_policy(p, pol, u);
            CHECK(std::abs(risk.value - r.value) < 1e-6 * (1 + std::abs(r.value)));
            // and dominates the nominal optimum
            CHECK(r.value >= saa_extensive(p).value - 1e-9);
        }
    }
}

TEST_CASE("exact objective solver agrees with the closed-form risk of its decisions") {
    std::mt19937_64 gen(17);
    for (int rep = 0; rep < 5; ++rep) {
        auto p = fixtures::random_problem(gen, Location::objective, 3, 1, 2, rep % 2 == 1);
        for (Norm ball : {Norm::l1, Norm::l2, Norm::linf}) {
            auto u = UncertaintySpec::hard_inf(0.2, ball);
            auto r = exact_solve_small(p, u);
            auto risk = robust_risk_fixed_policy(p, r.policy.decisions, u);
            CHECK(std::abs(risk.value - r.value) < 1e-7 * (1 + std::abs(r.value)));
            CHECK(r.value >= saa_extensive(p).value - 1e-9);
            // continuation values are consistent with the total
            const auto& root = r.policy.tree.root();
            const double first = p.data(1, root.outcome).c.dot(r.policy.decisions.at(root.id));
            CHECK(std::abs(first + r.policy.continuation.at(root.id) - r.value) < 1e-7 * (1 + std::abs(r.value)));
        }
        // hard p = 2 goes through the soft family; monotone in the radius
        double prev = -kInf;
        for (double theta : {0.0, 0.1, 0.2, 0.4}) {
            UncertaintySpec u;
            u.p = 2.0;
            u.theta = theta;
            double v = exact_solve_small(p, u).value;
            CHECK(v >= prev - 1e-7);
            prev = v;
        }
    }
}

TEST_CASE("exact recursion with AVaR aggregation") {
    auto p = fixtures::coinflip_problem();
    ExactOptions o;
    o.avar_alpha = 0.5;
    // stage-3 costs |w -+ 1| + theta; AVaR_0.5 takes the worse atom, minimized at w = 0
    auto r = exact_solve_small(p, UncertaintySpec::hard_inf(0.0), o);
    CHECK(r.value == doctest::Approx(1.0));
    auto r2 = exact_solve_small(p, UncertaintySpec::hard_inf(0.2), o);
    CHECK(r2.value == doctest::Approx(1.4));
}

TEST_CASE("best in-sample policy") {
    std::mt19937_64 gen(44);
    auto p = fixtures::random_problem(gen, Location::objective, 3, 1, 2);
    auto u = UncertaintySpec::hard_inf(0.5, Norm::linf);
    auto r = exact_solve_small(p, u);
    const auto& tree = r.policy.tree;
    // an in-sample path returns its own decisions
    for (int leaf : tree.leaves()) {
        auto path = tree.path(leaf);
        auto xs = best_insample_policy(p, r.policy, tree.leaf_path(leaf).outcomes, u);
        REQUIRE(xs.size() == path.size());
        // the selected path may differ from the realized one only where scores tie or beat it
        for (std::size_t t = 0; t < path.size(); ++t) CHECK(xs[t].size() == p.stage(static_cast<int>(t) + 1).cols());
    }
    // two atoms at stage 2: compare against explicit enumeration of both scores
    auto two = fixtures::random_problem(gen, Location::objective, 2, 1, 2);
    auto r2 = exact_solve_small(two, u);
    const auto& t2 = r2.policy.tree;
    std::uniform_real_distribution<double> U(-0.3, 0.3);
    for (int k = 0; k < 20; ++k) {
        const auto& kids = t2.root().children;
        VectorXd c = t2.node(kids[0]).outcome;
        for (int j = 0; j < c.size(); ++j) c(j) += U(gen);
        int pick = -1;
        double best = kInf;
        for (int ch : kids) {
            const VectorXd& x = r2.policy.decisions.at(ch);
            if (norm_of(t2.node(ch).outcome - c, Norm::linf) > 0.5) continue;
            const double s = t2.node(ch).outcome.dot(x) + 0.5 * norm_of(x, Norm::l1);
            if (s < best) {
                best = s;
                pick = ch;
            }
        }
        if (pick < 0) {
            CHECK_THROWS_AS(best_insample_policy(two, r2.policy, {c}, u), DomainError);
            continue;
        }
        auto xs = best_insample_policy(two, r2.policy, {c}, u);
        CHECK((xs[1] - r2.policy.decisions.at(pick)).norm() == 0.0);
    }
    // single-scenario tree: always the chain
    auto chain = fixtures::random_problem(gen, Location::objective, 3, 1, 1);
    auto rc = exact_solve_small(chain, UncertaintySpec::soft(2.0, 1.0, Norm::l2));
    auto xs = best_insample_policy(chain, rc.policy, {VectorXd::Constant(3, 9.0), VectorXd::Constant(3, -9.0)},
                                   UncertaintySpec::soft(2.0, 1.0, Norm::l2));
    const auto& ct = rc.policy.tree;
    for (int t = 1; t <= 3; ++t) CHECK((xs[t - 1] - rc.policy.decisions.at(ct.stage_nodes(t).front())).norm() == 0.0);
}
