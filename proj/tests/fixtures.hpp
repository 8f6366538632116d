#pragma once
// Small trees shared by the unit tests and the acceptance binary.

#include "ndro/scenario_tree.hpp"

namespace fixtures {

using ndro::ScenarioTree;
using ndro::SamplePath;
using ndro::VectorXd;

inline VectorXd v1(double a) { return VectorXd::Constant(1, a); }

/// Nominal fan: 1/2 (0,0,1) + 1/2 (0,0,-1).
inline ScenarioTree twopath_nominal() {
    std::vector<ndro::TreeNode> nodes{
        {0, 1, -1, 1.0, v1(0), {}}, {1, 2, 0, 1.0, v1(0), {}},
        {2, 3, 1, 0.5, v1(1), {}},  {3, 3, 1, 0.5, v1(-1), {}}};
    return ScenarioTree::create(3, {1, 1, 1}, nodes);
}

/// Perturbed fan: 1/2 (0,-eps,1+eps) + 1/2 (0,eps,-1-eps).
inline ScenarioTree twopath_perturbed(double eps) {
    return ndro::build_fan(v1(0), {SamplePath{{v1(-eps), v1(1 + eps)}}, SamplePath{{v1(eps), v1(-1 - eps)}}},
                           {0.5, 0.5});
}

/// Tree with paths (a,b,d) 1/6, (a,b,e) 1/6, (a,c,f) 2/3; labels are arbitrary distinct numbers.
inline ScenarioTree coupling_tree_a() {
    std::vector<ndro::TreeNode> nodes{
        {0, 1, -1, 1.0, v1(0.0), {}},     {1, 2, 0, 1.0 / 3, v1(1.0), {}},
        {2, 2, 0, 2.0 / 3, v1(2.0), {}},  {3, 3, 1, 0.5, v1(3.0), {}},
        {4, 3, 1, 0.5, v1(4.0), {}},      {5, 3, 2, 1.0, v1(5.0), {}}};
    return ScenarioTree::create(3, {1, 1, 1}, nodes);
}

/// Tree with paths (a,b,d) 1/2, (a,c,e) 1/4, (a,c,f) 1/4.
inline ScenarioTree coupling_tree_b() {
    std::vector<ndro::TreeNode> nodes{
        {0, 1, -1, 1.0, v1(0.2), {}},   {1, 2, 0, 0.5, v1(1.5), {}},
        {2, 2, 0, 0.5, v1(2.5), {}},    {3, 3, 1, 1.0, v1(3.5), {}},
        {4, 3, 2, 0.5, v1(4.5), {}},    {5, 3, 2, 0.5, v1(5.5), {}}};
    return ScenarioTree::create(3, {1, 1, 1}, nodes);
}

inline ndro::MatrixXd coupling_plain() {
    ndro::MatrixXd g(3, 3);
    g << 1.0 / 6, 0, 0, 0, 1.0 / 6, 0, 1.0 / 3, 1.0 / 12, 1.0 / 4;
    return g;
}

inline ndro::MatrixXd coupling_causal() {
    ndro::MatrixXd g(3, 3);
    g << 1.0 / 24, 1.0 / 8, 0, 1.0 / 24, 1.0 / 8, 0, 5.0 / 12, 0, 1.0 / 4;
    return g;
}

inline ndro::MatrixXd coupling_bicausal() {
    ndro::MatrixXd g(3, 3);
    g << 1.0 / 24, 1.0 / 16, 1.0 / 16, 1.0 / 24, 1.0 / 16, 1.0 / 16, 5.0 / 12, 1.0 / 8, 1.0 / 8;
    return g;
}

}  // namespace fixtures

// ---------------------------------------------------------------------------
// Problems

#include "ndro/model.hpp"

#include <random>

namespace fixtures {

using ndro::MatrixXd;
using ndro::MultistageProblem;
using ndro::StageTemplate;

inline MatrixXd m1(double a) { return MatrixXd::Constant(1, 1, a); }

inline MatrixXd rowv(std::initializer_list<double> v) {
    MatrixXd r(1, static_cast<int>(v.size()));
    int i = 0;
    for (double a : v) r(0, i++) = a;
    return r;
}

inline VectorXd vec(std::initializer_list<double> v) {
    VectorXd r(static_cast<int>(v.size()));
    int i = 0;
    for (double a : v) r(i++) = a;
    return r;
}

/// Stage 1: x1 = 0. Stage 2: y+ - y- = xi2. Stage 3: u+ - u- = y - xi3, cost u+ + u-.
/// With the policy y = xi2, u = xi2 - xi3 the total cost is |xi2 - xi3|.
inline std::vector<StageTemplate> abs_difference_stages() {
    StageTemplate s1{m1(1), MatrixXd(1, 0), vec({0}), vec({0}), {}, ndro::Binding::none, {}};
    StageTemplate s2{rowv({1, -1}), m1(0), vec({0}), vec({0, 0}), {}, ndro::Binding::identity, {}};
    StageTemplate s3{rowv({1, -1}), rowv({-1, 1}), vec({0}), vec({1, 1}), {}, ndro::Binding::matrix, m1(-1)};
    return {s1, s2, s3};
}

inline MultistageProblem twopath_problem() {
    return {ndro::Location::rhs, abs_difference_stages(), twopath_nominal()};
}

/// coin-flip problem: xi2 = 0, xi3 = +-1 with probability 1/2, stagewise independent.
inline MultistageProblem coinflip_problem() {
    ndro::StagewiseMarginals m;
    m.stage1 = v1(0);
    m.stages.push_back({{v1(0)}, {1.0}});
    m.stages.push_back({{v1(1), v1(-1)}, {0.5, 0.5}});
    return {ndro::Location::rhs, abs_difference_stages(), m};
}

/// Policy x2 = (xi2+, xi2-), x3 = ((xi2 - xi3)+, (xi2 - xi3)-) on the observed outcomes.
inline VectorXd abs_difference_policy(int stage, const std::vector<VectorXd>& hist) {
    auto split = [](double w) { return vec({std::max(w, 0.0), std::max(-w, 0.0)}); };
    if (stage == 1) return v1(0);
    if (stage == 2) return split(hist[1](0));
    return split(hist[1](0) - hist[2](0));
}

/// Multistage newsvendor with right-hand side outcome b_t = (d, (ch - c) d, -(c + cb) d).
/// Decisions per stage t >= 2: (x, z, s1, s2, s3) with z free; stage 1: x1.
inline MultistageProblem newsvendor(int stages, const std::vector<double>& demands,
                                    const std::vector<double>& probs, double c = 1.0, double cb = 3.0,
                                    double ch = 0.5) {
    std::vector<StageTemplate> st;
    st.push_back({MatrixXd(0, 1), MatrixXd(0, 0), VectorXd(0), v1(c), {}, ndro::Binding::none, {}});
    MatrixXd A(3, 5);
    A << -1, 0, 1, 0, 0, c, -1, 0, 1, 0, c, -1, 0, 0, 1;
    VectorXd col = vec({1, ch - c, -(c + cb)});
    for (int t = 2; t <= stages; ++t) {
        const int prev = t == 2 ? 1 : 5;
        MatrixXd B = MatrixXd::Zero(3, prev);
        B.col(0) = col;
        st.push_back({A, B, VectorXd::Zero(3), vec({0, 1, 0, 0, 0}), {false, true, false, false, false},
                      ndro::Binding::identity, {}});
    }
    ndro::StagewiseMarginals m;
    m.stage1 = VectorXd::Zero(0);
    for (int t = 2; t <= stages; ++t) {
        ndro::DiscreteDistribution d;
        for (double dem : demands) d.atoms.push_back(dem * col);
        d.probs = probs;
        m.stages.push_back(d);
    }
    return {ndro::Location::rhs, st, m};
}

/// Random stage data: x_t = (u+, u-, w) with A = [I, -I, R], positive costs, so every
/// right-hand side is feasible and the dual sets are bounded.
/// Outcomes: rhs -> b_t, objective -> c_t (positive), technology -> vec(B_t).
inline MultistageProblem random_problem(std::mt19937_64& gen, ndro::Location loc, int stages, int rows,
                                        int support, bool stagewise = true) {
    std::uniform_real_distribution<double> U(0.2, 1.5);
    std::normal_distribution<double> Z(0.0, 1.0);
    const int n = 2 * rows + 1;
    std::vector<StageTemplate> st;
    std::vector<int> dims;
    for (int t = 1; t <= stages; ++t) {
        StageTemplate s;
        s.A = MatrixXd::Zero(rows, n);
        s.A.leftCols(rows) = MatrixXd::Identity(rows, rows);
        s.A.middleCols(rows, rows) = -MatrixXd::Identity(rows, rows);
        for (int i = 0; i < rows; ++i) s.A(i, n - 1) = Z(gen);
        s.B = t == 1 ? MatrixXd(rows, 0) : MatrixXd(rows, n);
        for (int k = 0; k < s.B.size(); ++k) s.B.data()[k] = loc == ndro::Location::technology ? 0.0 : 0.5 * Z(gen);
        s.b = VectorXd::Zero(rows);
        s.c = VectorXd::Zero(n);
        if (t == 1 || loc != ndro::Location::rhs)
            for (int i = 0; i < rows; ++i) s.b(i) = Z(gen);
        if (t == 1 || loc != ndro::Location::objective)
            for (int j = 0; j < n; ++j) s.c(j) = U(gen);
        s.binding = t == 1 ? ndro::Binding::none : ndro::Binding::identity;
        st.push_back(s);
        dims.push_back(t == 1 ? 1 : (loc == ndro::Location::rhs ? rows : loc == ndro::Location::objective ? n : rows * n));
    }
    auto atom = [&](int d) {
        VectorXd a(d);
        for (int k = 0; k < d; ++k)
            a(k) = loc == ndro::Location::objective ? U(gen) : loc == ndro::Location::technology ? 0.5 * Z(gen) : Z(gen);
        return a;
    };
    auto probs = [&](int k) {
        std::uniform_real_distribution<double> P(0.2, 1.0);
        std::vector<double> w(k);
        double s = 0;
        for (auto& x : w) s += (x = P(gen));
        double acc = 0;
        for (int i = 0; i + 1 < k; ++i) acc += (w[i] /= s);
        w[k - 1] = 1.0 - acc;
        return w;
    };
    if (stagewise) {
        ndro::StagewiseMarginals m;
        m.stage1 = v1(0);
        for (int t = 2; t <= stages; ++t) {
            ndro::DiscreteDistribution d;
            for (int k = 0; k < support; ++k) d.atoms.push_back(atom(dims[t - 1]));
            d.probs = probs(support);
            m.stages.push_back(d);
        }
        return {loc, st, m};
    }
    std::vector<ndro::TreeNode> nodes{{0, 1, -1, 1.0, v1(0), {}}};
    std::vector<int> frontier{0};
    for (int t = 2; t <= stages; ++t) {
        std::vector<int> nf;
        for (int p : frontier) {
            auto w = probs(support);
            for (int k = 0; k < support; ++k) {
                int id = static_cast<int>(nodes.size());
                nodes.push_back({id, t, p, w[k], atom(dims[t - 1]), {}});
                nf.push_back(id);
            }
        }
        frontier = nf;
    }
    return {loc, st, ScenarioTree::create(stages, dims, nodes, 1e-12)};
}

}  // namespace fixtures

// ---------------------------------------------------------------------------
// portfolio instances

#include "ndro/portfolio.hpp"

namespace fixtures {

/// T stages, `per_stage` sampled return vectors per stage, EC.6.2 moments.
inline ndro::MultistageProblem tiny_portfolio(int T = 3, int per_stage = 2, std::uint64_t seed = 42,
                                              double theta = 0.1) {
    ndro::PortfolioSpec spec;
    spec.T = T;
    spec.theta = theta;
    return ndro::build_portfolio_program(spec, ndro::sample_marginals(ndro::ReturnModel::builtin(), T, per_stage, seed));
}

/// Random holdings with total wealth in [lo, hi].
inline ndro::VectorXd random_holdings(std::mt19937_64& gen, int n, double lo = 8000, double hi = 12000) {
    std::exponential_distribution<double> E(1.0);
    std::uniform_real_distribution<double> U(lo, hi);
    ndro::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = E(gen);
    return x * (U(gen) / x.sum());
}

}  // namespace fixtures
