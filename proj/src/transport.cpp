#include "ndro/transport.hpp"

#include "ndro/lp.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace ndro {

namespace {

bool finite_p(double p) { return std::isfinite(p); }

void check_distribution(const std::vector<double>& w, const char* what) {
    double s = 0.0;
    for (double x : w) {
        if (!(x >= 0.0)) throw DomainError(std::string(what) + ": negative mass");
        s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DomainError(std::string(what) + ": masses do not sum to 1");
}

// Transportation LP restricted to allowed cells. Returns nullopt when infeasible.
std::optional<LPSolution> transport_lp(const std::vector<double>& mu, const std::vector<double>& nu,
                                       const MatrixXd& weight, const std::vector<char>& allowed,
                                       std::vector<int>& cols) {
    const int n = static_cast<int>(mu.size()), m = static_cast<int>(nu.size());
    cols.clear();
    for (int k = 0; k < n * m; ++k)
        if (allowed[k]) cols.push_back(k);
    LinearProgram lp(static_cast<int>(cols.size()));
    for (std::size_t v = 0; v < cols.size(); ++v) lp.c(v) = weight(cols[v] / m, cols[v] % m);
    lp.A_eq = MatrixXd::Zero(n + m, cols.size());
    lp.b_eq = VectorXd(n + m);
    for (std::size_t v = 0; v < cols.size(); ++v) {
        lp.A_eq(cols[v] / m, v) = 1.0;
        lp.A_eq(n + cols[v] % m, v) = 1.0;
    }
    for (int i = 0; i < n; ++i) lp.b_eq(i) = mu[i];
    for (int j = 0; j < m; ++j) lp.b_eq(n + j) = nu[j];
    auto sol = solve_lp(lp);
    if (sol.status != LPStatus::optimal) return std::nullopt;
    return sol;
}

MatrixXd unpack(const VectorXd& x, const std::vector<int>& cols, int n, int m) {
    MatrixXd g = MatrixXd::Zero(n, m);
    for (std::size_t v = 0; v < cols.size(); ++v) g(cols[v] / m, cols[v] % m) = std::max(0.0, x(v));
    return g;
}

std::vector<double> distinct_sorted(const MatrixXd& c) {
    std::vector<double> vals(c.data(), c.data() + c.size());
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    return vals;
}

// anc[t-1][leaf] = ancestor node id at stage t
std::vector<std::vector<int>> ancestor_table(const ScenarioTree& tree) {
    const auto& leaves = tree.leaves();
    std::vector<std::vector<int>> anc(tree.stages(), std::vector<int>(leaves.size()));
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        auto p = tree.path(leaves[i]);
        for (int t = 0; t < tree.stages(); ++t) anc[t][i] = p[t];
    }
    return anc;
}

void check_stage_match(const ScenarioTree& a, const ScenarioTree& b) {
    if (a.stages() != b.stages()) throw DomainError("trees have different stage counts");
    for (int t = 1; t <= a.stages(); ++t)
        if (a.dim(t) != b.dim(t)) throw DomainError("trees have different outcome dimensions");
}

// Append causality rows for the direction whose next coordinate is conditioned (tree `x`).
// Variables are leaf pairs (i of A, j of B) listed in cols as i * nB + j.
void add_causality_rows(LinearProgram& lp, const std::vector<int>& cols, int nB, const ScenarioTree& x,
                        const std::vector<std::vector<int>>& ancX, const ScenarioTree& y,
                        const std::vector<std::vector<int>>& ancY, bool x_is_a) {
    const int T = x.stages();
    VectorXd row(static_cast<Eigen::Index>(cols.size()));
    for (int t = 1; t < T; ++t) {
        for (int node_x : x.stage_nodes(t)) {
            const auto& kids = x.node(node_x).children;
            if (kids.size() < 2) continue;  // Dirac conditional: row is identically zero
            for (int child : kids) {
                const double pr = x.node(child).prob;
                for (int node_y : y.stage_nodes(t)) {
                    row.setZero();
                    bool any = false;
                    for (std::size_t v = 0; v < cols.size(); ++v) {
                        int i = cols[v] / nB, j = cols[v] % nB;
                        int ix = x_is_a ? i : j, iy = x_is_a ? j : i;
                        if (ancY[t - 1][iy] != node_y || ancX[t - 1][ix] != node_x) continue;
                        double coef = -pr + (ancX[t][ix] == child ? 1.0 : 0.0);
                        row(v) = coef;
                        any = true;
                    }
                    if (any) lp.add_eq(row, 0.0);
                }
            }
        }
    }
}

std::optional<TransportResult> plan_lp(const ScenarioTree& a, const ScenarioTree& b, const MatrixXd& weight,
                                       const std::vector<char>& allowed, PlanClass cls) {
    const auto pa = leaf_probs(a), pb = leaf_probs(b);
    const int nA = static_cast<int>(pa.size()), nB = static_cast<int>(pb.size());
    std::vector<int> cols;
    for (int k = 0; k < nA * nB; ++k)
        if (allowed[k]) cols.push_back(k);
    LinearProgram lp(static_cast<int>(cols.size()));
    for (std::size_t v = 0; v < cols.size(); ++v) lp.c(v) = weight(cols[v] / nB, cols[v] % nB);
    lp.A_eq = MatrixXd::Zero(nA + nB, cols.size());
    lp.b_eq = VectorXd(nA + nB);
    for (std::size_t v = 0; v < cols.size(); ++v) {
        lp.A_eq(cols[v] / nB, v) = 1.0;
        lp.A_eq(nA + cols[v] % nB, v) = 1.0;
    }
    for (int i = 0; i < nA; ++i) lp.b_eq(i) = pa[i];
    for (int j = 0; j < nB; ++j) lp.b_eq(nA + j) = pb[j];
    if (cls != PlanClass::plain) {
        auto ancA = ancestor_table(a), ancB = ancestor_table(b);
        add_causality_rows(lp, cols, nB, a, ancA, b, ancB, true);
        if (cls == PlanClass::bicausal) add_causality_rows(lp, cols, nB, b, ancB, a, ancA, false);
    }
    auto sol = solve_lp(lp);
    if (sol.status != LPStatus::optimal) return std::nullopt;
    return TransportResult{sol.objective, unpack(sol.x, cols, nA, nB)};
}

}  // namespace

TransportResult discrete_wasserstein(const std::vector<double>& mu, const std::vector<double>& nu,
                                     const MatrixXd& cost, double p) {
    check_distribution(mu, "first marginal");
    check_distribution(nu, "second marginal");
    if (cost.rows() != static_cast<Eigen::Index>(mu.size()) || cost.cols() != static_cast<Eigen::Index>(nu.size()))
        throw DomainError("cost matrix shape does not match the marginals");
    if (cost.size() > 0 && cost.minCoeff() < 0.0) throw DomainError("negative transport cost");
    if (!(p >= 1.0)) throw DomainError("order p must be >= 1");
    const int n = static_cast<int>(mu.size()), m = static_cast<int>(nu.size());
    std::vector<int> cols;
    if (finite_p(p)) {
        MatrixXd w = cost.array().pow(p).matrix();
        auto sol = transport_lp(mu, nu, w, std::vector<char>(n * m, 1), cols);
        if (!sol) throw std::logic_error("transportation LP failed on normalized marginals");
        return {std::pow(std::max(0.0, sol->objective), 1.0 / p), unpack(sol->x, cols, n, m)};
    }
    auto levels = distinct_sorted(cost);
    MatrixXd zero = MatrixXd::Zero(n, m);
    auto feasible = [&](double tau, MatrixXd* plan) {
        std::vector<char> allowed(n * m);
        for (int k = 0; k < n * m; ++k) allowed[k] = cost(k / m, k % m) <= tau;
        auto sol = transport_lp(mu, nu, zero, allowed, cols);
        if (sol && plan) *plan = unpack(sol->x, cols, n, m);
        return sol.has_value();
    };
    std::size_t lo = 0, hi = levels.size() - 1;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (feasible(levels[mid], nullptr)) hi = mid;
        else lo = mid + 1;
    }
    TransportResult out;
    out.value = levels[lo];
    feasible(levels[lo], &out.coupling);
    return out;
}

std::vector<double> leaf_probs(const ScenarioTree& tree) {
    std::vector<double> p;
    for (int leaf : tree.leaves()) p.push_back(tree.path_prob(leaf));
    return p;
}

double path_distance(const ScenarioTree& a, int leaf_a, const ScenarioTree& b, int leaf_b,
                     const DistanceSpec& spec) {
    auto pa = a.path(leaf_a), pb = b.path(leaf_b);
    if (pa.size() != pb.size()) throw DomainError("paths of different length");
    double acc = 0.0;
    for (std::size_t t = 0; t < pa.size(); ++t) {
        double d = norm_of(a.node(pa[t]).outcome - b.node(pb[t]).outcome, spec.norm);
        acc = finite_p(spec.p) ? acc + std::pow(d, spec.p) : std::max(acc, d);
    }
    return finite_p(spec.p) ? std::pow(acc, 1.0 / spec.p) : acc;
}

MatrixXd path_cost_matrix(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec) {
    check_stage_match(a, b);
    const auto& la = a.leaves();
    const auto& lb = b.leaves();
    MatrixXd c(la.size(), lb.size());
    for (std::size_t i = 0; i < la.size(); ++i)
        for (std::size_t j = 0; j < lb.size(); ++j) c(i, j) = path_distance(a, la[i], b, lb[j], spec);
    return c;
}

double plan_cost(const MatrixXd& gamma, const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec) {
    MatrixXd d = path_cost_matrix(a, b, spec);
    if (gamma.rows() != d.rows() || gamma.cols() != d.cols()) throw DomainError("coupling shape mismatch");
    if (finite_p(spec.p)) {
        double s = (gamma.array() * d.array().pow(spec.p)).sum();
        return std::pow(std::max(0.0, s), 1.0 / spec.p);
    }
    double mx = 0.0;
    for (Eigen::Index k = 0; k < d.size(); ++k)
        if (gamma.data()[k] > 1e-12) mx = std::max(mx, d.data()[k]);
    return mx;
}

double wasserstein_distance(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec) {
    return discrete_wasserstein(leaf_probs(a), leaf_probs(b), path_cost_matrix(a, b, spec), spec.p).value;
}

bool is_causal(const MatrixXd& gamma, const ScenarioTree& a, const ScenarioTree& b, Direction dir, double tol) {
    check_stage_match(a, b);
    const auto pa = leaf_probs(a), pb = leaf_probs(b);
    const int nA = static_cast<int>(pa.size()), nB = static_cast<int>(pb.size());
    if (gamma.rows() != nA || gamma.cols() != nB) throw DomainError("coupling shape does not match the trees");
    if (gamma.size() > 0 && gamma.minCoeff() < -tol) throw DomainError("coupling has negative weights");
    for (int i = 0; i < nA; ++i)
        if (std::abs(gamma.row(i).sum() - pa[i]) > 1e-9) throw DomainError("coupling row sums differ from tree A");
    for (int j = 0; j < nB; ++j)
        if (std::abs(gamma.col(j).sum() - pb[j]) > 1e-9) throw DomainError("coupling column sums differ from tree B");

    const bool x_is_a = dir == Direction::a_to_b;
    const ScenarioTree& x = x_is_a ? a : b;
    const ScenarioTree& y = x_is_a ? b : a;
    auto ancX = ancestor_table(x), ancY = ancestor_table(y);
    const int nX = x_is_a ? nA : nB, nY = x_is_a ? nB : nA;
    auto g = [&](int ix, int iy) { return x_is_a ? gamma(ix, iy) : gamma(iy, ix); };
    for (int t = 1; t < x.stages(); ++t) {
        // mass of (stage-t node of x, stage-t node of y) and of (stage-(t+1) node of x, stage-t node of y)
        std::vector<std::vector<double>> joint(x.size(), std::vector<double>(y.size(), 0.0));
        std::vector<std::vector<double>> next(x.size(), std::vector<double>(y.size(), 0.0));
        for (int ix = 0; ix < nX; ++ix)
            for (int iy = 0; iy < nY; ++iy) {
                double w = g(ix, iy);
                joint[ancX[t - 1][ix]][ancY[t - 1][iy]] += w;
                next[ancX[t][ix]][ancY[t - 1][iy]] += w;
            }
        for (int node_x : x.stage_nodes(t))
            for (int node_y : y.stage_nodes(t)) {
                double mass = joint[node_x][node_y];
                if (mass < 1e-12) continue;
                for (int child : x.node(node_x).children)
                    if (std::abs(next[child][node_y] / mass - x.node(child).prob) > tol) return false;
            }
    }
    return true;
}

bool is_bicausal(const MatrixXd& gamma, const ScenarioTree& a, const ScenarioTree& b, double tol) {
    return is_causal(gamma, a, b, Direction::a_to_b, tol) && is_causal(gamma, a, b, Direction::b_to_a, tol);
}

double nested_distance(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec) {
    check_stage_match(a, b);
    if (!(spec.p >= 1.0)) throw DomainError("order p must be >= 1");
    const bool fin = finite_p(spec.p);
    const int T = a.stages();
    MatrixXd value = MatrixXd::Constant(a.size(), b.size(), std::numeric_limits<double>::quiet_NaN());
    for (int t = T; t >= 1; --t) {
        for (int ia : a.stage_nodes(t)) {
            for (int ib : b.stage_nodes(t)) {
                const auto& na = a.node(ia);
                const auto& nb = b.node(ib);
                double g = norm_of(na.outcome - nb.outcome, spec.norm);
                double here = fin ? std::pow(g, spec.p) : g;
                if (t < T) {
                    std::vector<double> mu, nu;
                    for (int k : na.children) mu.push_back(a.node(k).prob);
                    for (int k : nb.children) nu.push_back(b.node(k).prob);
                    MatrixXd c(na.children.size(), nb.children.size());
                    for (std::size_t i = 0; i < na.children.size(); ++i)
                        for (std::size_t j = 0; j < nb.children.size(); ++j)
                            c(i, j) = value(na.children[i], nb.children[j]);
                    if (fin) {
                        here += discrete_wasserstein(mu, nu, c, 1.0).value;
                    } else {
                        here = std::max(here, discrete_wasserstein(mu, nu, c, kInf).value);
                    }
                }
                value(ia, ib) = here;
            }
        }
    }
    double root = value(0, 0);
    return fin ? std::pow(std::max(0.0, root), 1.0 / spec.p) : root;
}

TransportResult adapted_transport_lp(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec,
                                     PlanClass cls) {
    check_stage_match(a, b);
    if (!(spec.p >= 1.0)) throw DomainError("order p must be >= 1");
    MatrixXd d = path_cost_matrix(a, b, spec);
    const Eigen::Index n = d.size();
    if (finite_p(spec.p)) {
        auto r = plan_lp(a, b, d.array().pow(spec.p).matrix(), std::vector<char>(n, 1), cls);
        if (!r) throw std::logic_error("adapted transport LP infeasible; the product plan is always feasible");
        r->value = std::pow(std::max(0.0, r->value), 1.0 / spec.p);
        return *r;
    }
    auto levels = distinct_sorted(d);
    MatrixXd zero = MatrixXd::Zero(d.rows(), d.cols());
    auto attempt = [&](double tau) {
        std::vector<char> allowed(n);
        for (Eigen::Index k = 0; k < n; ++k) allowed[k] = d(k / d.cols(), k % d.cols()) <= tau;
        return plan_lp(a, b, zero, allowed, cls);
    };
    std::size_t lo = 0, hi = levels.size() - 1;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (attempt(levels[mid])) hi = mid;
        else lo = mid + 1;
    }
    auto r = attempt(levels[lo]);
    if (!r) throw std::logic_error("adapted transport bisection lost feasibility");
    r->value = levels[lo];
    return *r;
}

double nested_distance_oracle(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec) {
    return adapted_transport_lp(a, b, spec, PlanClass::bicausal).value;
}

double causal_distance(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec) {
    return adapted_transport_lp(a, b, spec, PlanClass::causal).value;
}

}  // namespace ndro
