#include "ndro/dro_dp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ndro {

// ---------------------------------------------------------------------------
// Regularizers and risk measures

double soft_penalty_coefficient(double p, double lambda) {
    if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("soft penalty coefficient needs p in (1, inf)");
    if (!(lambda > 0.0)) throw DomainError("soft penalty coefficient needs lambda > 0");
    return (1.0 - 1.0 / p) * std::pow(1.0 / (p * lambda), 1.0 / (p - 1.0));
}

double objective_regularizer(const VectorXd& x, const UncertaintySpec& u) {
    const double phi = norm_of(x, dual_of(u.norm));
    if (u.mode == Mode::hard) {
        if (std::isfinite(u.p)) throw DomainError("hard mode with finite p has no closed-form regularizer");
        return u.theta * phi;
    }
    if (u.p == 1.0) return phi <= u.lambda * (1.0 + 1e-9) + 1e-12 ? 0.0 : kInf;
    return soft_penalty_coefficient(u.p, u.lambda) * std::pow(phi, u.p / (u.p - 1.0));
}

std::vector<double> avar_weights(const std::vector<double>& values, const std::vector<double>& probs, double alpha) {
    if (!(alpha > 0.0) || alpha > 1.0) throw DomainError("AVaR level must lie in (0, 1]");
    if (values.size() != probs.size()) throw DomainError("AVaR: values and probabilities differ in size");
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });
    std::vector<double> w(values.size(), 0.0);
    double left = alpha;
    for (int i : order) {
        if (left <= 0.0) break;
        const double take = std::min(probs[i], left);
        w[i] = take / alpha;
        left -= take;
    }
    return w;
}

double avar_cost_to_go(const std::vector<double>& values, const std::vector<double>& probs, double alpha) {
    auto w = avar_weights(values, probs, alpha);
    double v = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) v += w[i] * values[i];
    return v;
}

// ---------------------------------------------------------------------------
// Policies

PolicyFn lookup_policy(std::map<int, VectorXd> decisions) {
    auto table = std::make_shared<std::map<int, VectorXd>>(std::move(decisions));
    return [table](const PolicyQuery& q) -> VectorXd {
        auto it = table->find(q.node);
        if (it == table->end()) throw DomainError("policy has no decision for node " + std::to_string(q.node));
        return it->second;
    };
}

PolicyFn resolve_policy(const MultistageProblem& problem, std::shared_ptr<const ValueApprox> approx) {
    auto prob = std::make_shared<MultistageProblem>(problem);
    return [prob, approx](const PolicyQuery& q) -> VectorXd {
        const int t = q.stage;
        StageData d = prob->data(t, q.history.back());
        VectorXd x_prev = q.decisions.empty() ? VectorXd() : q.decisions.back();
        const VectorXd rhs = stage_rhs(d, x_prev);
        StageSolve r;
        if (t < prob->num_stages() && approx)
            r = solve_stage_lp(d, rhs, &approx->cuts.at(t + 1), approx->floors.at(t + 1));
        else
            r = solve_stage_lp(d, rhs, nullptr, 0.0);
        if (r.status != LPStatus::optimal)
            throw DomainError("re-solve at stage " + std::to_string(t) + " is " + to_string(r.status));
        return r.x;
    };
}

void check_policy(const MultistageProblem& problem, const Policy& policy, double tol) {
    for (const auto& node : policy.tree.nodes()) {
        auto it = policy.decisions.find(node.id);
        if (it == policy.decisions.end()) throw DomainError("policy misses node " + std::to_string(node.id));
        VectorXd prev = node.parent < 0 ? VectorXd() : policy.decisions.at(node.parent);
        if (!stage_feasible(problem.data(node.stage, node.outcome), prev, it->second, tol))
            throw DomainError("on-tree decision at node " + std::to_string(node.id) + " is infeasible");
    }
}

// ---------------------------------------------------------------------------
// Fixed-policy robust risk

namespace {

struct Candidate {
    VectorXd xi;
    double penalty = 0.0;
};

enum class SupMethod { closed_form, vertices, grid };

std::string method_name(SupMethod m) {
    switch (m) {
        case SupMethod::closed_form: return "closed-form";
        case SupMethod::vertices: return "vertices";
        case SupMethod::grid: return "grid";
    }
    return "?";
}

bool in_box(const VectorXd& v, const UncertaintySpec& u) {
    if (!u.box_support) return true;
    return v.size() == 0 || (v.minCoeff() >= u.box_lo && v.maxCoeff() <= u.box_hi);
}

std::vector<Candidate> candidates(const VectorXd& nominal, const UncertaintySpec& u, const EvalOptions& opt,
                                  SupMethod m) {
    std::vector<Candidate> out;
    out.push_back({nominal, 0.0});
    if (m == SupMethod::vertices) {
        if (u.theta > 0.0)
            for (int j = 0; j < nominal.size(); ++j)
                for (int s : {1, -1}) {
                    VectorXd v = nominal;
                    v(j) += s * u.theta;
                    out.push_back({v, 0.0});
                }
        return out;
    }
    for (const auto& D : opt.grid) {
        if (D.size() != nominal.size()) throw DomainError("grid offset dimension does not match the outcome");
        const double r = norm_of(D, u.norm);
        VectorXd v = nominal + D;
        if (!in_box(v, u)) continue;
        if (u.mode == Mode::hard) {
            if (r <= u.theta * (1.0 + 1e-12) + 1e-15) out.push_back({v, 0.0});
        } else {
            out.push_back({v, u.lambda * std::pow(r, u.p)});
        }
    }
    return out;
}

SupMethod choose_method(const MultistageProblem& problem, const UncertaintySpec& u, const EvalOptions& opt) {
    if (opt.use_grid) {
        if (opt.grid.empty()) throw DomainError("grid evaluation requested with an empty grid");
        return SupMethod::grid;
    }
    if (problem.location == Location::rhs && u.mode == Mode::hard && !std::isfinite(u.p) && u.norm == Norm::l1 &&
        !u.box_support)
        return SupMethod::vertices;
    throw DomainError("no exact inner-sup solver for " + to_string(problem.location) + " uncertainty with " +
                      to_string(u.norm) + " ball" + (u.mode == Mode::soft ? " (soft)" : "") +
                      "; supply a candidate grid");
}

class NestedEvaluator {
public:
    NestedEvaluator(const MultistageProblem& problem, const PolicyFn& policy, const UncertaintySpec& u,
                    const EvalOptions& opt, SupMethod m)
        : problem_(problem), tree_(problem.tree()), policy_(policy), u_(u), opt_(opt), method_(m) {}

    double nested() {
        hist_ = {tree_.root().outcome};
        decs_.clear();
        return nested_at(tree_.root().id);
    }

    double wasserstein() {
        double total = 0.0;
        for (int leaf : tree_.leaves()) {
            path_ = tree_.path(leaf);
            hist_ = {tree_.root().outcome};
            decs_.clear();
            total += tree_.path_prob(leaf) * joint_at(0);
        }
        return total;
    }

private:
    // cost of the policy decision at (node, hist_, decs_); pushes the decision
    double stage_cost(int node) {
        const int t = tree_.node(node).stage;
        PolicyQuery q{t, node, hist_, decs_};
        VectorXd x = policy_(q);
        StageData d = problem_.data(t, hist_.back());
        VectorXd prev = decs_.empty() ? VectorXd() : decs_.back();
        if (!stage_feasible(d, prev, x, opt_.feas_tol))
            throw DomainError("policy infeasible at stage " + std::to_string(t) + ", node " + std::to_string(node));
        decs_.push_back(x);
        return d.c.dot(x);
    }

    double nested_at(int node) {
        const double cost = stage_cost(node);
        double acc = 0.0;
        for (int child : tree_.node(node).children) {
            const auto& c = tree_.node(child);
            double best = -kInf;
            for (const auto& cand : candidates(c.outcome, u_, opt_, method_)) {
                hist_.push_back(cand.xi);
                best = std::max(best, nested_at(child) - cand.penalty);
                hist_.pop_back();
            }
            acc += c.prob * best;
        }
        decs_.pop_back();
        return cost + acc;
    }

    double joint_at(std::size_t k) {
        const double cost = stage_cost(path_[k]);
        double best = 0.0;
        if (k + 1 < path_.size()) {
            best = -kInf;
            for (const auto& cand : candidates(tree_.node(path_[k + 1]).outcome, u_, opt_, method_)) {
                hist_.push_back(cand.xi);
                best = std::max(best, joint_at(k + 1) - cand.penalty);
                hist_.pop_back();
            }
        }
        decs_.pop_back();
        return cost + best;
    }

    const MultistageProblem& problem_;
    ScenarioTree tree_;
    const PolicyFn& policy_;
    const UncertaintySpec& u_;
    const EvalOptions& opt_;
    SupMethod method_;
    std::vector<VectorXd> hist_, decs_;
    std::vector<int> path_;
};

// objective uncertainty with decisions per node: c1'x1 + sum_n P(n) (c_n'x_n + reg(x_n))
double closed_form_objective(const MultistageProblem& problem, const std::map<int, VectorXd>& decisions,
                             const UncertaintySpec& u, double tol) {
    ScenarioTree tree = problem.tree();
    double total = 0.0;
    for (const auto& node : tree.nodes()) {
        auto it = decisions.find(node.id);
        if (it == decisions.end()) throw DomainError("policy has no decision for node " + std::to_string(node.id));
        StageData d = problem.data(node.stage, node.outcome);
        VectorXd prev = node.parent < 0 ? VectorXd() : decisions.at(node.parent);
        if (!stage_feasible(d, prev, it->second, tol))
            throw DomainError("policy infeasible at stage " + std::to_string(node.stage) + ", node " +
                              std::to_string(node.id));
        double term = d.c.dot(it->second);
        if (node.parent >= 0) term += objective_regularizer(it->second, u);
        total += tree.path_prob(node.id) * term;
    }
    return total;
}

// Reduction of hard p < inf to soft evaluations by bisection on the penalty
RiskValue via_soft(const std::function<RiskValue(const UncertaintySpec&)>& eval, const UncertaintySpec& u) {
    RiskValue last;
    auto soft = [&](double lambda) {
        UncertaintySpec s = UncertaintySpec::soft(u.p, std::max(lambda, 1e-300), u.norm);
        s.box_support = u.box_support;
        s.box_lo = u.box_lo;
        s.box_hi = u.box_hi;
        last = eval(s);
        return last.value;
    };
    auto r = hard_from_soft(soft, u.theta, u.p);
    last.value = r.value;
    return last;
}

}  // namespace

RiskValue robust_risk_fixed_policy(const MultistageProblem& problem, const PolicyFn& policy,
                                   const UncertaintySpec& u, const EvalOptions& opt) {
    problem.validate();
    u.validate();
    if (u.mode == Mode::hard && std::isfinite(u.p))
        return via_soft([&](const UncertaintySpec& s) { return robust_risk_fixed_policy(problem, policy, s, opt); },
                        u);
    const SupMethod m = choose_method(problem, u, opt);
    NestedEvaluator ev(problem, policy, u, opt, m);
    return {ev.nested(), m == SupMethod::grid, method_name(m)};
}

RiskValue robust_risk_fixed_policy(const MultistageProblem& problem, const std::map<int, VectorXd>& decisions,
                                   const UncertaintySpec& u, const EvalOptions& opt) {
    problem.validate();
    u.validate();
    if (problem.location != Location::objective || opt.use_grid)
        return robust_risk_fixed_policy(problem, lookup_policy(decisions), u, opt);
    if (u.box_support) throw DomainError("closed-form objective sup requires the whole space as support");
    if (u.mode == Mode::hard && std::isfinite(u.p))
        return via_soft(
            [&](const UncertaintySpec& s) { return robust_risk_fixed_policy(problem, decisions, s, opt); }, u);
    return {closed_form_objective(problem, decisions, u, opt.feas_tol), false, method_name(SupMethod::closed_form)};
}

RiskValue wasserstein_sup_risk(const MultistageProblem& problem, const PolicyFn& policy, const UncertaintySpec& u,
                               const EvalOptions& opt) {
    problem.validate();
    u.validate();
    if (u.mode != Mode::hard || std::isfinite(u.p)) throw DomainError("Wasserstein sup risk is defined for p = inf");
    const SupMethod m = choose_method(problem, u, opt);
    NestedEvaluator ev(problem, policy, u, opt, m);
    return {ev.wasserstein(), m == SupMethod::grid, method_name(m)};
}

RiskValue wasserstein_sup_risk(const MultistageProblem& problem, const std::map<int, VectorXd>& decisions,
                               const UncertaintySpec& u, const EvalOptions& opt) {
    problem.validate();
    u.validate();
    if (problem.location != Location::objective || opt.use_grid)
        return wasserstein_sup_risk(problem, lookup_policy(decisions), u, opt);
    if (u.mode != Mode::hard || std::isfinite(u.p)) throw DomainError("Wasserstein sup risk is defined for p = inf");
    if (u.box_support) throw DomainError("closed-form objective sup requires the whole space as support");
    // the per-path joint sup separates over stages because decisions depend on the nominal node only
    return {closed_form_objective(problem, decisions, u, opt.feas_tol), false, method_name(SupMethod::closed_form)};
}

// ---------------------------------------------------------------------------
// Regularized LPs

namespace {

int add_col(LinearProgram& lp, double cost, bool is_free) {
    const int n = lp.num_vars();
    lp.c.conservativeResize(n + 1);
    lp.c(n) = cost;
    if (lp.free.empty()) lp.free.assign(n, false);
    lp.free.push_back(is_free);
    lp.A_eq.conservativeResize(lp.A_eq.rows(), n + 1);
    lp.A_eq.col(n).setZero();
    lp.A_ub.conservativeResize(lp.A_ub.rows(), n + 1);
    lp.A_ub.col(n).setZero();
    return n;
}

void add_ub_sparse(LinearProgram& lp, const std::vector<std::pair<int, double>>& entries, double rhs) {
    VectorXd row = VectorXd::Zero(lp.num_vars());
    for (auto [j, v] : entries) row(j) += v;
    lp.add_ub(row, rhs);
}

/// LP plus dual-norm penalties on variable blocks, refined by cutting planes
/// where the norm (l2) or the penalty (power) is not polyhedral.
class RegularizedLP {
public:
    RegularizedLP(LinearProgram base, const UncertaintySpec& u) : lp_(std::move(base)), u_(u), dual_(dual_of(u.norm)) {
        base_n_ = lp_.num_vars();
        base_c_ = lp_.c;
    }

    void add_block(int offset, int size, double weight) {
        Block b{offset, size, weight, -1, -1};
        const bool hard = u_.mode == Mode::hard;
        if (hard && u_.theta == 0.0) return;
        b.phi = add_col(lp_, hard ? weight * u_.theta : 0.0, false);
        if (dual_ == Norm::l1) {
            std::vector<std::pair<int, double>> sum{{b.phi, -1.0}};
            for (int i = 0; i < size; ++i) {
                int t = add_col(lp_, 0.0, false);
                add_ub_sparse(lp_, {{offset + i, 1.0}, {t, -1.0}}, 0.0);
                add_ub_sparse(lp_, {{offset + i, -1.0}, {t, -1.0}}, 0.0);
                sum.push_back({t, 1.0});
            }
            add_ub_sparse(lp_, sum, 0.0);
        } else {
            // l_inf exactly, and the starting outer approximation of l2
            for (int i = 0; i < size; ++i) {
                add_ub_sparse(lp_, {{offset + i, 1.0}, {b.phi, -1.0}}, 0.0);
                add_ub_sparse(lp_, {{offset + i, -1.0}, {b.phi, -1.0}}, 0.0);
            }
        }
        if (!hard) {
            if (u_.p == 1.0) add_ub_sparse(lp_, {{b.phi, 1.0}}, u_.lambda);
            else b.eta = add_col(lp_, weight, false);
        }
        blocks_.push_back(b);
    }

    struct Result {
        LPStatus status = LPStatus::optimal;
        VectorXd x;            // base variables
        double value = 0.0;    // base cost plus exact penalties at x
        double lower = 0.0;    // LP value
        LPSolution lp;
    };

    Result solve(double tol, int max_rounds = 1000) {
        Result res;
        for (int round = 0; round < max_rounds; ++round) {
            LPSolution s = solve_lp(lp_);
            res.status = s.status;
            if (s.status != LPStatus::optimal) return res;
            res.x = s.x.head(base_n_);
            res.lower = s.objective;
            res.lp = s;
            double value = base_c_.dot(res.x), gap = 0.0;
            bool cut_added = false;
            for (const Block& b : blocks_) {
                const VectorXd xb = s.x.segment(b.offset, b.size);
                const double phi = norm_of(xb, dual_);
                const double phi_lp = s.x(b.phi);
                double pen = 0.0, pen_lp = 0.0;
                if (u_.mode == Mode::hard) {
                    pen = b.weight * u_.theta * phi;
                    pen_lp = b.weight * u_.theta * phi_lp;
                } else if (u_.p == 1.0) {
                    gap += b.weight * std::max(0.0, phi - u_.lambda);
                } else {
                    const double k = soft_penalty_coefficient(u_.p, u_.lambda), q = u_.p / (u_.p - 1.0);
                    pen = b.weight * k * std::pow(phi, q);
                    pen_lp = b.weight * s.x(b.eta);
                    if (pen - pen_lp > 1e-12 * (1.0 + std::abs(pen))) {
                        for (double at : {phi, phi_lp}) {
                            if (!(at > 0.0)) continue;
                            add_ub_sparse(lp_, {{b.phi, k * q * std::pow(at, q - 1.0)}, {b.eta, -1.0}},
                                          k * (q - 1.0) * std::pow(at, q));
                        }
                        cut_added = true;
                    }
                }
                if (dual_ == Norm::l2 && phi > phi_lp + 1e-12 * (1.0 + phi)) {
                    std::vector<std::pair<int, double>> row{{b.phi, -1.0}};
                    for (int i = 0; i < b.size; ++i) row.push_back({b.offset + i, xb(i) / phi});
                    add_ub_sparse(lp_, row, 0.0);
                    cut_added = true;
                }
                value += pen;
                gap += pen - pen_lp;
            }
            res.value = value;
            if (gap <= tol * (1.0 + std::abs(value)) || !cut_added) return res;
        }
        throw DomainError("norm cutting-plane loop did not converge");
    }

private:
    struct Block {
        int offset, size;
        double weight;
        int phi, eta;
    };
    LinearProgram lp_;
    UncertaintySpec u_;
    Norm dual_;
    int base_n_ = 0;
    VectorXd base_c_;
    std::vector<Block> blocks_;
};

LinearProgram stage_program(const StageData& d, const VectorXd& rhs, const std::vector<Cut>* cuts, double floor) {
    const int n = static_cast<int>(d.A.cols());
    LinearProgram lp(n);
    lp.c = d.c;
    lp.free.assign(n, false);
    for (int j = 0; j < n; ++j) lp.free[j] = !d.free.empty() && d.free[j];
    lp.A_eq = d.A;
    lp.b_eq = rhs;
    lp.A_ub = MatrixXd::Zero(0, n);
    lp.b_ub = VectorXd(0);
    if (cuts) {
        const int th = add_col(lp, 1.0, true);
        for (const Cut& c : *cuts) {
            VectorXd row = VectorXd::Zero(lp.num_vars());
            row.head(n) = c.gradient;
            row(th) = -1.0;
            lp.add_ub(row, c.gradient.dot(c.anchor) - c.intercept);
        }
        add_ub_sparse(lp, {{th, -1.0}}, -floor);
    }
    return lp;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cost-to-go reformulations

StageSolve NoContinuation::solve(const StageData& d, const VectorXd& rhs) { return solve_stage_lp(d, rhs, nullptr, 0.0); }

StageSolve CutContinuation::solve(const StageData& d, const VectorXd& rhs) {
    return solve_stage_lp(d, rhs, &cuts_, floor_);
}

StageValue cost_to_go_objective(const StageData& d, const VectorXd& x_prev, const std::vector<Cut>* cuts,
                                double floor, const UncertaintySpec& u, double tol) {
    u.validate();
    if (u.box_support) throw DomainError("objective reformulation requires the whole space as support");
    if (u.mode == Mode::hard && std::isfinite(u.p))
        throw DomainError("objective reformulation with finite p needs soft mode (use hard_from_soft)");
    const int n = static_cast<int>(d.A.cols());
    RegularizedLP rl(stage_program(d, stage_rhs(d, x_prev), cuts, floor), u);
    rl.add_block(0, n, 1.0);
    auto r = rl.solve(tol);
    if (r.status == LPStatus::infeasible) {
        if (u.mode == Mode::soft && u.p == 1.0)
            throw DomainError("stage problem infeasible: lambda is below every feasible dual norm of the decision");
        throw DomainError("stage problem infeasible");
    }
    if (r.status == LPStatus::unbounded) throw DomainError("stage problem unbounded below");
    StageValue out;
    out.value = r.value;
    if (cuts) {
        // replace the LP's continuation variable by its exact value at x
        const double theta_lp = r.lp.x(n);
        double cont = floor;
        for (const Cut& c : *cuts) cont = std::max(cont, c(r.x.head(n)));
        out.value += cont - theta_lp;
    }
    out.x = r.x.head(n);
    return out;
}

StageValue cost_to_go_rhs_inf(const StageData& d, const VectorXd& x_prev, Continuation& cont,
                              const UncertaintySpec& u, Location location) {
    u.validate();
    if (u.mode != Mode::hard || std::isfinite(u.p)) throw DomainError("perturbation enumeration requires p = inf");
    if (location == Location::objective) throw DomainError("perturbation enumeration is for rhs / technology");
    if (location == Location::rhs && u.norm != Norm::l1)
        throw DomainError("rhs perturbation enumeration requires the l1 ball");
    if (u.box_support) throw DomainError("perturbation enumeration requires the whole space as support");
    const double s = location == Location::technology ? norm_of(x_prev, u.norm) : 1.0;
    const VectorXd base = stage_rhs(d, x_prev);
    const int m = static_cast<int>(base.size());
    StageValue best;
    best.value = -kInf;
    const bool perturb = u.theta * s > 0.0 && m > 0;
    for (int j = 0; j < (perturb ? m : 1); ++j)
        for (int delta : {1, -1}) {
            if (!perturb && delta < 0) continue;
            VectorXd rhs = base;
            if (perturb) rhs(j) += u.theta * delta * s;
            StageSolve r = cont.solve(d, rhs);
            if (r.status == LPStatus::infeasible)
                throw DomainError("perturbed subproblem infeasible at j=" + std::to_string(j) +
                                  ", delta=" + std::to_string(delta) + " (recourse violated)");
            if (r.status == LPStatus::unbounded)
                throw DomainError("perturbed subproblem unbounded at j=" + std::to_string(j) +
                                  ", delta=" + std::to_string(delta) + " (recourse not sufficiently expensive)");
            if (r.value > best.value) {
                best.value = r.value;
                best.x = r.x;
                best.j = perturb ? j : -1;
                best.delta = perturb ? delta : 0;
                best.pi = r.pi;
            }
        }
    return best;
}

SoftToHard hard_from_soft(const std::function<double(double)>& soft, double theta, double p, double lambda_start,
                          double rtol) {
    if (!std::isfinite(p) || p < 1.0) throw DomainError("hard_from_soft needs a finite order p >= 1");
    if (!(theta >= 0.0)) throw DomainError("radius must be nonnegative");
    if (!(lambda_start > 0.0)) lambda_start = 1.0;
    const double tp = std::pow(theta, p);
    auto f = [&](double l) {
        const double s = soft(l);
        return std::isfinite(s) ? l * tp + s : kInf;
    };
    const double cap = lambda_start * std::ldexp(1.0, 40);
    double l = lambda_start, fl = f(l), lo = 0.0;
    while (!std::isfinite(fl)) {
        lo = l;
        l *= 2.0;
        if (l > cap) throw DomainError("soft value is infinite for every tried lambda");
        fl = f(l);
    }
    // f is convex: keep doubling while it decreases, the minimizer then lies in [lo, 2l]
    while (true) {
        const double l2 = 2.0 * l;
        if (l2 > cap) return {fl, l};
        const double f2 = f(l2);
        if (f2 >= fl) break;
        lo = l;
        l = l2;
        fl = f2;
    }
    double a = lo, b = 2.0 * l;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > rtol * std::max(1.0, std::abs(b))) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    SoftToHard best{fl, l};
    for (auto [lv, fv] : {std::pair{c, fc}, std::pair{d, fd}, std::pair{b, f(b)}})
        if (fv < best.value) best = {fv, lv};
    return best;
}

// ---------------------------------------------------------------------------
// Extensive forms

namespace {

struct Extensive {
    ScenarioTree tree;
    std::vector<int> offset;
    std::vector<int> size;
    LinearProgram lp;
};

Extensive build_extensive(const MultistageProblem& problem) {
    Extensive e;
    e.tree = problem.tree();
    const int N = e.tree.size();
    e.offset.resize(N);
    e.size.resize(N);
    int total = 0, rows = 0;
    for (const auto& node : e.tree.nodes()) {
        e.offset[node.id] = total;
        e.size[node.id] = problem.stage(node.stage).cols();
        total += e.size[node.id];
        rows += problem.stage(node.stage).rows();
    }
    e.lp = LinearProgram(total);
    e.lp.free.assign(total, false);
    e.lp.A_eq = MatrixXd::Zero(rows, total);
    e.lp.b_eq = VectorXd::Zero(rows);
    e.lp.A_ub = MatrixXd::Zero(0, total);
    e.lp.b_ub = VectorXd(0);
    int r = 0;
    for (const auto& node : e.tree.nodes()) {
        StageData d = problem.data(node.stage, node.outcome);
        const int o = e.offset[node.id], n = e.size[node.id], m = static_cast<int>(d.A.rows());
        e.lp.c.segment(o, n) = e.tree.path_prob(node.id) * d.c;
        for (int j = 0; j < n; ++j) e.lp.free[o + j] = !d.free.empty() && d.free[j];
        e.lp.A_eq.block(r, o, m, n) = d.A;
        if (node.parent >= 0 && d.B.cols() > 0)
            e.lp.A_eq.block(r, e.offset[node.parent], m, d.B.cols()) = d.B;
        e.lp.b_eq.segment(r, m) = d.b;
        r += m;
    }
    return e;
}

std::map<int, VectorXd> split_decisions(const Extensive& e, const VectorXd& x) {
    std::map<int, VectorXd> out;
    for (const auto& node : e.tree.nodes()) out[node.id] = x.segment(e.offset[node.id], e.size[node.id]);
    return out;
}

void check_size(const MultistageProblem& problem, const ScenarioTree& tree, const ExactOptions& opt) {
    if (problem.num_stages() > opt.max_stages)
        throw DomainError("instance too large for the exact solver: " + std::to_string(problem.num_stages()) +
                          " stages (limit " + std::to_string(opt.max_stages) + ")");
    for (const auto& node : tree.nodes())
        if (static_cast<int>(node.children.size()) > opt.max_support)
            throw DomainError("instance too large for the exact solver: node " + std::to_string(node.id) + " has " +
                              std::to_string(node.children.size()) + " children (limit " +
                              std::to_string(opt.max_support) + ")");
}

// regularized extensive form for objective uncertainty (soft, or hard with p = inf)
ExactResult objective_extensive(const MultistageProblem& problem, const UncertaintySpec& u, double tol) {
    Extensive e = build_extensive(problem);
    RegularizedLP rl(e.lp, u);
    for (const auto& node : e.tree.nodes())
        if (node.parent >= 0) rl.add_block(e.offset[node.id], e.size[node.id], e.tree.path_prob(node.id));
    auto r = rl.solve(tol);
    if (r.status == LPStatus::infeasible) {
        if (u.mode == Mode::soft && u.p == 1.0)
            throw DomainError("regularized problem infeasible: lambda is below the required dual-norm bound");
        throw DomainError("extensive form infeasible");
    }
    if (r.status == LPStatus::unbounded) throw DomainError("extensive form unbounded below");
    ExactResult out;
    out.value = r.value;
    out.policy.tree = e.tree;
    out.policy.decisions = split_decisions(e, r.x);
    out.policy.rule = Extension::best_in_sample;
    const auto& nodes = e.tree.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        double cont = 0.0;
        for (int ch : it->children) {
            const auto& c = e.tree.node(ch);
            const VectorXd& x = out.policy.decisions.at(ch);
            cont += c.prob * (problem.data(c.stage, c.outcome).c.dot(x) + objective_regularizer(x, u) +
                              out.policy.continuation.at(ch));
        }
        out.policy.continuation[it->id] = cont;
    }
    return out;
}

}  // namespace

SaaResult saa_extensive(const MultistageProblem& problem) {
    problem.validate();
    Extensive e = build_extensive(problem);
    LPSolution s = solve_lp(e.lp);
    if (s.status == LPStatus::infeasible) throw DomainError("extensive form infeasible");
    if (s.status == LPStatus::unbounded) throw DomainError("extensive form unbounded below");
    return {s.objective, split_decisions(e, s.x)};
}

// ---------------------------------------------------------------------------
// p = 1, rhs uncertainty

namespace {

// max of dir'y_t over S_t; kInf when unbounded, -kInf when S_t is empty
double dual_set_support(const MultistageProblem& problem, int t, const VectorXd& dir) {
    const int T = problem.num_stages();
    std::vector<int> off(T + 2, 0);
    int total = 0;
    for (int s = t; s <= T; ++s) {
        off[s] = total;
        total += problem.stage(s).rows();
    }
    LinearProgram lp(total);
    lp.free.assign(total, true);
    lp.c.segment(off[t], dir.size()) = -dir;
    lp.A_eq = MatrixXd::Zero(0, total);
    lp.b_eq = VectorXd(0);
    lp.A_ub = MatrixXd::Zero(0, total);
    lp.b_ub = VectorXd(0);
    for (int s = t; s <= T; ++s) {
        const auto& st = problem.stage(s);
        for (int j = 0; j < st.cols(); ++j) {
            VectorXd row = VectorXd::Zero(total);
            row.segment(off[s], st.rows()) = st.A.col(j);
            if (s < T) {
                const auto& nx = problem.stage(s + 1);
                row.segment(off[s + 1], nx.rows()) = nx.B.col(j);
            }
            const bool fr = !st.free.empty() && st.free[j];
            if (fr) lp.add_eq(row, st.c(j));
            else lp.add_ub(row, st.c(j));
        }
    }
    LPSolution sol = solve_lp(lp);
    if (sol.status == LPStatus::unbounded) return kInf;
    if (sol.status == LPStatus::infeasible) return -kInf;
    return -sol.objective;
}

}  // namespace

P1Result solve_rhs_p1(const MultistageProblem& problem, const UncertaintySpec& u) {
    problem.validate();
    u.validate();
    if (problem.location == Location::technology)
        throw DomainError("p = 1 decomposition is implemented for right-hand side uncertainty only");
    if (problem.location != Location::rhs) throw DomainError("p = 1 decomposition needs rhs uncertainty");
    if (u.p != 1.0 || u.mode != Mode::hard) throw DomainError("p = 1 decomposition needs hard mode with p = 1");
    for (int t = 2; t <= problem.num_stages(); ++t)
        if (problem.stage(t).binding == Binding::none)
            throw DomainError("stage " + std::to_string(t) + " has no uncertain right-hand side");
    SaaResult saa = saa_extensive(problem);
    P1Result out;
    out.saa_value = saa.value;
    out.policy.tree = problem.tree();
    out.policy.decisions = saa.decisions;
    out.policy.rule = Extension::lookup;
    const Norm dual = dual_of(u.norm);
    const int T = problem.num_stages();
    out.stage_kappa.assign(T + 1, 0.0);
    out.kappa = 0.0;
    for (int t = 2; t <= T; ++t) {
        const int m = problem.stage(t).rows();
        double k = m == 0 ? 0.0 : -kInf;
        if (dual == Norm::linf) {
            for (int i = 0; i < m && k < kInf; ++i)
                for (int s : {1, -1}) {
                    VectorXd dir = VectorXd::Zero(m);
                    dir(i) = s;
                    k = std::max(k, dual_set_support(problem, t, dir));
                }
        } else if (dual == Norm::l1) {
            if (m > 16) throw DomainError("sign enumeration for the l_inf ball is limited to 16 rows");
            for (long mask = 0; mask < (1L << m) && k < kInf; ++mask) {
                VectorXd dir(m);
                for (int i = 0; i < m; ++i) dir(i) = (mask >> i) & 1 ? -1.0 : 1.0;
                k = std::max(k, dual_set_support(problem, t, dir));
            }
        } else {
            throw DomainError("dual-set radius is implemented for l1 and l_inf balls");
        }
        out.stage_kappa[t] = std::max(0.0, k);
        out.kappa = std::max(out.kappa, out.stage_kappa[t]);
    }
    if (u.theta == 0.0) out.value = out.saa_value;
    else out.value = std::isfinite(out.kappa) ? out.saa_value + u.theta * out.kappa : kInf;
    return out;
}

// ---------------------------------------------------------------------------
// Nested worst-case recursion

RobustRecursion::RobustRecursion(MultistageProblem problem, UncertaintySpec u, ExactOptions opt)
    : problem_(std::move(problem)), u_(u), opt_(opt) {
    problem_.validate();
    u_.validate();
    if (problem_.location == Location::objective)
        throw DomainError("nested perturbation recursion handles rhs / technology uncertainty");
    if (u_.mode != Mode::hard || std::isfinite(u_.p)) throw DomainError("nested perturbation recursion needs p = inf");
    if (problem_.location == Location::rhs && u_.norm != Norm::l1)
        throw DomainError("rhs perturbation enumeration requires the l1 ball");
    if (u_.box_support) throw DomainError("perturbation enumeration requires the whole space as support");
    if (!(opt_.avar_alpha > 0.0) || opt_.avar_alpha > 1.0) throw DomainError("AVaR level must lie in (0, 1]");
    tree_ = problem_.tree();
    check_size(problem_, tree_, opt_);
}

int RobustRecursion::pool_key(int node) const {
    return problem_.stagewise() ? -tree_.node(node).stage : node;
}

RobustRecursion::Eval RobustRecursion::cost_to_go(int parent, const VectorXd& x_prev) {
    const auto& pn = tree_.node(parent);
    Eval out;
    out.gradient = VectorXd::Zero(x_prev.size());
    if (pn.children.empty()) return out;
    const bool tech = problem_.location == Location::technology;
    const double s = tech ? norm_of(x_prev, u_.norm) : 1.0;
    const VectorXd ds = tech ? norm_subgradient(x_prev, u_.norm) : VectorXd::Zero(x_prev.size());
    std::vector<double> vals, probs;
    std::vector<VectorXd> grads;
    for (int ch : pn.children) {
        const auto& c = tree_.node(ch);
        StageData d = problem_.data(c.stage, c.outcome);
        const VectorXd base = stage_rhs(d, x_prev);
        const int m = static_cast<int>(base.size());
        const bool perturb = u_.theta * s > 0.0 && m > 0;
        double best = -kInf;
        StageSolve arg;
        int bj = 0, bd = 1;
        for (int j = 0; j < (perturb ? m : 1); ++j)
            for (int delta : {1, -1}) {
                if (!perturb && delta < 0) continue;
                VectorXd rhs = base;
                if (perturb) rhs(j) += u_.theta * delta * s;
                StageSolve r = solve_node(ch, rhs);
                if (r.status != LPStatus::optimal)
                    throw DomainError("stage " + std::to_string(c.stage) + " subproblem " + to_string(r.status) +
                                      " at j=" + std::to_string(j) + ", delta=" + std::to_string(delta));
                if (r.value > best) {
                    best = r.value;
                    arg = r;
                    bj = j;
                    bd = delta;
                }
            }
        const double pinf = arg.pi.size() ? arg.pi.cwiseAbs().maxCoeff() : 0.0;
        VectorXd g = VectorXd::Zero(x_prev.size());
        if (d.B.cols() > 0 && arg.pi.size()) g = -d.B.transpose() * arg.pi;
        double v = best;
        if (perturb) {
            // y'(b - Bx) + theta ||y||_inf s(x) is a minorant for every dual-feasible y
            v += u_.theta * s * (pinf - bd * arg.pi(bj));
            if (tech) g += u_.theta * pinf * ds;
        }
        vals.push_back(v);
        probs.push_back(c.prob);
        grads.push_back(g);
    }
    std::vector<double> w = opt_.avar_alpha < 1.0 ? avar_weights(vals, probs, opt_.avar_alpha) : probs;
    for (std::size_t k = 0; k < vals.size(); ++k) {
        if (w[k] == 0.0) continue;
        out.value += w[k] * vals[k];
        out.gradient += w[k] * grads[k];
    }
    return out;
}

RobustRecursion::Eval RobustRecursion::stage_cost_to_go(int t, const VectorXd& x_prev) {
    if (t < 2 || t > problem_.num_stages()) throw DomainError("stage out of range");
    return cost_to_go(tree_.stage_nodes(t - 1).front(), x_prev);
}

StageSolve RobustRecursion::solve_node(int node, const VectorXd& rhs) {
    const auto& nd = tree_.node(node);
    return solve_with_data(node, problem_.data(nd.stage, nd.outcome), rhs);
}

StageSolve RobustRecursion::solve_with_data(int node, const StageData& d, const VectorXd& rhs) {
    const auto& nd = tree_.node(node);
    if (nd.children.empty()) {
        ++lp_count_;
        return solve_stage_lp(d, rhs, nullptr, 0.0);
    }
    std::vector<Cut>& pool = pools_[pool_key(node)];
    StageSolve best;
    best.upper = kInf;
    for (int iter = 0; iter < 20000; ++iter) {
        ++lp_count_;
        StageSolve r = solve_stage_lp(d, rhs, &pool, opt_.floor);
        if (r.status == LPStatus::infeasible) return r;
        if (r.status == LPStatus::unbounded) {
            if (!pool.empty()) return r;
            // no model yet and c'x unbounded: anchor a first cut at a feasible point
            StageData flat = d;
            flat.c.setZero();
            r = solve_stage_lp(flat, rhs, nullptr, 0.0);
            if (r.status != LPStatus::optimal) return r;
            Eval f = cost_to_go(node, r.x);
            pool.push_back({nd.stage + 1, f.value, f.gradient, r.x, iter});
            continue;
        }
        const double lb = r.value;
        Eval f = cost_to_go(node, r.x);
        const double ub = d.c.dot(r.x) + f.value;
        if (ub < best.upper) {
            best.upper = ub;
            best.x = r.x;
        }
        if (best.upper - lb <= opt_.tol * (1.0 + std::abs(best.upper))) {
            best.status = LPStatus::optimal;
            best.value = lb;
            best.pi = r.pi;
            return best;
        }
        pool.push_back({nd.stage + 1, f.value, f.gradient, r.x, iter});
    }
    throw DomainError("nested cutting planes did not converge at node " + std::to_string(node));
}

double RobustRecursion::root_value() {
    StageData d = problem_.data(1, tree_.root().outcome);
    StageSolve r = solve_node(tree_.root().id, d.b);
    if (r.status != LPStatus::optimal) throw DomainError("first-stage problem " + to_string(r.status));
    return r.value;
}

Policy RobustRecursion::policy() {
    Policy pol;
    pol.tree = tree_;
    pol.rule = Extension::resolve;
    for (const auto& node : tree_.nodes()) {
        StageData d = problem_.data(node.stage, node.outcome);
        VectorXd prev = node.parent < 0 ? VectorXd() : pol.decisions.at(node.parent);
        StageSolve r = solve_node(node.id, stage_rhs(d, prev));
        if (r.status != LPStatus::optimal)
            throw DomainError("nominal subproblem at node " + std::to_string(node.id) + " " + to_string(r.status));
        pol.decisions[node.id] = r.x;
        pol.continuation[node.id] = cost_to_go(node.id, r.x).value;
    }
    return pol;
}

// ---------------------------------------------------------------------------

ExactResult exact_solve_small(const MultistageProblem& problem, const UncertaintySpec& u, const ExactOptions& opt) {
    problem.validate();
    u.validate();
    ScenarioTree tree = problem.tree();
    check_size(problem, tree, opt);
    if (problem.location == Location::objective) {
        if (opt.avar_alpha < 1.0) throw DomainError("AVaR aggregation is supported for rhs / technology uncertainty");
        if (u.box_support) throw DomainError("objective reformulation requires the whole space as support");
        const double tol = 1e-9;
        if (u.mode == Mode::hard && std::isfinite(u.p)) {
            auto soft = [&](double lambda) {
                try {
                    return objective_extensive(problem, UncertaintySpec::soft(u.p, lambda, u.norm), tol).value;
                } catch (const DomainError&) {
                    return kInf;  // p = 1 with lambda below the dual-norm bound
                }
            };
            auto best = hard_from_soft(soft, u.theta, u.p);
            ExactResult r = objective_extensive(problem, UncertaintySpec::soft(u.p, best.lambda, u.norm), tol);
            r.value = best.value;
            return r;
        }
        return objective_extensive(problem, u, tol);
    }
    if (problem.location == Location::rhs && u.mode == Mode::hard && u.p == 1.0) {
        auto p1 = solve_rhs_p1(problem, u);
        return {p1.value, p1.policy, nullptr};
    }
    auto rec = std::make_shared<RobustRecursion>(problem, u, opt);
    ExactResult out;
    out.value = rec->root_value();
    out.policy = rec->policy();
    out.recursion = rec;
    return out;
}

std::vector<VectorXd> best_insample_policy(const MultistageProblem& problem, const Policy& policy,
                                           const std::vector<VectorXd>& realized, const UncertaintySpec& u) {
    if (problem.location != Location::objective)
        throw DomainError("best in-sample selection is defined for objective uncertainty");
    const ScenarioTree& tree = policy.tree;
    if (static_cast<int>(realized.size()) != tree.stages() - 1)
        throw DomainError("realized path must hold outcomes for stages 2..T");
    std::vector<VectorXd> out{policy.decisions.at(tree.root().id)};
    int node = tree.root().id;
    for (int t = 2; t <= tree.stages(); ++t) {
        const VectorXd& c = realized[t - 2];
        int pick = -1;
        double best = kInf;
        for (int ch : tree.node(node).children) {
            const auto& cn = tree.node(ch);
            const double dist = norm_of(cn.outcome - c, u.norm);
            const VectorXd& x = policy.decisions.at(ch);
            const double base = problem.data(t, cn.outcome).c.dot(x) + policy.continuation.at(ch);
            double score;
            if (u.mode == Mode::hard) {
                if (dist > u.theta * (1.0 + 1e-12) + 1e-12) continue;
                score = base + objective_regularizer(x, u);
            } else {
                score = base + u.lambda * std::pow(dist, u.p);
            }
            if (score < best) {
                best = score;
                pick = ch;
            }
        }
        if (pick < 0)
            throw DomainError("no in-sample outcome within the radius of the realized stage-" + std::to_string(t) +
                              " outcome");
        out.push_back(policy.decisions.at(pick));
        node = pick;
    }
    return out;
}

}  // namespace ndro
