#pragma once

#include "ndro/model.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ndro {

// ---------------------------------------------------------------------------
// Regularizers and risk measures

/// Coefficient k of the soft objective penalty k ||x||_*^(p/(p-1)), p in (1, inf).
double soft_penalty_coefficient(double p, double lambda);

/// Worst-case objective increment sup_D {D'x - lambda ||D||^p} (soft) or theta ||x||_* (hard, p = inf).
/// Returns kInf for soft p = 1 when ||x||_* > lambda.
double objective_regularizer(const VectorXd& x, const UncertaintySpec& u);

/// AVaR_alpha of a discrete distribution: min_u u + E[(Z - u)_+] / alpha.
double avar_cost_to_go(const std::vector<double>& values, const std::vector<double>& probs, double alpha);

/// Weights w with AVaR = sum w_i z_i (upper tail of mass alpha, ties broken by index).
std::vector<double> avar_weights(const std::vector<double>& values, const std::vector<double>& probs, double alpha);

// ---------------------------------------------------------------------------
// Policies

/// Arguments handed to a policy: current stage and nominal node, the observed
/// (possibly perturbed) outcomes xi_1..xi_t and the previous decisions x_1..x_{t-1}.
struct PolicyQuery {
    int stage = 1;
    int node = 0;
    const std::vector<VectorXd>& history;
    const std::vector<VectorXd>& decisions;
};

using PolicyFn = std::function<VectorXd(const PolicyQuery&)>;

enum class Extension { lookup, resolve, best_in_sample };

/// Decisions on the nominal tree plus the rule that extends them off the tree.
struct Policy {
    ScenarioTree tree;
    std::map<int, VectorXd> decisions;
    std::map<int, double> continuation;  // expected cost-to-go after each node's decision
    Extension rule = Extension::lookup;
    std::shared_ptr<const ValueApprox> approx;
};

/// Ignores the perturbation and returns the decision stored for the nominal node.
PolicyFn lookup_policy(std::map<int, VectorXd> decisions);

/// Re-solves min c_t'x + approx_{t+1}(x) over X_t(x_{t-1}, xi_t) at the observed outcome.
PolicyFn resolve_policy(const MultistageProblem& problem, std::shared_ptr<const ValueApprox> approx);

/// Throws DomainError when an on-tree decision violates its node constraints by more than tol.
void check_policy(const MultistageProblem& problem, const Policy& policy, double tol = 1e-8);

// ---------------------------------------------------------------------------
// Fixed-policy robust risk

struct EvalOptions {
    /// Offsets D tried around each nominal outcome (the grid fallback). Offsets
    /// outside the ball (hard mode) or the support box are skipped; D = 0 is always tried.
    std::vector<VectorXd> grid;
    bool use_grid = false;
    double feas_tol = 1e-8;
};

struct RiskValue {
    double value = 0.0;
    bool lower_bound = false;  // true for the grid fallback
    std::string method;        // "closed-form", "vertices" or "grid"
};

/// Nested worst-case risk of a fixed policy: per nominal child the inner sup
/// over the ball (hard, p = inf) or the penalized sup (soft), averaged over the
/// nominal conditional distribution. Vertex enumeration (rhs, l1 ball) assumes
/// the policy's continuation cost is convex in the outcome, as for re-solve policies.
RiskValue robust_risk_fixed_policy(const MultistageProblem& problem, const PolicyFn& policy,
                                   const UncertaintySpec& u, const EvalOptions& opt = {});
/// Decisions given per nominal node; objective uncertainty uses the closed form.
RiskValue robust_risk_fixed_policy(const MultistageProblem& problem, const std::map<int, VectorXd>& decisions,
                                   const UncertaintySpec& u, const EvalOptions& opt = {});

/// Expectation over nominal paths of the joint sup over the product of per-stage balls (p = inf).
RiskValue wasserstein_sup_risk(const MultistageProblem& problem, const PolicyFn& policy, const UncertaintySpec& u,
                               const EvalOptions& opt = {});
RiskValue wasserstein_sup_risk(const MultistageProblem& problem, const std::map<int, VectorXd>& decisions,
                               const UncertaintySpec& u, const EvalOptions& opt = {});

// ---------------------------------------------------------------------------
// Cost-to-go reformulations

/// Next-stage expected cost used inside a stage problem:
/// solve(d, rhs) returns min d.c'x + F(x) over {d.A x = rhs, sign constraints}.
class Continuation {
public:
    virtual ~Continuation() = default;
    virtual StageSolve solve(const StageData& d, const VectorXd& rhs) = 0;
};

/// F = 0 (last stage).
class NoContinuation : public Continuation {
public:
    StageSolve solve(const StageData& d, const VectorXd& rhs) override;
};

/// F = max(floor, cuts).
class CutContinuation : public Continuation {
public:
    CutContinuation(std::vector<Cut> cuts, double floor) : cuts_(std::move(cuts)), floor_(floor) {}
    StageSolve solve(const StageData& d, const VectorXd& rhs) override;

private:
    std::vector<Cut> cuts_;
    double floor_;
};

struct StageValue {
    double value = 0.0;
    VectorXd x;
    int j = -1;      // worst perturbation (rhs / technology)
    int delta = 0;
    VectorXd pi;     // duals at the worst perturbation
};

/// Regularized stage problem for objective uncertainty, nominal cost d.c:
/// min c'x + reg(x) + max(floor, cuts(x)) over X_t(x_prev).
StageValue cost_to_go_objective(const StageData& d, const VectorXd& x_prev, const std::vector<Cut>* cuts,
                                double floor, const UncertaintySpec& u, double tol = 1e-8);

/// max over (j, delta) of the stage problem with right-hand side b - B x_prev + theta delta s e_j,
/// where s = 1 (rhs) or ||x_prev|| (technology). Ties keep the lowest j, then delta = +1.
StageValue cost_to_go_rhs_inf(const StageData& d, const VectorXd& x_prev, Continuation& cont,
                              const UncertaintySpec& u, Location location);

/// Minimizes lambda theta^p + soft(lambda) over lambda >= 0.
struct SoftToHard {
    double value = 0.0;
    double lambda = 0.0;
};
SoftToHard hard_from_soft(const std::function<double(double)>& soft, double theta, double p,
                          double lambda_start = 1.0, double rtol = 1e-6);

// ---------------------------------------------------------------------------
// Whole-problem solvers

/// Extensive-form LP on the nominal tree (no robustness).
struct SaaResult {
    double value = 0.0;
    std::map<int, VectorXd> decisions;
};
SaaResult saa_extensive(const MultistageProblem& problem);

struct P1Result {
    Policy policy;
    double saa_value = 0.0;
    double kappa = 0.0;               // max over stages of the dual-set radius
    std::vector<double> stage_kappa;  // index t, entries 0 and 1 unused
    double value = 0.0;               // saa_value + theta kappa, or kInf
};
/// p = 1, rhs uncertainty, hard mode.
P1Result solve_rhs_p1(const MultistageProblem& problem, const UncertaintySpec& u);

struct ExactOptions {
    double tol = 1e-10;       // relative gap of the nested cutting-plane solves
    double avar_alpha = 1.0;  // 1: expectation over children; < 1: AVaR
    int max_stages = 4;
    int max_support = 3;
    double floor = -1e9;      // temporary floor while a node has no cuts
};

class RobustRecursion;

struct ExactResult {
    double value = 0.0;
    Policy policy;
    std::shared_ptr<RobustRecursion> recursion;  // rhs / technology only
};

/// Exact robust value on desk-scale instances: the regularized extensive form for
/// objective uncertainty, nested cutting planes over all (j, delta) perturbations
/// for rhs / technology uncertainty with p = inf.
ExactResult exact_solve_small(const MultistageProblem& problem, const UncertaintySpec& u,
                              const ExactOptions& opt = {});

/// Nested worst-case dynamic program for rhs / technology uncertainty, p = inf.
class RobustRecursion {
public:
    RobustRecursion(MultistageProblem problem, UncertaintySpec u, ExactOptions opt = {});

    struct Eval {
        double value = 0.0;
        VectorXd gradient;
    };

    /// Aggregated worst-case cost-to-go of stage t (the children of `parent`) at x_{t-1}.
    Eval cost_to_go(int parent, const VectorXd& x_prev);
    /// Same for the stagewise-independent case, any parent at stage t - 1.
    Eval stage_cost_to_go(int t, const VectorXd& x_prev);

    /// min c'x + F(x) for node `node` (continuation over its children) with the given right-hand side.
    StageSolve solve_node(int node, const VectorXd& rhs);
    /// Same with the node's data replaced by d (an off-tree observation at the node's stage).
    StageSolve solve_with_data(int node, const StageData& d, const VectorXd& rhs);

    /// Root problem value and on-tree decisions (re-solve with nominal data).
    double root_value();
    Policy policy();

    const ScenarioTree& tree() const { return tree_; }
    const MultistageProblem& problem() const { return problem_; }
    std::size_t lp_count() const { return lp_count_; }

private:
    int pool_key(int node) const;
    MultistageProblem problem_;
    UncertaintySpec u_;
    ExactOptions opt_;
    ScenarioTree tree_;
    std::map<int, std::vector<Cut>> pools_;
    std::size_t lp_count_ = 0;
};

/// Best in-sample path selection for objective uncertainty: returns x_1..x_T for a realized cost path c_2..c_T.
std::vector<VectorXd> best_insample_policy(const MultistageProblem& problem, const Policy& policy,
                                           const std::vector<VectorXd>& realized, const UncertaintySpec& u);

}  // namespace ndro
