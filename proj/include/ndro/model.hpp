#pragma once

#include "ndro/common.hpp"
#include "ndro/lp.hpp"
#include "ndro/scenario_tree.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ndro {

/// Which stage coefficient the outcome xi_t feeds.
enum class Location { objective, rhs, technology };

Location parse_location(const std::string& s);
std::string to_string(Location l);

enum class Binding { identity, none, matrix };

/// Stage data template. The uncertain coefficient (c_t, b_t or B_t flattened
/// row-major, chosen by the problem's Location) equals base + M xi_t, with M
/// the identity, zero, or an explicit matrix.
struct StageTemplate {
    MatrixXd A;                 // m x n
    MatrixXd B;                 // m x n_prev (no columns at stage 1)
    VectorXd b;                 // m
    VectorXd c;                 // n
    std::vector<bool> free;     // empty: all decisions nonnegative
    Binding binding = Binding::identity;
    MatrixXd binding_matrix;    // used when binding == matrix

    int rows() const { return static_cast<int>(A.rows()); }
    int cols() const { return static_cast<int>(A.cols()); }
};

/// Instantiated stage data for one outcome.
struct StageData {
    MatrixXd A, B;
    VectorXd b, c;
    std::vector<bool> free;
};

using Nominal = std::variant<ScenarioTree, StagewiseMarginals>;

struct MultistageProblem {
    Location location = Location::rhs;
    std::vector<StageTemplate> stages;  // stages[0] is stage 1
    Nominal nominal;

    int num_stages() const { return static_cast<int>(stages.size()); }
    const StageTemplate& stage(int t) const { return stages.at(t - 1); }

    /// Data of stage t for outcome xi (the stage's own outcome).
    StageData data(int t, const VectorXd& xi) const;

    /// Size of the uncertain coefficient at stage t (d_t in coefficient space).
    int coefficient_size(int t) const;

    /// Nominal scenario tree (the product tree when marginals are given).
    ScenarioTree tree() const;
    bool stagewise() const { return std::holds_alternative<StagewiseMarginals>(nominal); }
    const StagewiseMarginals& marginals() const;

    /// Structural checks; throws DomainError.
    void validate() const;
};

enum class Mode { hard, soft };

/// Ball order p, radius (hard) or penalty (soft), and the norm on Xi_t.
struct UncertaintySpec {
    double p = kInf;
    Mode mode = Mode::hard;
    double theta = 0.0;
    double lambda = 0.0;
    Norm norm = Norm::l1;
    bool box_support = false;  // Xi_t restricted to [box_lo, box_hi]^d instead of the whole space
    double box_lo = -kInf, box_hi = kInf;

    static UncertaintySpec hard_inf(double theta, Norm norm = Norm::l1) {
        UncertaintySpec u;
        u.theta = theta;
        u.norm = norm;
        return u;
    }
    static UncertaintySpec soft(double p, double lambda, Norm norm = Norm::l1) {
        UncertaintySpec u;
        u.p = p;
        u.mode = Mode::soft;
        u.lambda = lambda;
        u.norm = norm;
        return u;
    }
    void validate() const;
};

/// Affine minorant x -> intercept + gradient'(x - anchor).
struct Cut {
    int stage = 0;
    double intercept = 0.0;
    VectorXd gradient;
    VectorXd anchor;
    int iteration = 0;

    double operator()(const VectorXd& x) const { return intercept + gradient.dot(x - anchor); }
};

/// Per-stage cut collections with floors; stage t approximates E Q_t(x_{t-1}).
struct ValueApprox {
    std::vector<std::vector<Cut>> cuts;  // cuts[t] for t = 2..T (entries 0 and 1 unused)
    std::vector<double> floors;          // floors[t]

    ValueApprox() = default;
    ValueApprox(int stages, double floor);
    int num_stages() const { return static_cast<int>(cuts.size()) - 1; }
    double eval(int t, const VectorXd& x) const;
    std::size_t total_cuts() const;
};

/// Result of min c'x + F(x) over {A x = rhs} with a continuation F.
struct StageSolve {
    LPStatus status = LPStatus::optimal;
    double value = 0.0;   // lower bound (exact for LP continuations)
    double upper = 0.0;   // objective at the returned decision with F evaluated exactly
    VectorXd x;
    VectorXd pi;          // duals of the A rows
};

/// min c'x + max(floor, cuts(x)) over {A x = rhs}; without cuts the plain LP.
/// Infeasible or unbounded subproblems are reported through status.
StageSolve solve_stage_lp(const StageData& d, const VectorXd& rhs, const std::vector<Cut>* cuts, double floor);

/// Right-hand side b - B x_prev.
VectorXd stage_rhs(const StageData& d, const VectorXd& x_prev);

/// Residual check of A x + B x_prev = b and sign constraints.
bool stage_feasible(const StageData& d, const VectorXd& x_prev, const VectorXd& x, double tol = 1e-8);

}  // namespace ndro
