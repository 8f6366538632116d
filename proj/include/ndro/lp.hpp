#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ndro {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class LPStatus { optimal, infeasible, unbounded };

std::string to_string(LPStatus s);

/// @brief Dense linear program
///
///   min  c'x
///   s.t. A_eq x  = b_eq
///        A_ub x <= b_ub
///        x_j >= 0, or x_j free when free[j] is set.
struct LinearProgram {
    VectorXd c;
    MatrixXd A_eq;
    VectorXd b_eq;
    MatrixXd A_ub;
    VectorXd b_ub;
    std::vector<bool> free;  // empty means all variables nonnegative

    LinearProgram() = default;
    explicit LinearProgram(int n);

    int num_vars() const { return static_cast<int>(c.size()); }
    int num_eq() const { return static_cast<int>(A_eq.rows()); }
    int num_ub() const { return static_cast<int>(A_ub.rows()); }
    bool is_free(int j) const { return !free.empty() && free[j]; }

    /// Append one row. The row vector must have num_vars() entries.
    void add_eq(const VectorXd& row, double rhs);
    void add_ub(const VectorXd& row, double rhs);

    /// Throws std::invalid_argument on inconsistent dimensions or non-finite data.
    void validate() const;
};

/// Duals follow L = c'x + y'(b_eq - A_eq x) + mu'(b_ub - A_ub x), so at an
/// optimum A_eq'y + A_ub'mu <= c (equality on free columns) and mu <= 0.
struct LPSolution {
    LPStatus status = LPStatus::infeasible;
    VectorXd x;
    double objective = 0.0;
    VectorXd y_eq;
    VectorXd y_ub;
    int iterations = 0;
};

struct SimplexOptions {
    double pivot_tol = 1e-7;
    double feas_tol = 1e-9;
    double opt_tol = 1e-9;
    int refactor_every = 64;
    int max_iterations = 0;  // 0: automatic cap
};

/// Two-phase revised simplex with an explicit dense basis inverse.
LPSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opt = {});

}  // namespace ndro
