#pragma once

#include "ndro/dro_dp.hpp"
#include "ndro/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ndro {

struct SddpConfig {
    int paths = 1;             // forward paths per iteration (K)
    int max_iter = 200;
    int window = 10;           // stop when |LB_k - LB_{k-window}| <= rtol max(1, |LB_k|)
    double rtol = 1e-5;
    std::uint64_t seed = 0;
    std::vector<double> floors;  // per stage t = 2..T at index t - 2; empty: default_floor everywhere
    double default_floor = -1e9;
    double avar_alpha = 1.0;     // < 1: AVaR over the stage atoms instead of the expectation
    double dedup_tol = 1e-10;

    void validate(int stages) const;
};

/// Trial points of one forward pass: x[k][t - 1] is stage t's decision on path k, t = 1..T-1.
using TrialPoints = std::vector<std::vector<VectorXd>>;

/// Empty cut model with the configured floors.
ValueApprox initial_approx(const MultistageProblem& problem, const SddpConfig& config);

/// Stage-1 problem under the current model: value is the lower bound.
StageSolve first_stage(const MultistageProblem& problem, const ValueApprox& approx);

/// Forward pass along sampled outcome paths (xi_2..xi_T each); the trial point
/// at each stage is the solution of the worst perturbed subproblem.
TrialPoints forward_pass(const MultistageProblem& problem, const UncertaintySpec& u, const ValueApprox& approx,
                         const std::vector<SamplePath>& paths);

/// Backward pass from stage T down to 2, one aggregated cut per trial point and stage.
/// Returns the number of cuts appended (dominated cuts are dropped).
int backward_pass(const MultistageProblem& problem, const UncertaintySpec& u, ValueApprox& approx,
                  const TrialPoints& trials, const SddpConfig& config, int iteration = 0);

struct TracePoint {
    int iteration = 0;
    double lower_bound = 0.0;
    double wallclock_ms = 0.0;
};

struct SddpResult {
    VectorXd first_stage;
    std::vector<TracePoint> trace;
    ValueApprox approx;
    bool converged = false;
    std::vector<std::string> warnings;

    double lower_bound() const { return trace.empty() ? -kInf : trace.back().lower_bound; }
};

/// Requires stagewise-independent nominal data and uncertainty in B_t (or rhs with the
/// l1 ball, or theta = 0). Non-convergence is reported through `converged`.
SddpResult run_sddp(const MultistageProblem& problem, const UncertaintySpec& u, const SddpConfig& config = {});

}  // namespace ndro
