#pragma once

#include "ndro/common.hpp"
#include "ndro/scenario_tree.hpp"

#include <vector>

namespace ndro {

/// Order p (kInf allowed) and the ground norm applied stage by stage.
struct DistanceSpec {
    double p = 1.0;
    Norm norm = Norm::l1;
};

enum class Direction { a_to_b, b_to_a };

/// Constraint family of a transport problem between two trees.
enum class PlanClass { plain, causal, bicausal };

struct TransportResult {
    double value = 0.0;
    MatrixXd coupling;
};

/// Optimal transport between two discrete distributions.
/// p finite: (min sum gamma_ij cost_ij^p)^(1/p); p = inf: minimal bottleneck cost.
TransportResult discrete_wasserstein(const std::vector<double>& mu, const std::vector<double>& nu,
                                     const MatrixXd& cost, double p);

/// Unconditional probabilities of the leaves in breadth-first order.
std::vector<double> leaf_probs(const ScenarioTree& tree);

/// Path distance between two leaves: (sum_t |xi_t - xi'_t|^p)^(1/p), or the stage max for p = inf.
double path_distance(const ScenarioTree& a, int leaf_a, const ScenarioTree& b, int leaf_b,
                     const DistanceSpec& spec);
MatrixXd path_cost_matrix(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec);

/// Transport cost of a given plan: (sum gamma d^p)^(1/p), or the max of d over the support.
double plan_cost(const MatrixXd& gamma, const ScenarioTree& a, const ScenarioTree& b,
                 const DistanceSpec& spec);

/// Wasserstein distance between the path distributions of two trees.
double wasserstein_distance(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec);

bool is_causal(const MatrixXd& gamma, const ScenarioTree& a, const ScenarioTree& b, Direction dir,
               double tol = 1e-9);
bool is_bicausal(const MatrixXd& gamma, const ScenarioTree& a, const ScenarioTree& b, double tol = 1e-9);

/// Backward recursion over node pairs.
double nested_distance(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec);

/// One LP over all path pairs with linear (bi-)causality constraints; bisection for p = inf.
TransportResult adapted_transport_lp(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec,
                                     PlanClass cls);

double nested_distance_oracle(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec);
double causal_distance(const ScenarioTree& a, const ScenarioTree& b, const DistanceSpec& spec);

}  // namespace ndro
