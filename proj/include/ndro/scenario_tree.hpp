#pragma once

#include "ndro/common.hpp"

#include <cstdint>
#include <vector>

namespace ndro {

struct DiscreteDistribution {
    std::vector<VectorXd> atoms;
    std::vector<double> probs;

    int size() const { return static_cast<int>(atoms.size()); }
    double mean_of(const std::vector<double>& values) const;
};

struct TreeNode {
    int id = 0;
    int stage = 1;    // 1-based
    int parent = -1;  // -1 for the root
    double prob = 1.0;  // transition probability from the parent
    VectorXd outcome;
    std::vector<int> children;
};

/// Outcomes xi_2..xi_T of one scenario; xi_1 is the tree root.
struct SamplePath {
    std::vector<VectorXd> outcomes;
    double weight = 1.0;
};

/// Finite scenario tree with dense breadth-first node ids. Immutable.
class ScenarioTree {
public:
    ScenarioTree() = default;

    /// Builds and validates a tree from nodes with arbitrary unique ids.
    /// Ids are reassigned breadth-first; children keep their input order.
    static ScenarioTree create(int stages, std::vector<int> dims, std::vector<TreeNode> nodes,
                               double tol = 1e-12);

    int stages() const { return stages_; }
    const std::vector<int>& dims() const { return dims_; }
    int dim(int stage) const { return dims_.at(stage - 1); }
    int size() const { return static_cast<int>(nodes_.size()); }
    const TreeNode& node(int id) const;
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& root() const { return nodes_.front(); }
    const std::vector<int>& stage_nodes(int stage) const { return by_stage_.at(stage - 1); }
    const std::vector<int>& leaves() const { return by_stage_.back(); }
    bool is_leaf(int id) const { return node(id).children.empty(); }

    /// Node ids root..id.
    std::vector<int> path(int id) const;
    /// Ancestor of id at the given stage (id itself at its own stage).
    int ancestor(int id, int stage) const;
    /// Unconditional probability of reaching id.
    double path_prob(int id) const;

    /// Children outcomes with transition probabilities.
    DiscreteDistribution conditional(int id) const;

    /// Outcomes xi_2..xi_T along the path to a leaf.
    SamplePath leaf_path(int leaf) const;

    bool operator==(const ScenarioTree& other) const;

private:
    int stages_ = 0;
    std::vector<int> dims_;
    std::vector<TreeNode> nodes_;
    std::vector<std::vector<int>> by_stage_;
};

/// Re-checks every structural invariant; throws DomainError on violation.
void validate(const ScenarioTree& tree, double tol = 1e-12);

/// Stagewise-independent nominal distribution.
struct StagewiseMarginals {
    VectorXd stage1;
    std::vector<DiscreteDistribution> stages;  // stages[k] describes stage k + 2

    int num_stages() const { return 1 + static_cast<int>(stages.size()); }
    const DiscreteDistribution& at(int stage) const { return stages.at(stage - 2); }
    void validate(double tol = 1e-12) const;
};

ScenarioTree build_fan(const VectorXd& root_outcome, const std::vector<SamplePath>& paths,
                       const std::vector<double>& probs);
/// Root outcome defaults to the zero vector with the stage-2 dimension.
ScenarioTree build_fan(const std::vector<SamplePath>& paths, const std::vector<double>& probs);

ScenarioTree build_product(const StagewiseMarginals& m);

/// Nearest-centroid clustering of equally weighted paths on a grid of spacing r
/// whose cells are anchored at the per-stage coordinate-wise sample mean.
ScenarioTree adapt_empirical(const VectorXd& root_outcome, const std::vector<SamplePath>& paths,
                             double grid_width);

std::vector<SamplePath> sample_paths(const ScenarioTree& tree, int count, std::uint64_t seed);
std::vector<SamplePath> sample_paths(const StagewiseMarginals& m, int count, std::uint64_t seed);

}  // namespace ndro
