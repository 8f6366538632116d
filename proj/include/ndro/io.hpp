#pragma once

#include "ndro/model.hpp"
#include "ndro/scenario_tree.hpp"

#include "json.hpp"

#include <map>
#include <string>

namespace ndro {

using json = nlohmann::json;

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

VectorXd vector_from_json(const json& j);
json vector_to_json(const VectorXd& v);
MatrixXd matrix_from_json(const json& j);
json matrix_to_json(const MatrixXd& m);

json tree_to_json(const ScenarioTree& tree);

struct TreeImport {
    ScenarioTree tree;
    int pruned = 0;  // zero-probability nodes dropped (with their subtrees)
};
/// Import tolerance on probability sums is 1e-9.
TreeImport tree_from_json(const json& j);

json marginals_to_json(const StagewiseMarginals& m);
StagewiseMarginals marginals_from_json(const json& j);

/// Coupling weights indexed by (leaf of A, leaf of B) in breadth-first leaf order.
json coupling_to_json(const MatrixXd& gamma);
MatrixXd coupling_from_json(const json& j);

/// Decisions keyed by node id.
json decisions_to_json(const std::map<int, VectorXd>& decisions);
std::map<int, VectorXd> decisions_from_json(const json& j);

/// Stage templates, location and (optionally) the nominal data:
/// {"format": 1, "location": "rhs", "stages": [{"A", "B", "b", "c", "free", "binding", "binding_matrix"}],
///  "tree": {...} | "marginals": {...}}. Missing B means zeros; a missing nominal yields an empty tree.
json problem_to_json(const MultistageProblem& problem);
MultistageProblem problem_from_json(const json& j);

}  // namespace ndro
