#include "ndro/scenario_tree.hpp"

#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <unordered_map>

namespace ndro {

double DiscreteDistribution::mean_of(const std::vector<double>& values) const {
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) s += probs[i] * values[i];
    return s;
}

ScenarioTree ScenarioTree::create(int stages, std::vector<int> dims, std::vector<TreeNode> nodes,
                                  double tol) {
    if (stages < 1) throw DomainError("tree needs at least one stage");
    if (static_cast<int>(dims.size()) != stages) throw DomainError("dims length differs from stage count");
    if (nodes.empty()) throw DomainError("tree has no nodes");

    std::unordered_map<int, int> index;
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
        if (!index.emplace(nodes[i].id, i).second)
            throw DomainError("duplicate node id " + std::to_string(nodes[i].id));
    }
    int root = -1;
    std::vector<std::vector<int>> kids(nodes.size());
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
        if (nodes[i].parent < 0) {
            if (root >= 0) throw DomainError("tree has more than one root");
            root = i;
        } else {
            auto it = index.find(nodes[i].parent);
            if (it == index.end())
                throw DomainError("node " + std::to_string(nodes[i].id) + " has unknown parent");
            kids[it->second].push_back(i);
        }
    }
    if (root < 0) throw DomainError("tree has no root");

    ScenarioTree tree;
    tree.stages_ = stages;
    tree.dims_ = std::move(dims);
    std::vector<int> new_id(nodes.size(), -1);
    std::deque<int> queue{root};
    new_id[root] = 0;
    std::vector<int> order;
    while (!queue.empty()) {
        int i = queue.front();
        queue.pop_front();
        order.push_back(i);
        for (int k : kids[i]) {
            new_id[k] = static_cast<int>(order.size() + queue.size());
            queue.push_back(k);
        }
    }
    if (order.size() != nodes.size()) throw DomainError("tree contains unreachable nodes");

    tree.nodes_.resize(nodes.size());
    for (int i : order) {
        TreeNode n = std::move(nodes[i]);
        int id = new_id[i];
        n.id = id;
        n.parent = n.parent < 0 ? -1 : new_id[index.at(n.parent)];
        n.children.clear();
        for (int k : kids[i]) n.children.push_back(new_id[k]);
        tree.nodes_[id] = std::move(n);
    }
    tree.by_stage_.assign(stages, {});
    for (const auto& n : tree.nodes_) {
        if (n.stage < 1 || n.stage > stages)
            throw DomainError("node " + std::to_string(n.id) + " has stage out of range");
        tree.by_stage_[n.stage - 1].push_back(n.id);
    }
    validate(tree, tol);
    return tree;
}

const TreeNode& ScenarioTree::node(int id) const {
    if (id < 0 || id >= size()) throw DomainError("unknown node id " + std::to_string(id));
    return nodes_[id];
}

std::vector<int> ScenarioTree::path(int id) const {
    std::vector<int> p;
    for (int k = id; k >= 0; k = node(k).parent) p.push_back(k);
    return {p.rbegin(), p.rend()};
}

int ScenarioTree::ancestor(int id, int stage) const {
    int k = id;
    while (node(k).stage > stage) k = node(k).parent;
    if (node(k).stage != stage) throw DomainError("no ancestor at requested stage");
    return k;
}

double ScenarioTree::path_prob(int id) const {
    double p = 1.0;
    for (int k = id; k >= 0; k = node(k).parent) p *= node(k).prob;
    return p;
}

DiscreteDistribution ScenarioTree::conditional(int id) const {
    const auto& n = node(id);
    if (n.children.empty()) throw DomainError("conditional requested at leaf " + std::to_string(id));
    DiscreteDistribution d;
    for (int k : n.children) {
        d.atoms.push_back(nodes_[k].outcome);
        d.probs.push_back(nodes_[k].prob);
    }
    return d;
}

SamplePath ScenarioTree::leaf_path(int leaf) const {
    SamplePath sp;
    auto ids = path(leaf);
    for (std::size_t k = 1; k < ids.size(); ++k) sp.outcomes.push_back(nodes_[ids[k]].outcome);
    sp.weight = path_prob(leaf);
    return sp;
}

bool ScenarioTree::operator==(const ScenarioTree& o) const {
    if (stages_ != o.stages_ || dims_ != o.dims_ || nodes_.size() != o.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& a = nodes_[i];
        const auto& b = o.nodes_[i];
        if (a.id != b.id || a.stage != b.stage || a.parent != b.parent || a.prob != b.prob ||
            a.children != b.children || a.outcome.size() != b.outcome.size() || a.outcome != b.outcome)
            return false;
    }
    return true;
}

void validate(const ScenarioTree& tree, double tol) {
    const int T = tree.stages();
    if (tree.size() == 0) throw DomainError("empty tree");
    const auto& root = tree.root();
    if (root.stage != 1) throw DomainError("root must be at stage 1");
    if (root.parent != -1) throw DomainError("root has a parent");
    if (std::abs(root.prob - 1.0) > tol) throw DomainError("root probability must be 1");
    for (const auto& n : tree.nodes()) {
        const std::string who = "node " + std::to_string(n.id);
        if (n.outcome.size() != tree.dim(n.stage)) throw DomainError(who + ": outcome dimension mismatch");
        if (!n.outcome.allFinite()) throw DomainError(who + ": non-finite outcome");
        if (n.parent >= 0) {
            if (tree.node(n.parent).stage != n.stage - 1) throw DomainError(who + ": parent stage mismatch");
            if (!(n.prob > 0.0) || n.prob > 1.0 + tol)
                throw DomainError(who + ": transition probability must lie in (0,1]");
        }
        if (n.children.empty()) {
            if (n.stage != T) throw DomainError(who + ": leaf before the final stage");
        } else {
            double s = 0.0;
            for (int k : n.children) s += tree.node(k).prob;
            if (std::abs(s - 1.0) > tol) throw DomainError(who + ": children probabilities do not sum to 1");
        }
    }
}

void StagewiseMarginals::validate(double tol) const {
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const auto& d = stages[k];
        const std::string who = "stage " + std::to_string(k + 2);
        if (d.atoms.empty()) throw DomainError(who + ": empty support");
        if (d.atoms.size() != d.probs.size()) throw DomainError(who + ": atoms/probs length mismatch");
        double s = 0.0;
        for (double p : d.probs) {
            if (!(p >= 0.0)) throw DomainError(who + ": negative probability");
            s += p;
        }
        if (std::abs(s - 1.0) > tol) throw DomainError(who + ": probabilities do not sum to 1");
        for (const auto& a : d.atoms)
            if (a.size() != d.atoms.front().size()) throw DomainError(who + ": atom dimension mismatch");
    }
}

ScenarioTree build_fan(const VectorXd& root_outcome, const std::vector<SamplePath>& paths,
                       const std::vector<double>& probs) {
    if (paths.empty()) throw DomainError("build_fan: no paths");
    if (paths.size() != probs.size()) throw DomainError("build_fan: paths/probs length mismatch");
    double s = 0.0;
    for (double p : probs) s += p;
    if (std::abs(s - 1.0) > 1e-9) throw DomainError("build_fan: probabilities do not sum to 1");
    const std::size_t L = paths.front().outcomes.size();
    std::vector<int> dims{static_cast<int>(root_outcome.size())};
    for (const auto& v : paths.front().outcomes) dims.push_back(static_cast<int>(v.size()));
    for (const auto& p : paths) {
        if (p.outcomes.size() != L) throw DomainError("build_fan: paths differ in length");
        for (std::size_t k = 0; k < L; ++k)
            if (p.outcomes[k].size() != dims[k + 1]) throw DomainError("build_fan: dimension mismatch");
    }
    std::vector<TreeNode> nodes;
    nodes.push_back({0, 1, -1, 1.0, root_outcome, {}});
    int next = 1;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        int parent = 0;
        for (std::size_t k = 0; k < L; ++k) {
            double pr = k == 0 ? probs[i] : 1.0;
            nodes.push_back({next, static_cast<int>(k) + 2, parent, pr, paths[i].outcomes[k], {}});
            parent = next++;
        }
    }
    return ScenarioTree::create(static_cast<int>(L) + 1, dims, std::move(nodes), 1e-9);
}

ScenarioTree build_fan(const std::vector<SamplePath>& paths, const std::vector<double>& probs) {
    if (paths.empty() || paths.front().outcomes.empty()) throw DomainError("build_fan: no paths");
    return build_fan(VectorXd::Zero(paths.front().outcomes.front().size()), paths, probs);
}

ScenarioTree build_product(const StagewiseMarginals& m) {
    m.validate();
    const int T = m.num_stages();
    std::vector<int> dims{static_cast<int>(m.stage1.size())};
    for (const auto& d : m.stages) dims.push_back(static_cast<int>(d.atoms.front().size()));
    std::vector<TreeNode> nodes;
    nodes.push_back({0, 1, -1, 1.0, m.stage1, {}});
    std::vector<int> frontier{0};
    int next = 1;
    for (int t = 2; t <= T; ++t) {
        const auto& d = m.at(t);
        std::vector<int> nf;
        for (int parent : frontier) {
            for (int i = 0; i < d.size(); ++i) {
                if (d.probs[i] <= 0.0) throw DomainError("build_product: zero-probability atom");
                nodes.push_back({next, t, parent, d.probs[i], d.atoms[i], {}});
                nf.push_back(next++);
            }
        }
        frontier = std::move(nf);
    }
    return ScenarioTree::create(T, dims, std::move(nodes));
}

ScenarioTree adapt_empirical(const VectorXd& root_outcome, const std::vector<SamplePath>& paths,
                             double grid_width) {
    if (paths.empty()) throw DomainError("adapt_empirical: empty path set");
    if (!(grid_width > 0.0)) throw DomainError("adapt_empirical: grid width must be positive");
    const std::size_t L = paths.front().outcomes.size();
    std::vector<int> dims{static_cast<int>(root_outcome.size())};
    for (const auto& v : paths.front().outcomes) dims.push_back(static_cast<int>(v.size()));
    for (const auto& p : paths) {
        if (p.outcomes.size() != L) throw DomainError("adapt_empirical: paths differ in length");
        for (std::size_t k = 0; k < L; ++k)
            if (p.outcomes[k].size() != dims[k + 1]) throw DomainError("adapt_empirical: dimension mismatch");
    }
    const double N = static_cast<double>(paths.size());
    // snapped[i][k]: path i, stage k + 2
    std::vector<std::vector<VectorXd>> snapped(paths.size(), std::vector<VectorXd>(L));
    for (std::size_t k = 0; k < L; ++k) {
        VectorXd mean = VectorXd::Zero(dims[k + 1]);
        for (const auto& p : paths) mean += p.outcomes[k];
        mean /= N;
        for (std::size_t i = 0; i < paths.size(); ++i) {
            VectorXd v = paths[i].outcomes[k];
            for (Eigen::Index j = 0; j < v.size(); ++j) {
                double cell = std::ceil((v(j) - mean(j)) / grid_width) - 1.0;
                v(j) = mean(j) + grid_width * (cell + 0.5);
            }
            snapped[i][k] = v;
        }
    }
    struct Proto {
        int parent;
        int stage;
        VectorXd outcome;
        int count;
        std::vector<int> kids;
    };
    std::vector<Proto> proto{{-1, 1, root_outcome, static_cast<int>(paths.size()), {}}};
    for (std::size_t i = 0; i < paths.size(); ++i) {
        int cur = 0;
        for (std::size_t k = 0; k < L; ++k) {
            int found = -1;
            for (int c : proto[cur].kids)
                if (proto[c].outcome == snapped[i][k]) { found = c; break; }
            if (found < 0) {
                found = static_cast<int>(proto.size());
                proto.push_back({cur, static_cast<int>(k) + 2, snapped[i][k], 0, {}});
                proto[cur].kids.push_back(found);
            }
            ++proto[found].count;
            cur = found;
        }
    }
    std::vector<TreeNode> nodes;
    for (int i = 0; i < static_cast<int>(proto.size()); ++i) {
        const auto& q = proto[i];
        double pr = q.parent < 0 ? 1.0 : static_cast<double>(q.count) / proto[q.parent].count;
        nodes.push_back({i, q.stage, q.parent, pr, q.outcome, {}});
    }
    return ScenarioTree::create(static_cast<int>(L) + 1, dims, std::move(nodes), 1e-9);
}

std::vector<SamplePath> sample_paths(const ScenarioTree& tree, int count, std::uint64_t seed) {
    if (count < 1) throw DomainError("sample_paths: count must be >= 1");
    Rng rng(seed);
    std::vector<SamplePath> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) {
        SamplePath sp;
        int cur = 0;
        while (!tree.is_leaf(cur)) {
            const auto& kids = tree.node(cur).children;
            std::vector<double> pr;
            for (int k : kids) pr.push_back(tree.node(k).prob);
            cur = kids[rng.categorical(pr)];
            sp.outcomes.push_back(tree.node(cur).outcome);
        }
        out.push_back(std::move(sp));
    }
    return out;
}

std::vector<SamplePath> sample_paths(const StagewiseMarginals& m, int count, std::uint64_t seed) {
    if (count < 1) throw DomainError("sample_paths: count must be >= 1");
    m.validate(1e-9);
    Rng rng(seed);
    std::vector<SamplePath> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) {
        SamplePath sp;
        for (const auto& d : m.stages) sp.outcomes.push_back(d.atoms[rng.categorical(d.probs)]);
        out.push_back(std::move(sp));
    }
    return out;
}

}  // namespace ndro
