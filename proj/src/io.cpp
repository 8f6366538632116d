#include "ndro/io.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace ndro {

namespace {

void check_format(const json& j, const char* what) {
    if (!j.is_object()) throw DomainError(std::string(what) + ": expected a JSON object");
    if (j.contains("format") && j.at("format") != 1)
        throw DomainError(std::string(what) + ": unsupported format version");
}

}  // namespace

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DomainError("invalid JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DomainError("cannot write " + path);
    out << j.dump(2) << '\n';
}

VectorXd vector_from_json(const json& j) {
    if (j.is_number()) return VectorXd::Constant(1, j.get<double>());
    if (!j.is_array()) throw DomainError("expected a numeric array");
    VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw DomainError("expected a numeric array");
        v(i) = j[i].get<double>();
    }
    return v;
}

json vector_to_json(const VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array()) throw DomainError("expected an array of rows");
    if (j.empty()) return MatrixXd(0, 0);
    const std::size_t cols = j[0].size();
    MatrixXd m(j.size(), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        VectorXd row = vector_from_json(j[r]);
        if (static_cast<std::size_t>(row.size()) != cols) throw DomainError("ragged matrix rows");
        m.row(r) = row.transpose();
    }
    return m;
}

json matrix_to_json(const MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_to_json(m.row(r).transpose()));
    return a;
}

json tree_to_json(const ScenarioTree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes()) {
        json o{{"id", n.id}, {"stage", n.stage}, {"prob", n.prob}, {"outcome", vector_to_json(n.outcome)}};
        o["parent"] = n.parent < 0 ? json(nullptr) : json(n.parent);
        nodes.push_back(o);
    }
    return json{{"format", 1}, {"stages", tree.stages()}, {"dims", tree.dims()}, {"nodes", nodes}};
}

TreeImport tree_from_json(const json& j) {
    check_format(j, "tree");
    try {
        const int T = j.at("stages").get<int>();
        std::vector<int> dims = j.at("dims").get<std::vector<int>>();
        std::vector<TreeNode> nodes;
        for (const auto& o : j.at("nodes")) {
            TreeNode n;
            n.id = o.at("id").get<int>();
            n.stage = o.at("stage").get<int>();
            n.parent = (!o.contains("parent") || o["parent"].is_null()) ? -1 : o["parent"].get<int>();
            n.prob = o.value("prob", 1.0);
            n.outcome = vector_from_json(o.at("outcome"));
            nodes.push_back(std::move(n));
        }
        // prune zero-probability nodes together with their descendants
        std::set<int> dropped;
        for (const auto& n : nodes)
            if (n.parent >= 0 && n.prob == 0.0) dropped.insert(n.id);
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& n : nodes)
                if (n.parent >= 0 && dropped.count(n.parent) && dropped.insert(n.id).second) grew = true;
        }
        std::vector<TreeNode> kept;
        for (auto& n : nodes)
            if (!dropped.count(n.id)) kept.push_back(std::move(n));
        TreeImport out;
        out.pruned = static_cast<int>(dropped.size());
        out.tree = ScenarioTree::create(T, dims, std::move(kept), 1e-9);
        return out;
    } catch (const json::exception& e) {
        throw DomainError(std::string("malformed tree JSON: ") + e.what());
    }
}

json marginals_to_json(const StagewiseMarginals& m) {
    json st = json::array();
    for (const auto& d : m.stages) {
        json outs = json::array();
        for (const auto& a : d.atoms) outs.push_back(vector_to_json(a));
        st.push_back(json{{"outcomes", outs}, {"probs", d.probs}});
    }
    return json{{"format", 1}, {"stage1", vector_to_json(m.stage1)}, {"marginals", st}};
}

StagewiseMarginals marginals_from_json(const json& j) {
    check_format(j, "marginals");
    try {
        StagewiseMarginals m;
        m.stage1 = vector_from_json(j.at("stage1"));
        for (const auto& s : j.at("marginals")) {
            DiscreteDistribution d;
            for (const auto& a : s.at("outcomes")) d.atoms.push_back(vector_from_json(a));
            d.probs = s.at("probs").get<std::vector<double>>();
            m.stages.push_back(std::move(d));
        }
        m.validate(1e-9);
        return m;
    } catch (const json::exception& e) {
        throw DomainError(std::string("malformed marginals JSON: ") + e.what());
    }
}

json coupling_to_json(const MatrixXd& gamma) {
    return json{{"format", 1}, {"weights", matrix_to_json(gamma)}};
}

MatrixXd coupling_from_json(const json& j) {
    if (j.is_array()) return matrix_from_json(j);
    check_format(j, "coupling");
    if (!j.contains("weights")) throw DomainError("coupling: missing weights");
    return matrix_from_json(j.at("weights"));
}

json decisions_to_json(const std::map<int, VectorXd>& decisions) {
    json d = json::object();
    for (const auto& [id, x] : decisions) d[std::to_string(id)] = vector_to_json(x);
    return json{{"format", 1}, {"decisions", d}};
}

std::map<int, VectorXd> decisions_from_json(const json& j) {
    check_format(j, "policy");
    const json& d = j.contains("decisions") ? j.at("decisions") : j;
    std::map<int, VectorXd> out;
    for (auto it = d.begin(); it != d.end(); ++it) {
        if (it.key() == "format") continue;
        int id = 0;
        try {
            id = std::stoi(it.key());
        } catch (const std::exception&) {
            throw DomainError("policy: node key '" + it.key() + "' is not an integer id");
        }
        out[id] = vector_from_json(it.value());
    }
    return out;
}

namespace {

const char* binding_name(Binding b) {
    switch (b) {
        case Binding::identity: return "identity";
        case Binding::none: return "none";
        case Binding::matrix: return "matrix";
    }
    return "?";
}

Binding parse_binding(const std::string& s) {
    if (s == "identity") return Binding::identity;
    if (s == "none") return Binding::none;
    if (s == "matrix") return Binding::matrix;
    throw DomainError("unknown binding '" + s + "'");
}

}  // namespace

json problem_to_json(const MultistageProblem& problem) {
    json st = json::array();
    for (const auto& s : problem.stages) {
        json o{{"A", matrix_to_json(s.A)}, {"B", matrix_to_json(s.B)}, {"b", vector_to_json(s.b)},
               {"c", vector_to_json(s.c)}, {"binding", binding_name(s.binding)}};
        if (!s.free.empty()) o["free"] = s.free;
        if (s.binding == Binding::matrix) o["binding_matrix"] = matrix_to_json(s.binding_matrix);
        st.push_back(o);
    }
    json j{{"format", 1}, {"location", to_string(problem.location)}, {"stages", st}};
    if (problem.stagewise()) j["marginals"] = marginals_to_json(problem.marginals());
    else if (std::get<ScenarioTree>(problem.nominal).size() > 0) j["tree"] = tree_to_json(problem.tree());
    return j;
}

MultistageProblem problem_from_json(const json& j) {
    check_format(j, "problem");
    try {
        MultistageProblem p;
        p.location = parse_location(j.value("location", std::string("rhs")));
        int n_prev = 0;
        for (const auto& o : j.at("stages")) {
            StageTemplate s;
            s.c = vector_from_json(o.at("c"));
            s.b = o.contains("b") ? vector_from_json(o.at("b")) : VectorXd(0);
            const int n = static_cast<int>(s.c.size());
            const int m = static_cast<int>(s.b.size());
            s.A = o.contains("A") ? matrix_from_json(o.at("A")) : MatrixXd(0, n);
            if (s.A.rows() == 0) s.A.resize(m, n);
            s.B = o.contains("B") ? matrix_from_json(o.at("B")) : MatrixXd::Zero(m, n_prev);
            if (s.B.size() == 0) s.B = MatrixXd::Zero(m, n_prev);
            if (o.contains("free")) s.free = o.at("free").get<std::vector<bool>>();
            s.binding = parse_binding(o.value("binding", std::string("identity")));
            if (o.contains("binding_matrix")) s.binding_matrix = matrix_from_json(o.at("binding_matrix"));
            p.stages.push_back(std::move(s));
            n_prev = n;
        }
        if (j.contains("tree") && j.contains("marginals")) throw DomainError("problem: give either tree or marginals");
        if (j.contains("tree")) p.nominal = tree_from_json(j.at("tree")).tree;
        else if (j.contains("marginals")) p.nominal = marginals_from_json(j.at("marginals"));
        return p;
    } catch (const json::exception& e) {
        throw DomainError(std::string("malformed problem JSON: ") + e.what());
    }
}

}  // namespace ndro
