#include "ndro/model.hpp"

#include <algorithm>
#include <cmath>

namespace ndro {

Location parse_location(const std::string& s) {
    if (s == "objective" || s == "c") return Location::objective;
    if (s == "rhs" || s == "b") return Location::rhs;
    if (s == "technology" || s == "B") return Location::technology;
    throw DomainError("unknown uncertainty location '" + s + "'");
}

std::string to_string(Location l) {
    switch (l) {
        case Location::objective: return "objective";
        case Location::rhs: return "rhs";
        case Location::technology: return "technology";
    }
    return "?";
}

namespace {

VectorXd flatten_rowmajor(const MatrixXd& M) {
    VectorXd v(M.size());
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j) v(i * M.cols() + j) = M(i, j);
    return v;
}

MatrixXd unflatten_rowmajor(const VectorXd& v, int rows, int cols) {
    MatrixXd M(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) M(i, j) = v(i * cols + j);
    return M;
}

int outcome_dim(const MultistageProblem& p, int t) {
    if (const auto* tree = std::get_if<ScenarioTree>(&p.nominal)) return tree->dim(t);
    const auto& m = std::get<StagewiseMarginals>(p.nominal);
    if (t == 1) return static_cast<int>(m.stage1.size());
    const auto& d = m.at(t);
    return d.atoms.empty() ? 0 : static_cast<int>(d.atoms.front().size());
}

}  // namespace

int MultistageProblem::coefficient_size(int t) const {
    const auto& s = stage(t);
    switch (location) {
        case Location::objective: return static_cast<int>(s.c.size());
        case Location::rhs: return static_cast<int>(s.b.size());
        case Location::technology: return static_cast<int>(s.B.size());
    }
    return 0;
}

StageData MultistageProblem::data(int t, const VectorXd& xi) const {
    const auto& s = stage(t);
    StageData d{s.A, s.B, s.b, s.c, s.free};
    if (t == 1 || s.binding == Binding::none) return d;
    VectorXd shift;
    if (s.binding == Binding::identity) {
        if (xi.size() != coefficient_size(t))
            throw DomainError("stage " + std::to_string(t) + ": outcome size does not match the uncertain coefficient");
        shift = xi;
    } else {
        if (s.binding_matrix.cols() != xi.size())
            throw DomainError("stage " + std::to_string(t) + ": binding matrix does not match the outcome size");
        shift = s.binding_matrix * xi;
    }
    switch (location) {
        case Location::objective: d.c += shift; break;
        case Location::rhs: d.b += shift; break;
        case Location::technology:
            d.B = unflatten_rowmajor(flatten_rowmajor(s.B) + shift, static_cast<int>(s.B.rows()),
                                     static_cast<int>(s.B.cols()));
            break;
    }
    return d;
}

ScenarioTree MultistageProblem::tree() const {
    if (const auto* t = std::get_if<ScenarioTree>(&nominal)) return *t;
    return build_product(std::get<StagewiseMarginals>(nominal));
}

const StagewiseMarginals& MultistageProblem::marginals() const {
    if (!stagewise()) throw DomainError("problem nominal is not stagewise independent");
    return std::get<StagewiseMarginals>(nominal);
}

void MultistageProblem::validate() const {
    const int T = num_stages();
    if (T < 1) throw DomainError("problem needs at least one stage");
    int nominal_stages = 0;
    if (const auto* tree = std::get_if<ScenarioTree>(&nominal)) {
        nominal_stages = tree->stages();
    } else {
        const auto& m = std::get<StagewiseMarginals>(nominal);
        m.validate(1e-9);
        nominal_stages = m.num_stages();
    }
    if (nominal_stages != T)
        throw DomainError("nominal distribution has " + std::to_string(nominal_stages) + " stages, problem has " +
                          std::to_string(T));
    for (int t = 1; t <= T; ++t) {
        const auto& s = stage(t);
        const std::string tag = "stage " + std::to_string(t) + ": ";
        if (s.b.size() != s.A.rows()) throw DomainError(tag + "b size differs from the row count of A");
        if (s.c.size() != s.A.cols()) throw DomainError(tag + "c size differs from the column count of A");
        if (!s.free.empty() && static_cast<int>(s.free.size()) != s.A.cols())
            throw DomainError(tag + "free flags size differs from the column count of A");
        const int prev = t == 1 ? 0 : stage(t - 1).cols();
        if (t > 1 && (s.B.rows() != s.A.rows() || s.B.cols() != prev))
            throw DomainError(tag + "B must be " + std::to_string(s.A.rows()) + "x" + std::to_string(prev));
        if (!s.A.allFinite() || !s.B.allFinite() || !s.b.allFinite() || !s.c.allFinite())
            throw DomainError(tag + "non-finite data");
        if (t == 1) continue;
        const int d = outcome_dim(*this, t);
        if (s.binding == Binding::identity && d != coefficient_size(t))
            throw DomainError(tag + "outcome dimension " + std::to_string(d) + " does not match the " +
                              to_string(location) + " coefficient size " + std::to_string(coefficient_size(t)));
        if (s.binding == Binding::matrix &&
            (s.binding_matrix.rows() != coefficient_size(t) || s.binding_matrix.cols() != d))
            throw DomainError(tag + "binding matrix has the wrong shape");
    }
}

void UncertaintySpec::validate() const {
    if (!(p >= 1.0)) throw DomainError("order p must be >= 1");
    if (mode == Mode::soft) {
        if (!std::isfinite(p)) throw DomainError("soft mode requires a finite order p");
        if (!(lambda > 0.0)) throw DomainError("soft mode requires lambda > 0");
    } else if (!(theta >= 0.0) || !std::isfinite(theta)) {
        throw DomainError("radius must be a nonnegative finite number");
    }
    if (box_support && !(box_lo <= box_hi)) throw DomainError("empty support box");
}

ValueApprox::ValueApprox(int stages, double floor)
    : cuts(static_cast<std::size_t>(stages) + 1), floors(static_cast<std::size_t>(stages) + 1, floor) {}

double ValueApprox::eval(int t, const VectorXd& x) const {
    double v = floors.at(t);
    for (const auto& c : cuts.at(t)) v = std::max(v, c(x));
    return v;
}

std::size_t ValueApprox::total_cuts() const {
    std::size_t n = 0;
    for (const auto& c : cuts) n += c.size();
    return n;
}

VectorXd stage_rhs(const StageData& d, const VectorXd& x_prev) {
    if (d.B.cols() == 0 || x_prev.size() == 0) return d.b;
    return d.b - d.B * x_prev;
}

bool stage_feasible(const StageData& d, const VectorXd& x_prev, const VectorXd& x, double tol) {
    if (x.size() != d.A.cols()) return false;
    const VectorXd rhs = stage_rhs(d, x_prev);
    const double scale = 1.0 + (rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0);
    if (rhs.size() && (d.A * x - rhs).cwiseAbs().maxCoeff() > tol * scale) return false;
    for (int j = 0; j < x.size(); ++j) {
        const bool fr = !d.free.empty() && d.free[j];
        if (!fr && x(j) < -tol * scale) return false;
    }
    return true;
}

namespace {

LinearProgram stage_program(const StageData& d, const VectorXd& rhs, const std::vector<const Cut*>* cuts, double floor) {
    const int n = static_cast<int>(d.A.cols());
    const bool cont = cuts != nullptr;
    LinearProgram lp(n + (cont ? 1 : 0));
    lp.c.head(n) = d.c;
    if (cont) {
        lp.c(n) = 1.0;
        lp.free.assign(n + 1, false);
        for (int j = 0; j < n; ++j) lp.free[j] = !d.free.empty() && d.free[j];
        lp.free[n] = true;
    } else {
        lp.free = d.free;
    }
    lp.A_eq = MatrixXd::Zero(d.A.rows(), lp.num_vars());
    lp.A_eq.leftCols(n) = d.A;
    lp.b_eq = rhs;
    if (cont) {
        const int k = static_cast<int>(cuts->size());
        lp.A_ub = MatrixXd::Zero(k + 1, n + 1);
        lp.b_ub.resize(k + 1);
        for (int i = 0; i < k; ++i) {
            const Cut& c = *(*cuts)[i];
            lp.A_ub.row(i).head(n) = c.gradient.transpose();
            lp.A_ub(i, n) = -1.0;
            lp.b_ub(i) = c.gradient.dot(c.anchor) - c.intercept;
        }
        lp.A_ub(k, n) = -1.0;
        lp.b_ub(k) = -floor;
    }
    return lp;
}

StageSolve finish(const LPSolution& sol, int n) {
    StageSolve out;
    out.status = sol.status;
    if (sol.status != LPStatus::optimal) return out;
    out.value = sol.objective;
    out.upper = sol.objective;
    out.x = sol.x.head(n);
    out.pi = sol.y_eq;
    return out;
}

constexpr std::size_t kFullCutLimit = 40;  // larger pools go through cut generation
constexpr std::size_t kCutBatch = 10;

}  // namespace

StageSolve solve_stage_lp(const StageData& d, const VectorXd& rhs, const std::vector<Cut>* cuts, double floor) {
    const int n = static_cast<int>(d.A.cols());
    if (cuts == nullptr) return finish(solve_lp(stage_program(d, rhs, nullptr, floor)), n);
    std::vector<const Cut*> all;
    all.reserve(cuts->size());
    for (const Cut& c : *cuts) all.push_back(&c);
    if (all.size() <= kFullCutLimit) return finish(solve_lp(stage_program(d, rhs, &all, floor)), n);

    // Start from the newest cuts, add the most violated ones until every cut holds.
    std::vector<char> in(all.size(), 0);
    std::vector<const Cut*> work;
    for (std::size_t i = all.size() - kCutBatch; i < all.size(); ++i) {
        in[i] = 1;
        work.push_back(all[i]);
    }
    while (true) {
        LPSolution sol = solve_lp(stage_program(d, rhs, &work, floor));
        if (sol.status == LPStatus::unbounded) break;  // the full pool may still bound it
        if (sol.status != LPStatus::optimal) return finish(sol, n);
        const VectorXd x = sol.x.head(n);
        const double theta = sol.x(n);
        const double tol = 1e-9 * std::max(1.0, std::abs(theta));
        std::vector<std::pair<double, std::size_t>> viol;
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (in[i]) continue;
            const double v = (*all[i])(x) - theta;
            if (v > tol) viol.emplace_back(-v, i);
        }
        if (viol.empty()) return finish(sol, n);
        const std::size_t take = std::min(kCutBatch, viol.size());
        std::partial_sort(viol.begin(), viol.begin() + static_cast<std::ptrdiff_t>(take), viol.end());
        for (std::size_t k = 0; k < take; ++k) {
            in[viol[k].second] = 1;
            work.push_back(all[viol[k].second]);
        }
    }
    return finish(solve_lp(stage_program(d, rhs, &all, floor)), n);
}

}  // namespace ndro
