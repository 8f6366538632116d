#include "ndro/sddp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ndro {

void SddpConfig::validate(int stages) const {
    if (paths < 1) throw DomainError("SDDP needs at least one forward path per iteration");
    if (max_iter < 1) throw DomainError("SDDP needs max_iter >= 1");
    if (window < 1) throw DomainError("convergence window must be >= 1");
    if (!(rtol > 0.0)) throw DomainError("convergence tolerance must be positive");
    if (!(avar_alpha > 0.0) || avar_alpha > 1.0) throw DomainError("AVaR level must lie in (0, 1]");
    if (!floors.empty() && static_cast<int>(floors.size()) != stages - 1)
        throw DomainError("expected " + std::to_string(stages - 1) + " floors (stages 2..T)");
    for (double f : floors)
        if (!std::isfinite(f)) throw DomainError("floors must be finite");
}

namespace {

void check_supported(const MultistageProblem& problem, const UncertaintySpec& u) {
    problem.validate();
    u.validate();
    if (!problem.stagewise()) throw DomainError("SDDP requires stagewise-independent marginals");
    if (u.theta == 0.0 && u.mode == Mode::hard) return;
    if (u.mode != Mode::hard || std::isfinite(u.p)) throw DomainError("SDDP handles the p = inf ball only");
    if (problem.location == Location::objective) throw DomainError("SDDP handles rhs / technology uncertainty");
}

// Location used for perturbation enumeration; with theta = 0 nothing is perturbed.
Location enum_location(const MultistageProblem& problem, const UncertaintySpec& u) {
    return u.theta == 0.0 ? Location::technology : problem.location;
}

StageValue worst_case(const MultistageProblem& problem, const UncertaintySpec& u, const ValueApprox& approx, int t,
                      const VectorXd& xi, const VectorXd& x_prev) {
    StageData d = problem.data(t, xi);
    if (t == problem.num_stages()) {
        NoContinuation none;
        return cost_to_go_rhs_inf(d, x_prev, none, u, enum_location(problem, u));
    }
    CutContinuation cont(approx.cuts[t + 1], approx.floors[t + 1]);
    try {
        return cost_to_go_rhs_inf(d, x_prev, cont, u, enum_location(problem, u));
    } catch (const DomainError& e) {
        std::string msg = e.what();
        if (msg.find("unbounded") != std::string::npos)
            throw DomainError("stage " + std::to_string(t) + ": " + msg + "; raise the floor of stage " +
                              std::to_string(t + 1));
        throw DomainError("stage " + std::to_string(t) + ": " + msg);
    }
}

}  // namespace

ValueApprox initial_approx(const MultistageProblem& problem, const SddpConfig& config) {
    const int T = problem.num_stages();
    ValueApprox a(T, config.default_floor);
    if (!config.floors.empty())
        for (int t = 2; t <= T; ++t) a.floors[t] = config.floors[t - 2];
    return a;
}

StageSolve first_stage(const MultistageProblem& problem, const ValueApprox& approx) {
    StageData d = problem.data(1, problem.marginals().stage1);
    StageSolve r = problem.num_stages() == 1 ? solve_stage_lp(d, d.b, nullptr, 0.0)
                                             : solve_stage_lp(d, d.b, &approx.cuts[2], approx.floors[2]);
    if (r.status == LPStatus::infeasible) throw DomainError("first-stage problem infeasible");
    if (r.status == LPStatus::unbounded) throw DomainError("first-stage problem unbounded");
    return r;
}

TrialPoints forward_pass(const MultistageProblem& problem, const UncertaintySpec& u, const ValueApprox& approx,
                         const std::vector<SamplePath>& paths) {
    check_supported(problem, u);
    const int T = problem.num_stages();
    TrialPoints out;
    out.reserve(paths.size());
    const VectorXd x1 = first_stage(problem, approx).x;
    for (const auto& path : paths) {
        if (static_cast<int>(path.outcomes.size()) != T - 1)
            throw DomainError("forward path must hold outcomes for stages 2..T");
        std::vector<VectorXd> xs{x1};
        for (int t = 2; t <= T - 1; ++t) xs.push_back(worst_case(problem, u, approx, t, path.outcomes[t - 2], xs.back()).x);
        out.push_back(std::move(xs));
    }
    return out;
}

int backward_pass(const MultistageProblem& problem, const UncertaintySpec& u, ValueApprox& approx,
                  const TrialPoints& trials, const SddpConfig& config, int iteration) {
    check_supported(problem, u);
    const int T = problem.num_stages();
    const bool tech = problem.location == Location::technology && u.theta > 0.0;
    int added = 0;
    for (int t = T; t >= 2; --t) {
        const auto& dist = problem.marginals().at(t);
        for (const auto& trial : trials) {
            const VectorXd& xbar = trial.at(t - 2);
            const VectorXd ds = tech ? norm_subgradient(xbar, u.norm) : VectorXd::Zero(xbar.size());
            std::vector<double> vals;
            std::vector<VectorXd> grads;
            for (int i = 0; i < dist.size(); ++i) {
                StageValue sv = worst_case(problem, u, approx, t, dist.atoms[i], xbar);
                StageData d = problem.data(t, dist.atoms[i]);
                VectorXd g = VectorXd::Zero(xbar.size());
                if (d.B.cols() > 0 && sv.pi.size()) g -= d.B.transpose() * sv.pi;
                if (tech && sv.j >= 0) g += u.theta * sv.delta * sv.pi(sv.j) * ds;
                vals.push_back(sv.value);
                grads.push_back(std::move(g));
            }
            const std::vector<double> w =
                config.avar_alpha < 1.0 ? avar_weights(vals, dist.probs, config.avar_alpha) : dist.probs;
            Cut cut{t, 0.0, VectorXd::Zero(xbar.size()), xbar, iteration};
            for (std::size_t i = 0; i < vals.size(); ++i) {
                if (w[i] == 0.0) continue;
                cut.intercept += w[i] * vals[i];
                cut.gradient += w[i] * grads[i];
            }
            bool dominated = false;
            for (const Cut& c : approx.cuts[t])
                if (c(xbar) >= cut.intercept - config.dedup_tol * std::max(1.0, std::abs(cut.intercept))) {
                    dominated = true;
                    break;
                }
            if (dominated) continue;
            approx.cuts[t].push_back(std::move(cut));
            ++added;
        }
    }
    return added;
}

SddpResult run_sddp(const MultistageProblem& problem, const UncertaintySpec& u, const SddpConfig& config) {
    check_supported(problem, u);
    const int T = problem.num_stages();
    config.validate(T);
    SddpResult out;
    if (config.floors.empty() && T > 1)
        out.warnings.push_back("no floors given; using " + std::to_string(config.default_floor) + " for every stage");
    out.approx = initial_approx(problem, config);
    const auto start = std::chrono::steady_clock::now();
    for (int it = 1; it <= config.max_iter; ++it) {
        if (T > 1) {
            auto paths = sample_paths(problem.marginals(), config.paths, derive_seed(config.seed, it));
            TrialPoints trials = forward_pass(problem, u, out.approx, paths);
            backward_pass(problem, u, out.approx, trials, config, it);
        }
        StageSolve r = first_stage(problem, out.approx);
        out.first_stage = r.x;
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        out.trace.push_back({it, r.value, ms});
        const int k = static_cast<int>(out.trace.size());
        if (T == 1) {
            out.converged = true;
            break;
        }
        if (k > config.window) {
            const double now = out.trace[k - 1].lower_bound;
            const double then = out.trace[k - 1 - config.window].lower_bound;
            if (std::abs(now - then) <= config.rtol * std::max(1.0, std::abs(now))) {
                out.converged = true;
                break;
            }
        }
    }
    return out;
}

}  // namespace ndro
