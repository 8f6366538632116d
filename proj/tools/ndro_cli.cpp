// Command-line front end: distances, policy evaluation, exact / SDDP / p = 1 solves,
// portfolio experiments and coupling checks. Exit codes: 0 ok, 1 domain error, 2 usage.

#include "ndro/dro_dp.hpp"
#include "ndro/io.hpp"
#include "ndro/portfolio.hpp"
#include "ndro/sddp.hpp"
#include "ndro/transport.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace ndro;

namespace {

using ojson = nlohmann::ordered_json;

// Non-finite values travel as strings ("inf", "-inf", "nan").
ojson num(double v) {
    if (!std::isfinite(v)) return format_number(v);
    return v;
}

ojson vec(const VectorXd& v) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

ojson decisions(const std::map<int, VectorXd>& d) {
    ojson o = ojson::object();
    for (const auto& [id, x] : d) o[std::to_string(id)] = vec(x);
    return o;
}

// Compact JSON with every floating-point number at 12 significant digits.
std::string to_text(const ojson& j) {
    switch (j.type()) {
        case ojson::value_t::number_float: {
            std::string s = format_number(j.get<double>());
            if (s.find_first_of(".e") == std::string::npos) s += ".0";
            return s;
        }
        case ojson::value_t::array: {
            std::string s = "[";
            for (std::size_t i = 0; i < j.size(); ++i) s += (i ? "," : "") + to_text(j[i]);
            return s + "]";
        }
        case ojson::value_t::object: {
            std::string s = "{";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                s += (first ? "" : ",") + ojson(it.key()).dump() + ":" + to_text(it.value());
                first = false;
            }
            return s + "}";
        }
        default: return j.dump();
    }
}

void emit(const ojson& j) { std::cout << to_text(j) << '\n'; }

struct Globals {
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
    std::optional<double> tol;
};

struct UncertaintyFlags {
    double theta = 0.0;
    std::string p = "inf";
    std::string norm = "l1";
    bool soft = false;
    double lambda = 0.0;

    void add(CLI::App* sub) {
        sub->add_option("--theta", theta, "ball radius (hard mode)")->capture_default_str();
        sub->add_option("--p", p, "transport order, a number >= 1 or inf")->capture_default_str();
        sub->add_option("--norm", norm, "norm on the outcome space: l1, l2, linf")->capture_default_str();
        sub->add_flag("--soft", soft, "penalized (soft) uncertainty set");
        sub->add_option("--lambda", lambda, "penalty of the soft set")->capture_default_str();
    }
    UncertaintySpec spec() const {
        UncertaintySpec u;
        u.p = parse_order(p);
        u.norm = parse_norm(norm);
        u.mode = soft ? Mode::soft : Mode::hard;
        u.theta = theta;
        u.lambda = lambda;
        u.validate();
        return u;
    }
};

struct ProblemFlags {
    std::string problem, tree, marginals;

    void add(CLI::App* sub, bool tree_only = false) {
        sub->add_option("--problem", problem, "problem JSON (stages and location)")->required();
        sub->add_option("--tree", tree, "nominal scenario tree JSON");
        if (!tree_only) sub->add_option("--marginals", marginals, "stagewise marginals JSON");
    }
    MultistageProblem load() const {
        if (!tree.empty() && !marginals.empty()) throw DomainError("give --tree or --marginals, not both");
        MultistageProblem p = problem_from_json(read_json_file(problem));
        if (!tree.empty()) p.nominal = tree_from_json(read_json_file(tree)).tree;
        if (!marginals.empty()) p.nominal = marginals_from_json(read_json_file(marginals));
        if (!p.stagewise() && std::get<ScenarioTree>(p.nominal).size() == 0)
            throw DomainError("no nominal data: pass --tree or --marginals, or embed one in the problem file");
        p.validate();
        return p;
    }
};

ScenarioTree load_tree(const std::string& path) {
    auto imp = tree_from_json(read_json_file(path));
    if (imp.pruned > 0)
        std::cerr << "note: " << path << ": dropped " << imp.pruned << " zero-probability node(s)\n";
    return imp.tree;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nested-distance robust multistage linear optimization"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    Globals g;
    app.add_option("--seed", g.seed, "seed of every random draw (default 0)")
        ->each([&](const std::string&) { g.seed_given = true; });
    app.add_option("--threads", g.threads, "worker cap; work runs sequentially, output does not depend on it")
        ->check(CLI::PositiveNumber);
    app.add_option("--tol", g.tol, "solver tolerance (cutting-plane gap, SDDP stopping tolerance, coupling checks)");

    // distance
    auto* dist = app.add_subcommand("distance", "distance between two scenario trees");
    std::string da, db, dmode = "nested", dp = "1", dnorm = "l1";
    dist->add_option("a", da, "first tree JSON")->required();
    dist->add_option("b", db, "second tree JSON")->required();
    dist->add_option("--p", dp, "order, a number >= 1 or inf")->capture_default_str();
    dist->add_option("--norm", dnorm, "ground norm: l1, l2, linf")->capture_default_str();
    dist->add_option("--mode", dmode, "wasserstein, causal, nested or oracle")
        ->check(CLI::IsMember({"wasserstein", "causal", "nested", "oracle"}))
        ->capture_default_str();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "robust risk of a fixed policy");
    ProblemFlags eprob;
    UncertaintyFlags eu;
    std::string epolicy, emode = "nested";
    eprob.add(eval, true);
    eu.add(eval);
    eval->add_option("--policy", epolicy, "policy JSON: node id -> decision")->required();
    eval->add_option("--mode", emode, "nested or wasserstein")
        ->check(CLI::IsMember({"nested", "wasserstein"}))
        ->capture_default_str();

    // solve-exact
    auto* exact = app.add_subcommand("solve-exact", "exact robust value and policy on a small instance");
    ProblemFlags xprob;
    UncertaintyFlags xu;
    double xalpha = 1.0;
    xprob.add(exact);
    xu.add(exact);
    exact->add_option("--alpha", xalpha, "AVaR level in (0, 1]; 1 is the expectation")->capture_default_str();

    // solve-sddp
    auto* sddp = app.add_subcommand("solve-sddp", "robust SDDP on stagewise-independent data");
    ProblemFlags sprob;
    UncertaintyFlags su;
    SddpConfig sc;
    std::string sjson;
    sprob.add(sddp);
    su.add(sddp);
    sddp->add_option("--paths", sc.paths, "forward paths per iteration")->capture_default_str();
    sddp->add_option("--max-iter", sc.max_iter, "iteration cap")->capture_default_str();
    sddp->add_option("--window", sc.window, "stopping window")->capture_default_str();
    sddp->add_option("--floors", sc.floors, "lower bounds of the cost-to-go, stages 2..T")->delimiter(',');
    sddp->add_option("--alpha", sc.avar_alpha, "AVaR level in (0, 1]")->capture_default_str();
    sddp->add_option("--json", sjson, "write the first-stage JSON here instead of after the CSV");

    // solve-p1
    auto* p1 = app.add_subcommand("solve-p1", "p = 1 right-hand-side decomposition: SAA value plus radius times kappa");
    ProblemFlags pprob;
    double ptheta = 0.0;
    std::string pnorm = "l1";
    pprob.add(p1, true);
    p1->add_option("--theta", ptheta, "ball radius")->capture_default_str();
    p1->add_option("--norm", pnorm, "norm on the outcome space")->capture_default_str();

    // portfolio
    auto* port = app.add_subcommand("portfolio", "out-of-sample portfolio experiment grid (CSV)");
    std::string pconfig, pout;
    port->add_option("--config", pconfig, "experiment JSON");
    port->add_option("--out", pout, "write the CSV here instead of stdout");

    // oos
    auto* oos = app.add_subcommand("oos", "one out-of-sample portfolio run");
    int oT = 3, on_hat = 2, on_test = 20, oM = 20;
    double otheta = 0.1, oalpha = 1.0;
    std::string omethod = "robust", onorm = "l2", osolver = "automatic";
    oos->add_option("--T", oT, "stages")->capture_default_str();
    oos->add_option("--n-hat", on_hat, "training samples per stage")->capture_default_str();
    oos->add_option("--n-test", on_test, "testing samples per stage")->capture_default_str();
    oos->add_option("--M", oM, "testing paths")->capture_default_str();
    oos->add_option("--theta", otheta, "radius of the robust method")->capture_default_str();
    oos->add_option("--method", omethod, "robust, saa or avar")
        ->check(CLI::IsMember({"robust", "saa", "avar"}))
        ->capture_default_str();
    oos->add_option("--alpha", oalpha, "AVaR level")->capture_default_str();
    oos->add_option("--norm", onorm, "norm of the holdings")->capture_default_str();
    oos->add_option("--solver", osolver, "automatic, exact or sddp")
        ->check(CLI::IsMember({"automatic", "exact", "sddp"}))
        ->capture_default_str();

    // validate-plan
    auto* plan = app.add_subcommand("validate-plan", "causality of a coupling between two trees");
    std::string va, vb, vc;
    plan->add_option("a", va, "first tree JSON")->required();
    plan->add_option("b", vb, "second tree JSON")->required();
    plan->add_option("--coupling", vc, "coupling JSON over leaf pairs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*dist) {
            const ScenarioTree a = load_tree(da), b = load_tree(db);
            DistanceSpec spec{parse_order(dp), parse_norm(dnorm)};
            double v = 0.0;
            if (dmode == "wasserstein") v = wasserstein_distance(a, b, spec);
            else if (dmode == "causal") v = causal_distance(a, b, spec);
            else if (dmode == "nested") v = nested_distance(a, b, spec);
            else v = nested_distance_oracle(a, b, spec);
            std::printf("%.12f\n", v);
        } else if (*eval) {
            MultistageProblem p = eprob.load();
            const auto d = decisions_from_json(read_json_file(epolicy));
            const UncertaintySpec u = eu.spec();
            RiskValue r = emode == "nested" ? robust_risk_fixed_policy(p, d, u) : wasserstein_sup_risk(p, d, u);
            emit(ojson{{"format", 1}, {"mode", emode}, {"value", num(r.value)}, {"method", r.method},
                       {"lower_bound", r.lower_bound}});
        } else if (*exact) {
            MultistageProblem p = xprob.load();
            ExactOptions eo;
            eo.avar_alpha = xalpha;
            if (g.tol) eo.tol = *g.tol;
            ExactResult r = exact_solve_small(p, xu.spec(), eo);
            emit(ojson{{"format", 1},
                       {"value", num(r.value)},
                       {"first_stage", vec(r.policy.decisions.at(r.policy.tree.root().id))},
                       {"decisions", decisions(r.policy.decisions)}});
        } else if (*sddp) {
            MultistageProblem p = sprob.load();
            sc.seed = g.seed;
            if (g.tol) sc.rtol = *g.tol;
            SddpResult r = run_sddp(p, su.spec(), sc);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
            if (!r.converged) std::cerr << "warning: stopped at the iteration cap before the bound settled\n";
            std::string csv = "iteration,lower_bound,wallclock_ms\n";
            for (const auto& t : r.trace)
                csv += std::to_string(t.iteration) + ',' + format_number(t.lower_bound) + ',' +
                       format_number(t.wallclock_ms) + '\n';
            ojson first{{"format", 1},
                        {"first_stage", vec(r.first_stage)},
                        {"lower_bound", num(r.lower_bound())},
                        {"iterations", r.trace.size()},
                        {"converged", r.converged},
                        {"cuts", r.approx.total_cuts()}};
            std::cout << csv;
            if (sjson.empty()) {
                std::cout << '\n';
                emit(first);
            } else {
                std::ofstream f(sjson);
                if (!f) throw DomainError("cannot write " + sjson);
                f << to_text(first) << '\n';
            }
        } else if (*p1) {
            MultistageProblem p = pprob.load();
            UncertaintySpec u;
            u.p = 1.0;
            u.theta = ptheta;
            u.norm = parse_norm(pnorm);
            P1Result r = solve_rhs_p1(p, u);
            ojson sk = ojson::array();
            for (std::size_t t = 2; t < r.stage_kappa.size(); ++t) sk.push_back(num(r.stage_kappa[t]));
            emit(ojson{{"format", 1},
                       {"saa_value", num(r.saa_value)},
                       {"kappa", num(r.kappa)},
                       {"stage_kappa", sk},
                       {"value", num(r.value)},
                       {"decisions", decisions(r.policy.decisions)}});
        } else if (*port) {
            ExperimentConfig c = pconfig.empty() ? ExperimentConfig{} : experiment_from_json(read_json_file(pconfig));
            if (g.seed_given) c.seed = g.seed;
            if (g.tol) c.sddp.rtol = *g.tol;
            const std::string csv = experiment_csv(run_experiment(c));
            if (pout.empty()) {
                std::cout << csv;
            } else {
                std::ofstream f(pout);
                if (!f) throw DomainError("cannot write " + pout);
                f << csv;
            }
        } else if (*oos) {
            PortfolioSpec spec;
            spec.T = oT;
            spec.theta = otheta;
            spec.norm = parse_norm(onorm);
            spec.validate();
            const ReturnModel model = ReturnModel::builtin();
            auto train = sample_marginals(model, oT, on_hat, derive_seed(g.seed, 1));
            auto test = sample_marginals(model, oT, on_test, derive_seed(g.seed, 2));
            OosOptions o;
            o.method = omethod == "robust" ? OosMethod::robust : omethod == "saa" ? OosMethod::saa : OosMethod::avar;
            o.alpha = oalpha;
            o.M = oM;
            o.seed = derive_seed(g.seed, 3);
            o.solver = osolver == "exact" ? TrainSolver::exact
                       : osolver == "sddp" ? TrainSolver::sddp
                                           : TrainSolver::automatic;
            if (g.tol) o.exact.tol = *g.tol;
            OosResult r = out_of_sample(build_portfolio_program(spec, train), test, spec.uncertainty(), o);
            ojson vals = ojson::array();
            for (double v : r.values) vals.push_back(num(v));
            emit(ojson{{"format", 1},
                       {"method", omethod},
                       {"solver", r.solver},
                       {"mean", num(r.mean)},
                       {"iqr", num(interquartile_range(r.values))},
                       {"first_stage", vec(r.first_stage)},
                       {"values", vals}});
        } else if (*plan) {
            const ScenarioTree a = load_tree(va), b = load_tree(vb);
            const MatrixXd gamma = coupling_from_json(read_json_file(vc));
            const double tol = g.tol.value_or(1e-9);
            emit(ojson{{"causal_ab", is_causal(gamma, a, b, Direction::a_to_b, tol)},
                       {"causal_ba", is_causal(gamma, a, b, Direction::b_to_a, tol)},
                       {"bicausal", is_bicausal(gamma, a, b, tol)}});
        }
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
