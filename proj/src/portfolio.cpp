#include "ndro/portfolio.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

namespace ndro {

void PortfolioSpec::validate() const {
    if (n < 1) throw DomainError("portfolio needs at least one asset");
    if (!(W1 > 0.0)) throw DomainError("initial wealth must be positive");
    if (!(r0 > r1) || !(r1 >= 0.0)) throw DomainError("dis-utility slopes must satisfy r0 > r1 >= 0");
    if (!std::isfinite(a0) || !std::isfinite(a1)) throw DomainError("dis-utility offsets must be finite");
    if (!(theta >= 0.0) || !std::isfinite(theta)) throw DomainError("radius must be a nonnegative finite number");
    if (T < 2) throw DomainError("portfolio needs at least two stages");
}

void ReturnModel::validate() const {
    const auto n = mu.size();
    if (n < 1) throw DomainError("return model has no assets");
    if (Sigma.rows() != n || Sigma.cols() != n) throw DomainError("covariance must be n x n");
    if (!mu.allFinite() || !Sigma.allFinite()) throw DomainError("return model has non-finite entries");
    if ((Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw DomainError("covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Sigma);
    if (es.eigenvalues().minCoeff() < -1e-10) throw DomainError("covariance is not positive semidefinite");
    if ((mu.array() <= -1.0).any()) throw DomainError("mean net return must exceed -1");
}

ReturnModel ReturnModel::builtin() {
    ReturnModel m;
    m.mu.resize(5);
    m.mu << 0.005142, 0.006166, 0.004729, -0.005437, -0.026391;
    m.Sigma.resize(5, 5);
    m.Sigma << 0.002862, -0.000634, 0.000211, 0.007217, -0.003882,  //
        -0.000634, 0.001495, 0.000231, -0.002881, 0.001658,         //
        0.000211, 0.000231, 0.000111, 0.000426, -0.000244,          //
        0.007217, -0.002881, 0.000426, 0.030046, -0.013416,         //
        -0.003882, 0.001658, -0.000244, -0.013416, 0.010840;
    return m;
}

MultistageProblem build_portfolio_program(const PortfolioSpec& spec, const Nominal& nominal) {
    spec.validate();
    const int n = spec.n;
    MultistageProblem p;
    p.location = Location::technology;
    p.nominal = nominal;

    StageTemplate first;
    first.A = MatrixXd::Ones(1, n);
    first.B = MatrixXd::Zero(1, 0);
    first.b = VectorXd::Constant(1, spec.W1);
    first.c = VectorXd::Zero(n);
    first.binding = Binding::none;
    p.stages.push_back(first);

    for (int t = 2; t < spec.T; ++t) {
        StageTemplate s;
        s.A = MatrixXd::Ones(1, n);
        s.B = MatrixXd::Zero(1, n);
        s.b = VectorXd::Zero(1);
        s.c = VectorXd::Zero(n);
        s.binding = Binding::matrix;
        s.binding_matrix = -MatrixXd::Identity(n, n);
        p.stages.push_back(s);
    }

    StageTemplate last;
    last.A.resize(2, 4);
    last.A << 1, -1, -1, 0,  //
        1, -1, 0, -1;
    last.B = MatrixXd::Zero(2, n);
    last.b.resize(2);
    last.b << -spec.a0, -spec.a1;
    last.c.resize(4);
    last.c << 1, -1, 0, 0;
    last.binding = Binding::matrix;
    last.binding_matrix = MatrixXd::Zero(2 * n, n);
    last.binding_matrix.topRows(n) = spec.r0 * MatrixXd::Identity(n, n);
    last.binding_matrix.bottomRows(n) = spec.r1 * MatrixXd::Identity(n, n);
    p.stages.push_back(last);

    if (p.num_stages() != spec.T) throw DomainError("internal: stage count mismatch");
    p.validate();
    const int d = p.tree().dim(2);
    if (d != n) throw DomainError("nominal outcomes have dimension " + std::to_string(d) + ", expected " + std::to_string(n));
    return p;
}

double terminal_q(const PortfolioSpec& spec, const VectorXd& x, const VectorXd& xi_hat) {
    if (x.size() != xi_hat.size()) throw DomainError("terminal_q: dimension mismatch");
    const double w = xi_hat.dot(x);
    const double s = spec.theta * norm_of(x, spec.norm);
    double best = -kInf;
    for (int z : {0, 1})
        for (int delta : {1, -1})
            best = std::max(best, std::max(-spec.a0 - spec.r0 * w + (1 - z) * delta * s,
                                           -spec.a1 - spec.r1 * w + z * delta * s));
    return best;
}

std::vector<VectorXd> sample_returns(const ReturnModel& model, int count, std::uint64_t seed) {
    if (count < 1) throw DomainError("sample count must be >= 1");
    model.validate();
    const auto n = model.mu.size();
    const VectorXd g = VectorXd::Ones(n) + model.mu;
    MatrixXd S(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double arg = 1.0 + model.Sigma(i, j) / (g(i) * g(j));
            if (!(arg > 0.0)) throw DomainError("covariance entry cannot be matched by a log-normal model");
            S(i, j) = std::log(arg);
        }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    if (es.eigenvalues().minCoeff() < -1e-10) throw DomainError("matched log-covariance is not positive semidefinite");
    const MatrixXd L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    Rng rng(seed);
    std::vector<VectorXd> out;
    out.reserve(count);
    VectorXd z(n);
    for (int k = 0; k < count; ++k) {
        for (int i = 0; i < n; ++i) z(i) = rng.normal();
        const VectorXd e = L * z - 0.5 * S.diagonal();
        out.push_back(g.cwiseProduct(e.array().exp().matrix()));
    }
    return out;
}

StagewiseMarginals sample_marginals(const ReturnModel& model, int stages, int per_stage, std::uint64_t seed) {
    if (stages < 2 || per_stage < 1) throw DomainError("need stages >= 2 and at least one sample per stage");
    auto draws = sample_returns(model, (stages - 1) * per_stage, seed);
    StagewiseMarginals m;
    m.stage1 = VectorXd::Ones(model.mu.size());
    for (int t = 2; t <= stages; ++t) {
        DiscreteDistribution d;
        for (int k = 0; k < per_stage; ++k) d.atoms.push_back(draws[(t - 2) * per_stage + k]);
        d.probs.assign(per_stage, 1.0 / per_stage);
        m.stages.push_back(std::move(d));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Out-of-sample test

namespace {

class TrainedModel {
public:
    virtual ~TrainedModel() = default;
    virtual VectorXd first() = 0;
    virtual VectorXd stage(int t, const StageData& d, const VectorXd& rhs) = 0;
};

class ExactModel : public TrainedModel {
public:
    ExactModel(const MultistageProblem& p, const UncertaintySpec& u, const ExactOptions& o) : rec_(p, u, o) {}
    VectorXd first() override {
        const auto& root = rec_.tree().root();
        StageData d = rec_.problem().data(1, root.outcome);
        return check(rec_.solve_node(root.id, d.b), 1);
    }
    VectorXd stage(int t, const StageData& d, const VectorXd& rhs) override {
        return check(rec_.solve_with_data(rec_.tree().stage_nodes(t).front(), d, rhs), t);
    }

private:
    static VectorXd check(const StageSolve& r, int t) {
        if (r.status != LPStatus::optimal)
            throw DomainError("re-solve at stage " + std::to_string(t) + " " + to_string(r.status));
        return r.x;
    }
    RobustRecursion rec_;
};

class CutModel : public TrainedModel {
public:
    CutModel(const MultistageProblem& p, const UncertaintySpec& u, const SddpConfig& c)
        : res_(run_sddp(p, u, c)), T_(p.num_stages()) {}
    VectorXd first() override { return res_.first_stage; }
    VectorXd stage(int t, const StageData& d, const VectorXd& rhs) override {
        StageSolve r = t < T_ ? solve_stage_lp(d, rhs, &res_.approx.cuts[t + 1], res_.approx.floors[t + 1])
                              : solve_stage_lp(d, rhs, nullptr, 0.0);
        if (r.status != LPStatus::optimal)
            throw DomainError("re-solve at stage " + std::to_string(t) + " " + to_string(r.status));
        return r.x;
    }

private:
    SddpResult res_;
    int T_;
};

bool under_guard(const MultistageProblem& p, const ExactOptions& o) {
    if (p.num_stages() > o.max_stages) return false;
    for (const auto& d : p.marginals().stages)
        if (d.size() > o.max_support) return false;
    return true;
}

}  // namespace

OosResult out_of_sample(const MultistageProblem& training, const StagewiseMarginals& testing,
                        const UncertaintySpec& u, const OosOptions& opt) {
    training.validate();
    testing.validate(1e-9);
    if (!training.stagewise()) throw DomainError("out-of-sample test needs stagewise training marginals");
    const int T = training.num_stages();
    if (testing.num_stages() != T) throw DomainError("training and testing stage counts differ");
    for (int t = 2; t <= T; ++t)
        if (testing.at(t).atoms.front().size() != training.marginals().at(t).atoms.front().size())
            throw DomainError("training and testing outcome dimensions differ at stage " + std::to_string(t));
    if (opt.M < 1) throw DomainError("need at least one testing path");

    UncertaintySpec ue = u;
    ExactOptions eo = opt.exact;
    SddpConfig sc = opt.sddp;
    if (opt.method != OosMethod::robust) ue.theta = 0.0;
    if (opt.method == OosMethod::avar) {
        if (!(opt.alpha > 0.0) || opt.alpha > 1.0) throw DomainError("AVaR level must lie in (0, 1]");
        eo.avar_alpha = opt.alpha;
        sc.avar_alpha = opt.alpha;
    }
    sc.seed = derive_seed(opt.seed, 7);

    const bool exact = opt.solver == TrainSolver::exact ||
                       (opt.solver == TrainSolver::automatic && (T == 2 || under_guard(training, eo)));
    std::unique_ptr<TrainedModel> model;
    if (exact) model = std::make_unique<ExactModel>(training, ue, eo);
    else model = std::make_unique<CutModel>(training, ue, sc);

    OosResult out;
    out.solver = exact ? "exact" : "sddp";
    out.first_stage = model->first();
    const double c1 = training.data(1, training.marginals().stage1).c.dot(out.first_stage);
    auto paths = sample_paths(testing, opt.M, derive_seed(opt.seed, 3));
    for (const auto& path : paths) {
        double v = c1;
        VectorXd prev = out.first_stage;
        for (int t = 2; t <= T; ++t) {
            StageData d = training.data(t, path.outcomes[t - 2]);
            VectorXd x = model->stage(t, d, stage_rhs(d, prev));
            v += d.c.dot(x);
            prev = std::move(x);
        }
        out.values.push_back(v);
    }
    double s = 0.0;
    for (double v : out.values) s += v;
    out.mean = s / static_cast<double>(out.values.size());
    return out;
}

double interquartile_range(std::vector<double> values) {
    if (values.empty()) throw DomainError("interquartile range of an empty sample");
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
        const double h = (static_cast<double>(values.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return q(0.75) - q(0.25);
}

// ---------------------------------------------------------------------------
// Experiments

void ExperimentConfig::validate() const {
    if (T.empty() || n_hat.empty()) throw DomainError("experiment needs at least one T and one n_hat");
    for (int t : T)
        if (t < 2) throw DomainError("T must be >= 2");
    for (int k : n_hat)
        if (k < 1) throw DomainError("n_hat must be >= 1");
    if (n_test < 1 || M < 1 || replications < 1) throw DomainError("n_test, M and replications must be >= 1");
    for (double th : thetas)
        if (!(th >= 0.0)) throw DomainError("thetas must be nonnegative");
    for (double a : alphas)
        if (!(a > 0.0) || a > 1.0) throw DomainError("alphas must lie in (0, 1]");
    spec.validate();
    model.validate();
    if (model.mu.size() != spec.n) throw DomainError("return model size differs from the asset count");
}

namespace {

template <class T>
std::vector<T> one_or_many(const json& j) {
    if (j.is_array()) return j.get<std::vector<T>>();
    return {j.get<T>()};
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j) {
    if (!j.is_object()) throw DomainError("experiment config must be a JSON object");
    static const std::set<std::string> known{"format", "T", "n_hat", "n_test", "M", "thetas", "alphas",
                                             "replications", "seed", "norm", "W1", "a0", "a1", "r0", "r1",
                                             "returns", "solver", "sddp"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw DomainError("unknown experiment key '" + k + "'");
    ExperimentConfig c;
    try {
        if (j.contains("T")) c.T = one_or_many<int>(j["T"]);
        if (j.contains("n_hat")) c.n_hat = one_or_many<int>(j["n_hat"]);
        if (j.contains("n_test")) c.n_test = j["n_test"].get<int>();
        if (j.contains("M")) c.M = j["M"].get<int>();
        if (j.contains("thetas")) c.thetas = one_or_many<double>(j["thetas"]);
        if (j.contains("alphas")) c.alphas = one_or_many<double>(j["alphas"]);
        if (j.contains("replications")) c.replications = j["replications"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("norm")) c.spec.norm = parse_norm(j["norm"].get<std::string>());
        if (j.contains("W1")) c.spec.W1 = j["W1"].get<double>();
        c.spec.a1 = c.spec.W1 / 2;
        if (j.contains("a0")) c.spec.a0 = j["a0"].get<double>();
        if (j.contains("a1")) c.spec.a1 = j["a1"].get<double>();
        if (j.contains("r0")) c.spec.r0 = j["r0"].get<double>();
        if (j.contains("r1")) c.spec.r1 = j["r1"].get<double>();
        if (j.contains("returns")) {
            const json& r = j["returns"];
            json src = r;
            if (r.is_string()) {
                if (r.get<std::string>() == "builtin" || r.get<std::string>() == "ec62") src = json();
                else src = read_json_file(r.get<std::string>());
            }
            if (!src.is_null()) {
                c.model.mu = vector_from_json(src.at("mu"));
                c.model.Sigma = matrix_from_json(src.at("Sigma"));
            }
        }
        if (j.contains("solver")) {
            const auto s = j["solver"].get<std::string>();
            if (s == "auto") c.solver = TrainSolver::automatic;
            else if (s == "exact") c.solver = TrainSolver::exact;
            else if (s == "sddp") c.solver = TrainSolver::sddp;
            else throw DomainError("solver must be auto, exact or sddp");
        }
        if (j.contains("sddp")) {
            const json& s = j["sddp"];
            if (s.contains("paths")) c.sddp.paths = s["paths"].get<int>();
            if (s.contains("max_iter")) c.sddp.max_iter = s["max_iter"].get<int>();
            if (s.contains("window")) c.sddp.window = s["window"].get<int>();
            if (s.contains("rtol")) c.sddp.rtol = s["rtol"].get<double>();
            if (s.contains("floor")) c.sddp.default_floor = s["floor"].get<double>();
        }
    } catch (const json::exception& e) {
        throw DomainError(std::string("experiment config: ") + e.what());
    }
    c.spec.n = static_cast<int>(c.model.mu.size());
    c.validate();
    return c;
}

std::vector<ExperimentRow> run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::vector<ExperimentRow> rows;
    for (int T : config.T)
        for (int n_hat : config.n_hat)
            for (int rep = 0; rep < config.replications; ++rep) {
                const std::uint64_t base =
                    derive_seed(config.seed, static_cast<std::uint64_t>(T) * 1000003u + n_hat, rep);
                PortfolioSpec spec = config.spec;
                spec.T = T;
                auto train = sample_marginals(config.model, T, n_hat, derive_seed(base, 1));
                auto test = sample_marginals(config.model, T, config.n_test, derive_seed(base, 2));
                MultistageProblem p = build_portfolio_program(spec, train);
                OosOptions o;
                o.M = config.M;
                o.seed = derive_seed(base, 3);
                o.solver = config.solver;
                o.sddp = config.sddp;
                auto cell = [&](OosMethod m, double param, const std::string& name) {
                    o.method = m;
                    o.alpha = m == OosMethod::avar ? param : 1.0;
                    spec.theta = m == OosMethod::robust ? param : 0.0;
                    auto r = out_of_sample(p, test, spec.uncertainty(), o);
                    ExperimentRow row{rep, T, n_hat, param, name, r.mean, interquartile_range(r.values)};
                    rows.push_back(row);
                    return row;
                };
                const ExperimentRow saa = cell(OosMethod::saa, 0.0, "saa");
                std::optional<ExperimentRow> best_rob, best_avar;
                for (double th : config.thetas) {
                    auto r = cell(OosMethod::robust, th, "robust");
                    if (!best_rob || r.v_avg < best_rob->v_avg) best_rob = r;
                }
                for (double a : config.alphas) {
                    auto r = cell(OosMethod::avar, a, "avar");
                    if (!best_avar || r.v_avg < best_avar->v_avg) best_avar = r;
                }
                if (best_rob) {
                    ExperimentRow b = *best_rob;
                    b.method = "robust_best";
                    rows.push_back(b);
                    ExperimentRow d = b;
                    d.method = "saa_minus_robust";
                    d.v_avg = saa.v_avg - b.v_avg;
                    d.iqr = saa.iqr - b.iqr;
                    rows.push_back(d);
                }
                if (best_avar) {
                    ExperimentRow b = *best_avar;
                    b.method = "avar_best";
                    rows.push_back(b);
                    ExperimentRow d = b;
                    d.method = "saa_minus_avar";
                    d.v_avg = saa.v_avg - b.v_avg;
                    d.iqr = saa.iqr - b.iqr;
                    rows.push_back(d);
                }
            }
    return rows;
}

std::string experiment_csv(const std::vector<ExperimentRow>& rows) {
    std::ostringstream os;
    os << "replication,T,n_hat,param,method,V_avg\n";
    for (const auto& r : rows)
        os << r.replication << ',' << r.T << ',' << r.n_hat << ',' << format_number(r.param) << ',' << r.method << ','
           << format_number(r.v_avg) << '\n';
    return os.str();
}

}  // namespace ndro
