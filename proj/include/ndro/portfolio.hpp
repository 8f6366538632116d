#pragma once

#include "ndro/dro_dp.hpp"
#include "ndro/io.hpp"
#include "ndro/model.hpp"
#include "ndro/sddp.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace ndro {

/// Long-only portfolio with a kinked terminal dis-utility
/// U(W) = max(-a0 - r0 W, -a1 - r1 W).
struct PortfolioSpec {
    int n = 5;
    double W1 = 10000.0;
    double a0 = 0.0, a1 = 5000.0;
    double r0 = 1.0, r1 = 0.5;
    double theta = 0.0;
    Norm norm = Norm::l2;  // norm of the holdings in the perturbation term
    int T = 3;

    void validate() const;
    double disutility(double wealth) const { return std::max(-a0 - r0 * wealth, -a1 - r1 * wealth); }
    UncertaintySpec uncertainty() const { return UncertaintySpec::hard_inf(theta, norm); }
};

/// Moments of monthly net returns.
struct ReturnModel {
    VectorXd mu;
    MatrixXd Sigma;

    void validate() const;
    /// Five ETFs (EEM, TLT, SCHP, XES, SKF).
    static ReturnModel builtin();
};

/// Stage 1: 1'x = W1. Stages 2..T-1: 1'x_t = xi_t'x_{t-1}. Stage T: terminal block over
/// (x+, x-, s1, s2) with x+ - x- - s_k = -a_k - r_k xi_T'x_{T-1}. Uncertainty sits in B_t.
MultistageProblem build_portfolio_program(const PortfolioSpec& spec, const Nominal& nominal);

/// Worst terminal cost over the four (row, sign) perturbations.
double terminal_q(const PortfolioSpec& spec, const VectorXd& x, const VectorXd& xi_hat);

/// Gross returns exp(Z) with Z Gaussian, matched so that exp(Z) - 1 has mean mu and covariance Sigma.
std::vector<VectorXd> sample_returns(const ReturnModel& model, int count, std::uint64_t seed);

/// Stagewise marginals with `per_stage` equally weighted return samples at stages 2..T.
StagewiseMarginals sample_marginals(const ReturnModel& model, int stages, int per_stage, std::uint64_t seed);

enum class OosMethod { robust, saa, avar };
enum class TrainSolver { automatic, exact, sddp };

struct OosOptions {
    OosMethod method = OosMethod::robust;
    double alpha = 1.0;  // AVaR level
    int M = 20;          // testing paths
    std::uint64_t seed = 0;
    TrainSolver solver = TrainSolver::automatic;
    ExactOptions exact = training_defaults();
    SddpConfig sddp;

    static ExactOptions training_defaults() {
        ExactOptions e;
        e.tol = 1e-8;  // smooth norm terms make tighter gaps costly
        return e;
    }
};

struct OosResult {
    std::vector<double> values;  // realized total cost per testing path
    double mean = 0.0;
    VectorXd first_stage;
    std::string solver;          // "exact" or "sddp"
};

/// Trains on the problem's marginals, then along M testing paths re-solves each stage
/// at the observed outcome with the trained cost-to-go and accumulates c_t'x_t.
/// robust uses u; saa uses theta = 0; avar uses theta = 0 with AVaR aggregation.
OosResult out_of_sample(const MultistageProblem& training, const StagewiseMarginals& testing,
                        const UncertaintySpec& u, const OosOptions& opt);

double interquartile_range(std::vector<double> values);

struct ExperimentConfig {
    std::vector<int> T{3};
    std::vector<int> n_hat{2, 5};
    int n_test = 20;
    int M = 20;
    std::vector<double> thetas{0.1, 0.3, 0.5};
    std::vector<double> alphas;
    int replications = 30;
    std::uint64_t seed = 0;
    PortfolioSpec spec;
    ReturnModel model = ReturnModel::builtin();
    SddpConfig sddp;
    TrainSolver solver = TrainSolver::automatic;

    void validate() const;
};

ExperimentConfig experiment_from_json(const json& j);

struct ExperimentRow {
    int replication = 0;
    int T = 0;
    int n_hat = 0;
    double param = 0.0;   // theta, alpha, or 0 for saa
    std::string method;   // saa, robust, avar, robust_best, avar_best, saa_minus_robust
    double v_avg = 0.0;
    double iqr = 0.0;     // of the per-path values (not written to the CSV)
};

/// One row per (replication, cell); the *_best rows pick the parameter with the lowest
/// out-of-sample mean, i.e. they are tuned on the test metric.
std::vector<ExperimentRow> run_experiment(const ExperimentConfig& config);

std::string experiment_csv(const std::vector<ExperimentRow>& rows);

}  // namespace ndro
