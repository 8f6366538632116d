#include "ndro/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ndro {

std::string to_string(LPStatus s) {
    switch (s) {
        case LPStatus::optimal: return "optimal";
        case LPStatus::infeasible: return "infeasible";
        case LPStatus::unbounded: return "unbounded";
    }
    return "unknown";
}

LinearProgram::LinearProgram(int n)
    : c(VectorXd::Zero(n)), A_eq(0, n), b_eq(0), A_ub(0, n), b_ub(0) {}

void LinearProgram::add_eq(const VectorXd& row, double rhs) {
    if (row.size() != num_vars()) throw std::invalid_argument("add_eq: row length mismatch");
    A_eq.conservativeResize(A_eq.rows() + 1, num_vars());
    A_eq.row(A_eq.rows() - 1) = row.transpose();
    b_eq.conservativeResize(b_eq.size() + 1);
    b_eq(b_eq.size() - 1) = rhs;
}

void LinearProgram::add_ub(const VectorXd& row, double rhs) {
    if (row.size() != num_vars()) throw std::invalid_argument("add_ub: row length mismatch");
    A_ub.conservativeResize(A_ub.rows() + 1, num_vars());
    A_ub.row(A_ub.rows() - 1) = row.transpose();
    b_ub.conservativeResize(b_ub.size() + 1);
    b_ub(b_ub.size() - 1) = rhs;
}

void LinearProgram::validate() const {
    const int n = num_vars();
    if (A_eq.cols() != n && A_eq.rows() > 0) throw std::invalid_argument("A_eq column count");
    if (A_ub.cols() != n && A_ub.rows() > 0) throw std::invalid_argument("A_ub column count");
    if (b_eq.size() != A_eq.rows()) throw std::invalid_argument("b_eq length");
    if (b_ub.size() != A_ub.rows()) throw std::invalid_argument("b_ub length");
    if (!free.empty() && static_cast<int>(free.size()) != n) throw std::invalid_argument("free flag length");
    if (!c.allFinite() || !A_eq.allFinite() || !b_eq.allFinite() || !A_ub.allFinite() ||
        !b_ub.allFinite())
        throw std::invalid_argument("non-finite LP data");
}

namespace {

// Standard form  min cost'z  s.t.  A z = b (b >= 0), z >= 0.
struct Tableau {
    int m = 0;
    int n_struct = 0;  // split structural columns
    int n_slack = 0;
    int n_art = 0;
    MatrixXd A;        // m x total
    VectorXd b;
    VectorXd cost2;    // phase-2 costs
    std::vector<int> pos, neg;  // original var -> split columns (neg = -1 if none)
    std::vector<double> row_sign;
    std::vector<int> basis;
    int total() const { return n_struct + n_slack + n_art; }
    bool is_art(int j) const { return j >= n_struct + n_slack; }
};

Tableau build(const LinearProgram& lp) {
    Tableau tb;
    const int n = lp.num_vars();
    const int me = lp.num_eq(), mu = lp.num_ub();
    tb.m = me + mu;
    tb.pos.assign(n, -1);
    tb.neg.assign(n, -1);
    int k = 0;
    for (int j = 0; j < n; ++j) {
        tb.pos[j] = k++;
        if (lp.is_free(j)) tb.neg[j] = k++;
    }
    tb.n_struct = k;
    tb.n_slack = mu;
    tb.row_sign.assign(tb.m, 1.0);
    int n_art = 0;
    for (int i = 0; i < me; ++i) ++n_art;
    for (int i = 0; i < mu; ++i)
        if (lp.b_ub(i) < 0) ++n_art;
    tb.n_art = n_art;
    tb.A = MatrixXd::Zero(tb.m, tb.total());
    tb.b = VectorXd::Zero(tb.m);
    tb.cost2 = VectorXd::Zero(tb.total());
    for (int j = 0; j < n; ++j) {
        tb.cost2(tb.pos[j]) = lp.c(j);
        if (tb.neg[j] >= 0) tb.cost2(tb.neg[j]) = -lp.c(j);
    }
    tb.basis.assign(tb.m, -1);
    int art = tb.n_struct + tb.n_slack;
    auto fill_row = [&](int r, const auto& row, double rhs) {
        double s = rhs < 0 ? -1.0 : 1.0;
        tb.row_sign[r] = s;
        for (int j = 0; j < n; ++j) {
            tb.A(r, tb.pos[j]) = s * row(j);
            if (tb.neg[j] >= 0) tb.A(r, tb.neg[j]) = -s * row(j);
        }
        tb.b(r) = s * rhs;
    };
    for (int i = 0; i < me; ++i) {
        fill_row(i, lp.A_eq.row(i), lp.b_eq(i));
        tb.A(i, art) = 1.0;
        tb.basis[i] = art++;
    }
    for (int i = 0; i < mu; ++i) {
        int r = me + i;
        fill_row(r, lp.A_ub.row(i), lp.b_ub(i));
        int slack = tb.n_struct + i;
        tb.A(r, slack) = tb.row_sign[r];
        if (tb.row_sign[r] > 0) {
            tb.basis[r] = slack;
        } else {
            tb.A(r, art) = 1.0;
            tb.basis[r] = art++;
        }
    }
    return tb;
}

class Simplex {
public:
    Simplex(Tableau& tb, const SimplexOptions& opt) : tb_(tb), opt_(opt) {
        const int m = tb_.m;
        in_basis_.assign(tb_.total(), -1);
        for (int i = 0; i < m; ++i) in_basis_[tb_.basis[i]] = i;
        refactor();
        max_iter_ = opt_.max_iterations > 0 ? opt_.max_iterations : 50 * (m + tb_.total()) + 1000;
        harris_ = 1e-3 * opt_.feas_tol;
    }

    // Returns false when unbounded.
    bool run(const VectorXd& cost, bool allow_art) {
        const int m = tb_.m;
        const int total = tb_.total();
        const int stall_limit = 3 * (total + m);
        bool bland = false;
        int stall = 0;
        double last_obj = objective(cost);
        double cscale = 1.0;
        for (int j = 0; j < total; ++j) cscale = std::max(cscale, std::abs(cost(j)));
        const double dtol = opt_.opt_tol * cscale;
        int since_refactor = 0;
        while (true) {
            if (iterations_ > max_iter_) throw std::runtime_error("simplex iteration limit reached");
            VectorXd cb(m);
            for (int i = 0; i < m; ++i) cb(i) = cost(tb_.basis[i]);
            VectorXd y = Binv_.transpose() * cb;
            VectorXd d = cost - tb_.A.transpose() * y;
            int q = -1;
            double best = -dtol;
            for (int j = 0; j < total; ++j) {
                if (in_basis_[j] >= 0) continue;
                if (!allow_art && tb_.is_art(j)) continue;
                if (d(j) < -dtol) {
                    if (bland) { q = j; break; }
                    if (d(j) < best) { best = d(j); q = j; }
                }
            }
            if (q < 0) {
                if (since_refactor > 0) {
                    refactor();
                    since_refactor = 0;
                    continue;
                }
                return true;
            }
            VectorXd alpha = Binv_ * tb_.A.col(q);
            // Harris two-pass ratio test: bound the step with a small primal
            // tolerance, then take the largest pivot among the rows that block.
            double amax = 0.0;
            for (int i = 0; i < m; ++i) amax = std::max(amax, alpha(i));
            const double ptol = opt_.pivot_tol * std::max(1.0, amax);
            double tbound = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i)
                if (alpha(i) > ptol) tbound = std::min(tbound, (std::max(xB_(i), 0.0) + harris_) / alpha(i));
            int r = -1;
            for (int i = 0; i < m; ++i) {
                if (alpha(i) <= ptol) continue;
                if (std::max(xB_(i), 0.0) / alpha(i) > tbound) continue;
                if (r < 0) { r = i; continue; }
                bool take = bland ? tb_.basis[i] < tb_.basis[r] : alpha(i) > alpha(r);
                if (take) r = i;
            }
            if (r < 0) {
                ray_col_ = q;
                ray_alpha_ = alpha;
                return false;
            }
            pivot(r, q, alpha);
            ++iterations_;
            if (++since_refactor >= opt_.refactor_every) {
                refactor();
                since_refactor = 0;
            }
            double obj = objective(cost);
            if (obj < last_obj - 1e-12 * (1.0 + std::abs(last_obj))) {
                stall = 0;
                last_obj = obj;
            } else if (++stall >= stall_limit) {
                bland = true;
            }
        }
    }

    // Pivot basic artificials out where possible after phase 1.
    void drive_out_artificials() {
        const int m = tb_.m;
        for (int r = 0; r < m; ++r) {
            if (!tb_.is_art(tb_.basis[r])) continue;
            Eigen::RowVectorXd row = Binv_.row(r) * tb_.A;
            int q = -1;
            double best = opt_.pivot_tol * 1e3;
            for (int j = 0; j < tb_.n_struct + tb_.n_slack; ++j) {
                if (in_basis_[j] >= 0) continue;
                if (std::abs(row(j)) > best) { best = std::abs(row(j)); q = j; }
            }
            if (q < 0) continue;  // redundant row, artificial stays at zero
            VectorXd alpha = Binv_ * tb_.A.col(q);
            pivot(r, q, alpha);
            ++iterations_;
        }
        refactor();
    }

    double objective(const VectorXd& cost) const {
        double v = 0.0;
        for (int i = 0; i < tb_.m; ++i) v += cost(tb_.basis[i]) * xB_(i);
        return v;
    }

    const VectorXd& xB() const { return xB_; }
    double rcond() const { return rcond_; }
    int ray_col() const { return ray_col_; }
    const VectorXd& ray_alpha() const { return ray_alpha_; }
    const MatrixXd& Binv() const { return Binv_; }
    int iterations() const { return iterations_; }

private:
    void pivot(int r, int q, const VectorXd& alpha) {
        const int m = tb_.m;
        const double ar = alpha(r);
        const double t = xB_(r) / ar;
        for (int i = 0; i < m; ++i)
            if (i != r) xB_(i) -= t * alpha(i);
        xB_(r) = t;
        Binv_.row(r) /= ar;
        for (int i = 0; i < m; ++i)
            if (i != r && alpha(i) != 0.0) Binv_.row(i) -= alpha(i) * Binv_.row(r);
        in_basis_[tb_.basis[r]] = -1;
        tb_.basis[r] = q;
        in_basis_[q] = r;
    }

    void refactor() {
        const int m = tb_.m;
        if (m == 0) {
            Binv_.resize(0, 0);
            xB_.resize(0);
            return;
        }
        MatrixXd B(m, m);
        for (int i = 0; i < m; ++i) B.col(i) = tb_.A.col(tb_.basis[i]);
        Eigen::FullPivLU<MatrixXd> lu(B);
        Binv_ = lu.inverse();
        xB_ = lu.solve(tb_.b);
        xB_ += lu.solve(VectorXd(tb_.b - B * xB_));
        rcond_ = lu.rcond();
    }

    Tableau& tb_;
    const SimplexOptions& opt_;
    MatrixXd Binv_;
    VectorXd xB_;
    std::vector<int> in_basis_;
    int iterations_ = 0;
    int max_iter_ = 0;
    double harris_ = 0.0;
    double rcond_ = 1.0;
    int ray_col_ = -1;
    VectorXd ray_alpha_;
};

// Primal residual check of an optimal answer, relative per row.
bool primal_ok(const LinearProgram& lp, const VectorXd& x) {
    const double tol = 1e-9;
    const VectorXd ax = x.cwiseAbs();
    for (int i = 0; i < lp.num_eq(); ++i) {
        const double scale = 1.0 + std::abs(lp.b_eq(i)) + lp.A_eq.row(i).cwiseAbs().dot(ax);
        if (std::abs(lp.A_eq.row(i).dot(x) - lp.b_eq(i)) > tol * scale) return false;
    }
    for (int i = 0; i < lp.num_ub(); ++i) {
        const double scale = 1.0 + std::abs(lp.b_ub(i)) + lp.A_ub.row(i).cwiseAbs().dot(ax);
        if (lp.A_ub.row(i).dot(x) - lp.b_ub(i) > tol * scale) return false;
    }
    const double xs = 1.0 + (x.size() ? ax.maxCoeff() : 0.0);
    for (int j = 0; j < lp.num_vars(); ++j)
        if (!lp.is_free(j) && x(j) < -tol * xs) return false;
    return true;
}

// The unbounded verdict holds when the pivot column gives a descent ray of the
// standard form: A r = 0, r >= 0, cost'r < 0.
bool ray_ok(const Tableau& tb, int q, const VectorXd& alpha) {
    if (q < 0) return false;
    VectorXd r = VectorXd::Zero(tb.total());
    r(q) = 1.0;
    for (int i = 0; i < tb.m; ++i) r(tb.basis[i]) -= alpha(i);
    const double rs = r.cwiseAbs().maxCoeff();
    if (r.minCoeff() < -1e-9 * rs) return false;
    if (tb.m > 0 && (tb.A * r).cwiseAbs().maxCoeff() > 1e-8 * rs * (1.0 + tb.A.cwiseAbs().maxCoeff())) return false;
    return tb.cost2.dot(r) < 0.0;
}

LPSolution solve_once(const LinearProgram& lp, const SimplexOptions& opt, bool& trusted) {
    trusted = false;
    Tableau tb = build(lp);
    Simplex sx(tb, opt);
    LPSolution sol;
    const int n = lp.num_vars();

    if (tb.n_art > 0) {
        VectorXd cost1 = VectorXd::Zero(tb.total());
        double scale = 1.0;
        for (int i = 0; i < tb.m; ++i) {
            if (tb.is_art(tb.basis[i])) scale = std::max(scale, std::abs(tb.b(i)));
        }
        for (int j = tb.n_struct + tb.n_slack; j < tb.total(); ++j) cost1(j) = 1.0;
        sx.run(cost1, true);
        if (sx.objective(cost1) > opt.feas_tol * scale) {
            sol.status = LPStatus::infeasible;
            sol.iterations = sx.iterations();
            trusted = sx.rcond() > 1e-13;
            return sol;
        }
        sx.drive_out_artificials();
    }

    bool bounded = sx.run(tb.cost2, false);
    sol.iterations = sx.iterations();
    if (!bounded) {
        sol.status = LPStatus::unbounded;
        trusted = ray_ok(tb, sx.ray_col(), sx.ray_alpha());
        return sol;
    }
    VectorXd z = VectorXd::Zero(tb.total());
    for (int i = 0; i < tb.m; ++i) z(tb.basis[i]) = sx.xB()(i);
    sol.x = VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
        double v = z(tb.pos[j]);
        if (tb.neg[j] >= 0) v -= z(tb.neg[j]);
        sol.x(j) = v;
    }
    VectorXd cb(tb.m);
    for (int i = 0; i < tb.m; ++i) cb(i) = tb.cost2(tb.basis[i]);
    VectorXd ystd = tb.m > 0 ? VectorXd(sx.Binv().transpose() * cb) : VectorXd(0);
    const int me = lp.num_eq();
    sol.y_eq = VectorXd(me);
    sol.y_ub = VectorXd(lp.num_ub());
    for (int i = 0; i < me; ++i) sol.y_eq(i) = tb.row_sign[i] * ystd(i);
    for (int i = 0; i < lp.num_ub(); ++i) sol.y_ub(i) = tb.row_sign[me + i] * ystd(me + i);
    sol.objective = lp.c.dot(sol.x);
    sol.status = LPStatus::optimal;
    trusted = sol.x.allFinite() && ystd.allFinite() && sx.rcond() > 1e-13 && primal_ok(lp, sol.x);
    return sol;
}

}  // namespace

LPSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opt) {
    lp.validate();
    // Degenerate cutting-plane models can drive the basis towards singularity;
    // retry with more conservative pivoting before giving up.
    std::vector<SimplexOptions> ladder{opt};
    SimplexOptions o = opt;
    o.refactor_every = 1;
    o.pivot_tol = std::max(opt.pivot_tol * 1e-2, 1e-11);
    ladder.push_back(o);
    o.pivot_tol = std::max(opt.pivot_tol * 1e2, 1e-5);
    ladder.push_back(o);
    for (const auto& attempt : ladder) {
        bool trusted = false;
        LPSolution sol = solve_once(lp, attempt, trusted);
        if (trusted) return sol;
    }
    throw std::runtime_error("simplex failed to reach a numerically reliable answer");
}

}  // namespace ndro
