#pragma once

#include "rosa/constraints.hpp"
#include "rosa/pomdp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace rosa {

enum class SolveStatus {
    converged,
    max_iters,
    line_search_failure,
    time_limit,
    numerical_failure,
};

inline const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::max_iters: return "max_iters";
        case SolveStatus::line_search_failure: return "line_search_failure";
        case SolveStatus::time_limit: return "time_limit";
        case SolveStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

/// Smooth equality constraint g(x) = 0 exposing value, gradient, and Hessian.
class SmoothEq {
public:
    virtual ~SmoothEq() = default;
    virtual double value(const Vector& x) const = 0;
    virtual void add_gradient(const Vector& x, double w, Vector& out) const = 0;
    virtual void add_hessian(const Vector& x, double w, Matrix& out) const = 0;
};

/// Quadratic (or bilinear) equality with optional affine part:
/// sum coeff * x_i * x_j + sum l_k * x_k + constant = 0.
class QuadraticConstraint final : public SmoothEq {
public:
    QuadraticConstraint(std::vector<QuadTerm> quad, std::vector<std::pair<int, double>> lin,
                        double constant)
        : quad_(std::move(quad)), lin_(std::move(lin)), constant_(constant) {}

    explicit QuadraticConstraint(const QuadraticEquality& eq) : quad_(eq.terms) {}

    double value(const Vector& x) const override {
        double v = constant_;
        for (const auto& t : quad_) v += t.coeff * x(t.i) * x(t.j);
        for (const auto& [idx, c] : lin_) v += c * x(idx);
        return v;
    }

    void add_gradient(const Vector& x, double w, Vector& out) const override {
        for (const auto& t : quad_) {
            out(t.i) += w * t.coeff * x(t.j);
            out(t.j) += w * t.coeff * x(t.i);
        }
        for (const auto& [idx, c] : lin_) out(idx) += w * c;
    }

    void add_hessian(const Vector&, double w, Matrix& out) const override {
        for (const auto& t : quad_) {
            out(t.i, t.j) += w * t.coeff;
            out(t.j, t.i) += w * t.coeff;
        }
    }

private:
    std::vector<QuadTerm> quad_;
    std::vector<std::pair<int, double>> lin_;
    double constant_ = 0.0;
};

/**
 * maximize <objective, x>
 * subject to linear equalities, smooth equalities, and x_i >= lower_bounds[i]
 * (use -inf for free coordinates). start_point must be strictly above every
 * finite bound.
 */
struct NlpProblem {
    int n_vars = 0;
    Vector objective;
    std::vector<LinearEquality> linear_eqs;
    std::vector<std::shared_ptr<const SmoothEq>> smooth_eqs;
    Vector lower_bounds;
    Vector start_point;

    int n_eqs() const {
        return static_cast<int>(linear_eqs.size() + smooth_eqs.size());
    }

    void validate() const {
        if (n_vars <= 0) throw InvalidInput("NlpProblem: n_vars must be positive");
        if (objective.size() != n_vars || lower_bounds.size() != n_vars ||
            start_point.size() != n_vars)
            throw InvalidInput("NlpProblem: vector sizes must equal n_vars");
        if (!objective.allFinite() || !start_point.allFinite())
            throw InvalidInput("NlpProblem: non-finite objective or start point");
        for (int i = 0; i < n_vars; ++i) {
            if (std::isfinite(lower_bounds(i)) && !(start_point(i) > lower_bounds(i)))
                throw InvalidInput("NlpProblem: start_point(" + std::to_string(i) +
                                   ") not strictly above its lower bound");
        }
        for (const auto& eq : linear_eqs)
            for (const auto& [idx, c] : eq.coeffs) {
                (void)c;
                if (idx < 0 || idx >= n_vars)
                    throw InvalidInput("NlpProblem: linear equality index out of range");
            }
    }
};

struct SolveOptions {
    double kkt_tol = 1e-8;
    int max_iters = 500;
    double barrier_init = 0.1;
    double barrier_reduction = 0.2;
    double max_wall_seconds = 300.0;
    std::ostream* log = nullptr;  // one line per iteration when set

    void validate() const {
        if (!(kkt_tol > 0.0) || max_iters <= 0 || !(barrier_init > 0.0) ||
            !(barrier_reduction > 0.0 && barrier_reduction < 1.0) || !(max_wall_seconds > 0.0))
            throw InvalidInput("SolveOptions: all parameters must be positive, "
                               "barrier_reduction in (0,1)");
    }
};

struct NlpSolution {
    Vector x;
    double objective_value = 0.0;
    SolveStatus status = SolveStatus::numerical_failure;
    double kkt_residual = std::numeric_limits<double>::infinity();
    double constraint_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    double wall_seconds = 0.0;
    Vector lambda;  // equality multipliers, maximization convention
    Vector z;       // bound multipliers, zero on free coordinates
};

struct KktResiduals {
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;
    double bound_violation = 0.0;

    double max_all() const {
        return std::max(std::max(stationarity, primal),
                        std::max(complementarity, bound_violation));
    }
};

/**
 * First-order optimality residuals of the maximization problem at (x, lambda, z):
 * stationarity of objective + J^T lambda + z, equality feasibility, and
 * complementarity z_i * (x_i - l_i) on bounded coordinates. Pure function,
 * independent of the solve path.
 */
inline KktResiduals check_kkt(const NlpProblem& problem, const Vector& x, const Vector& lambda,
                              const Vector& z) {
    const int n = problem.n_vars;
    const int m = problem.n_eqs();
    if (x.size() != n || z.size() != n || lambda.size() != m)
        throw InvalidInput("check_kkt: dimension mismatch");

    Vector stat = problem.objective;
    KktResiduals res;
    int row = 0;
    for (const auto& eq : problem.linear_eqs) {
        const double g = eq.value(x);
        res.primal = std::max(res.primal, std::abs(g));
        for (const auto& [idx, c] : eq.coeffs) stat(idx) += lambda(row) * c;
        ++row;
    }
    for (const auto& eq : problem.smooth_eqs) {
        const double g = eq->value(x);
        res.primal = std::max(res.primal, std::abs(g));
        eq->add_gradient(x, lambda(row), stat);
        ++row;
    }
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(problem.lower_bounds(i))) continue;
        stat(i) += z(i);
        const double slack = x(i) - problem.lower_bounds(i);
        res.complementarity = std::max(res.complementarity, std::abs(z(i) * slack));
        res.bound_violation = std::max(res.bound_violation, std::max(-slack, -z(i)));
    }
    res.bound_violation = std::max(res.bound_violation, 0.0);
    res.stationarity = stat.cwiseAbs().maxCoeff();
    return res;
}

namespace detail {

/// Primal-dual interior-point method with a log barrier for the bounds,
/// Newton steps on the perturbed KKT system, inertia-corrected symmetric
/// indefinite factorizations, fraction-to-boundary steps, and a backtracking
/// line search on an l1 exact-penalty merit function with one second-order
/// correction per step. Smooth constraints with weak gradients at the start
/// point are scaled up internally so their multipliers stay moderate; all
/// reported residuals and multipliers refer to the original constraints.
class InteriorPoint {
public:
    InteriorPoint(const NlpProblem& problem, const SolveOptions& options)
        : p_(problem),
          opt_(options),
          n_(problem.n_vars),
          m_lin_(static_cast<int>(problem.linear_eqs.size())),
          m_(problem.n_eqs()) {
        for (int i = 0; i < n_; ++i)
            if (std::isfinite(p_.lower_bounds(i))) bounded_.push_back(i);

        // Per-constraint scaling: linear rows stay as given; smooth rows with
        // gradient infinity-norm below one at the start are scaled up.
        cscale_ = Vector::Ones(m_);
        Vector grad(n_);
        for (std::size_t j = 0; j < p_.smooth_eqs.size(); ++j) {
            grad.setZero();
            p_.smooth_eqs[j]->add_gradient(p_.start_point, 1.0, grad);
            const double norm = grad.cwiseAbs().maxCoeff();
            cscale_(m_lin_ + static_cast<int>(j)) =
                1.0 / std::clamp(norm, 1e-6, 1.0);
        }
    }

    NlpSolution run() {
        const auto t_start = std::chrono::steady_clock::now();
        auto elapsed = [&] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count();
        };

        check_linear_consistency();

        const double mu_min = std::max(1e-13, 0.01 * opt_.kkt_tol);
        double mu = opt_.barrier_init;
        double nu = 1.0;  // merit penalty, monotonically nondecreasing

        Vector x = p_.start_point;
        Vector lam = Vector::Zero(m_);  // multipliers of the scaled constraints
        Vector z = Vector::Zero(n_);
        for (int i : bounded_) z(i) = mu / (x(i) - p_.lower_bounds(i));

        Vector g(m_);
        Matrix jac(m_, n_);
        NlpSolution out;
        out.status = SolveStatus::max_iters;
        int iter = 0;
        int restorations = 0;
        bool dual_refreshed = false;
        double step_len = 0.0;

        // Merit and constraint values use the scaled rows throughout.
        auto merit = [&](const Vector& point, const Vector& values) {
            return -p_.objective.dot(point) + barrier(point, mu) + nu * values.cwiseAbs().sum();
        };

        for (; iter < opt_.max_iters; ++iter) {
            if (!eval_constraints(x, g) || !g.allFinite()) {
                out.status = SolveStatus::numerical_failure;
                break;
            }
            eval_jacobian(x, jac);
            if (!jac.allFinite()) {
                out.status = SolveStatus::numerical_failure;
                break;
            }

            // Stationarity is scale-invariant; feasibility is reported for the
            // original (unscaled) constraints.
            Vector r_stat = -p_.objective + jac.transpose() * lam - z;
            const double stat = r_stat.cwiseAbs().maxCoeff();
            double primal_raw = 0.0;
            double primal_scaled = 0.0;
            for (int j = 0; j < m_; ++j) {
                primal_raw = std::max(primal_raw, std::abs(g(j)) / cscale_(j));
                primal_scaled = std::max(primal_scaled, std::abs(g(j)));
            }
            double comp0 = 0.0;
            double comp_mu = 0.0;
            for (int i : bounded_) {
                const double xz = (x(i) - p_.lower_bounds(i)) * z(i);
                comp0 = std::max(comp0, std::abs(xz));
                comp_mu = std::max(comp_mu, std::abs(xz - mu));
            }
            // Multiplier-size scaling for the barrier schedule; convergence
            // itself is declared on unscaled residuals.
            const double denom = static_cast<double>(std::max<std::size_t>(
                1, bounded_.size() + static_cast<std::size_t>(m_)));
            const double s_dual =
                std::max(100.0, (lam.cwiseAbs().sum() + z.cwiseAbs().sum()) / denom) / 100.0;
            const double s_comp =
                std::max(100.0, z.cwiseAbs().sum() /
                                    static_cast<double>(std::max<std::size_t>(
                                        1, bounded_.size()))) /
                100.0;

            if (opt_.log) {
                (*opt_.log) << "ipm iter=" << iter << " obj=" << p_.objective.dot(x)
                            << " stat=" << stat << " primal=" << primal_raw
                            << " comp=" << comp0 << " mu=" << mu << " alpha=" << step_len
                            << " nu=" << nu << " lam=" << lam.cwiseAbs().maxCoeff()
                            << " dx=" << last_delta_x_ << " dc=" << last_delta_c_ << '\n';
            }

            if (std::max(stat, std::max(primal_raw, comp0)) <= opt_.kkt_tol) {
                out.status = SolveStatus::converged;
                out.kkt_residual = std::max(stat, comp0);
                out.constraint_residual = primal_raw;
                break;
            }
            if (elapsed() > opt_.max_wall_seconds) {
                out.status = SolveStatus::time_limit;
                break;
            }

            // Shrink the barrier once the perturbed system is solved to within mu.
            while (std::max(stat / s_dual, std::max(primal_scaled, comp_mu / s_comp)) <= mu &&
                   mu > mu_min) {
                mu = std::max(mu_min, opt_.barrier_reduction * mu);
                comp_mu = 0.0;
                for (int i : bounded_)
                    comp_mu = std::max(
                        comp_mu, std::abs((x(i) - p_.lower_bounds(i)) * z(i) - mu));
            }

            // Newton step on (x, lambda) with z eliminated.
            Matrix hess = Matrix::Zero(n_, n_);
            for (std::size_t j = 0; j < p_.smooth_eqs.size(); ++j) {
                const int row = m_lin_ + static_cast<int>(j);
                p_.smooth_eqs[j]->add_hessian(x, lam(row) * cscale_(row), hess);
            }
            Vector sigma = Vector::Zero(n_);
            for (int i : bounded_) sigma(i) = z(i) / (x(i) - p_.lower_bounds(i));

            Vector rhs(n_ + m_);
            rhs.head(n_) = p_.objective - jac.transpose() * lam;
            for (int i : bounded_) rhs(i) += mu / (x(i) - p_.lower_bounds(i));
            rhs.tail(m_) = -g;

            Vector step(n_ + m_);
            if (!factorize_kkt(hess, jac, sigma) || !solve_with_factor(rhs, step)) {
                out.status = SolveStatus::numerical_failure;
                break;
            }
            Vector dx = step.head(n_);
            Vector dlam = step.tail(m_);

            // Penalty update from the step's model decrease (the multiplier
            // norm overestimates wildly when constraint gradients are weak):
            // nu must dominate the barrier-objective slope relative to the
            // current violation for the step to be a merit descent direction.
            double phi_slope = -p_.objective.dot(dx);
            for (int i : bounded_) phi_slope -= mu / (x(i) - p_.lower_bounds(i)) * dx(i);
            double curvature = dx.dot(hess * dx);
            for (int i : bounded_) curvature += sigma(i) * dx(i) * dx(i);
            const double violation1 = g.cwiseAbs().sum();
            if (violation1 > 1e-14) {
                const double needed =
                    (phi_slope + (curvature > 0.0 ? 0.5 * curvature : 0.0)) / (0.5 * violation1);
                if (needed + 1.0 > nu) nu = std::min(needed + 1.0, 1e12);
            }

            const double phi0 = merit(x, g);
            double descent = phi_slope - nu * violation1;
            descent = std::min(descent, -1e-16 * std::max(1.0, std::abs(phi0)));

            const double alpha_max = fraction_to_boundary(x, dx);
            double alpha = alpha_max;
            bool accepted = false;
            Vector x_trial(n_), g_trial(m_);
            for (int backtrack = 0; backtrack < 40; ++backtrack) {
                x_trial = x + alpha * dx;
                const bool trial_ok = eval_constraints(x_trial, g_trial) && g_trial.allFinite();
                if (trial_ok) {
                    const double phi_trial = merit(x_trial, g_trial);
                    if (std::isfinite(phi_trial) && phi_trial <= phi0 + 1e-4 * alpha * descent) {
                        accepted = true;
                        break;
                    }
                }

                // Second-order corrections at the first rejection: re-solve
                // with the constraint values of the rejected trial point to
                // absorb constraint curvature before shortening the step.
                // Repeated while each correction keeps cutting the violation.
                if (backtrack == 0 && trial_ok) {
                    Vector g_soc = alpha * g + g_trial;
                    double prev_violation = g_trial.cwiseAbs().sum();
                    bool soc_accepted = false;
                    for (int soc_round = 0; soc_round < 4; ++soc_round) {
                        Vector rhs_soc = rhs;
                        rhs_soc.tail(m_) = -g_soc;
                        Vector step_soc(n_ + m_);
                        if (!solve_with_factor(rhs_soc, step_soc)) break;
                        const Vector dx_soc = step_soc.head(n_);
                        const double alpha_soc = fraction_to_boundary(x, dx_soc);
                        Vector x_soc = x + alpha_soc * dx_soc;
                        Vector g_new(m_);
                        if (!eval_constraints(x_soc, g_new) || !g_new.allFinite()) break;
                        const double phi_soc = merit(x_soc, g_new);
                        if (std::isfinite(phi_soc) &&
                            phi_soc <= phi0 + 1e-4 * alpha_soc * descent) {
                            x_trial = std::move(x_soc);
                            dx = dx_soc;
                            dlam = step_soc.tail(m_);
                            alpha = alpha_soc;
                            soc_accepted = true;
                            break;
                        }
                        const double violation = g_new.cwiseAbs().sum();
                        if (violation > 0.5 * prev_violation) break;
                        prev_violation = violation;
                        g_soc = alpha_soc * g_soc + g_new;
                    }
                    if (soc_accepted) {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }

            if (!accepted) {
                if (opt_.log) {
                    Eigen::Index imax = 0;
                    Vector rs = -p_.objective + jac.transpose() * lam - z;
                    rs.cwiseAbs().maxCoeff(&imax);
                    (*opt_.log) << "  FAIL iter=" << iter << " stat_at=" << imax
                        << " rs=" << rs(imax) << " x_i=" << x(imax)
                        << " z_i=" << z(imax) << " obj_i=" << p_.objective(imax)
                        << " dlam_max=" << dlam.cwiseAbs().maxCoeff()
                        << " dx_max=" << dx.cwiseAbs().maxCoeff()
                        << " alpha_max=" << alpha_max
                        << " descent=" << descent << " phi0=" << phi0 << '\n';
                }
                // First fallback: refresh the multipliers by least squares at
                // the current point. Degenerate constraint gradients let the
                // dual iterates drift; a refresh restores a usable direction.
                if (!dual_refreshed) {
                    dual_refreshed = true;
                    refresh_multipliers(jac, z, lam);
                    for (int i : bounded_) z(i) = mu / (x(i) - p_.lower_bounds(i));
                    step_len = 0.0;
                    continue;
                }
                if (restorations < 5 && restore_feasibility(x, mu)) {
                    ++restorations;
                    lam.setZero();
                    for (int i : bounded_) z(i) = mu / (x(i) - p_.lower_bounds(i));
                    step_len = 0.0;
                    continue;
                }
                out.status = SolveStatus::line_search_failure;
                break;
            }
            dual_refreshed = false;

            Vector dz = Vector::Zero(n_);
            for (int i : bounded_) {
                const double slack = x(i) - p_.lower_bounds(i);
                dz(i) = mu / slack - z(i) - sigma(i) * dx(i);
            }
            const double alpha_z = fraction_to_boundary_dual(z, dz);
            x = x_trial;
            lam += alpha * dlam;
            z += alpha_z * dz;
            // Keep bound multipliers within a wide band around mu / slack.
            constexpr double kSigmaCap = 1e10;
            for (int i : bounded_) {
                const double slack = x(i) - p_.lower_bounds(i);
                z(i) = std::clamp(z(i), mu / (kSigmaCap * slack), kSigmaCap * mu / slack);
            }
            step_len = alpha;
        }

        // Final residuals (recomputed whenever the loop exited without them).
        if (out.status != SolveStatus::converged && eval_constraints(x, g) && g.allFinite()) {
            eval_jacobian(x, jac);
            Vector r_stat = -p_.objective + jac.transpose() * lam - z;
            double comp0 = 0.0;
            for (int i : bounded_)
                comp0 = std::max(comp0, std::abs((x(i) - p_.lower_bounds(i)) * z(i)));
            out.kkt_residual = std::max(r_stat.cwiseAbs().maxCoeff(), comp0);
            double primal_raw = 0.0;
            for (int j = 0; j < m_; ++j)
                primal_raw = std::max(primal_raw, std::abs(g(j)) / cscale_(j));
            out.constraint_residual = primal_raw;
        }
        out.x = x;
        out.objective_value = p_.objective.dot(x);
        out.iterations = iter;
        out.wall_seconds = elapsed();
        // Report multipliers of the original constraints in the maximization
        // convention.
        out.lambda = -(lam.cwiseProduct(cscale_));
        out.z = z;
        return out;
    }

private:
    /// Scaled constraint values.
    bool eval_constraints(const Vector& x, Vector& g) const {
        for (int i = 0; i < m_lin_; ++i) g(i) = p_.linear_eqs[i].value(x);
        for (std::size_t j = 0; j < p_.smooth_eqs.size(); ++j) {
            const int row = m_lin_ + static_cast<int>(j);
            g(row) = cscale_(row) * p_.smooth_eqs[j]->value(x);
        }
        return g.allFinite();
    }

    /// Scaled constraint Jacobian.
    void eval_jacobian(const Vector& x, Matrix& jac) const {
        jac.setZero();
        for (int i = 0; i < m_lin_; ++i)
            for (const auto& [idx, c] : p_.linear_eqs[i].coeffs) jac(i, idx) += c;
        Vector grad(n_);
        for (std::size_t j = 0; j < p_.smooth_eqs.size(); ++j) {
            const int row = m_lin_ + static_cast<int>(j);
            grad.setZero();
            p_.smooth_eqs[j]->add_gradient(x, cscale_(row), grad);
            jac.row(row) = grad.transpose();
        }
    }

    double barrier(const Vector& x, double mu) const {
        double b = 0.0;
        for (int i : bounded_) b -= mu * std::log(x(i) - p_.lower_bounds(i));
        return b;
    }

    double fraction_to_boundary(const Vector& x, const Eigen::Ref<const Vector>& dx) const {
        constexpr double kTau = 0.995;
        double alpha = 1.0;
        for (int i : bounded_)
            if (dx(i) < 0.0)
                alpha = std::min(alpha, -kTau * (x(i) - p_.lower_bounds(i)) / dx(i));
        return alpha;
    }

    double fraction_to_boundary_dual(const Vector& z, const Vector& dz) const {
        constexpr double kTau = 0.995;
        double alpha = 1.0;
        for (int i : bounded_)
            if (dz(i) < 0.0) alpha = std::min(alpha, -kTau * z(i) / dz(i));
        return alpha;
    }

    /// Rejects problems whose linear equalities are mutually inconsistent
    /// (rank-deficient with right-hand side outside the range).
    void check_linear_consistency() const {
        if (m_lin_ == 0) return;
        Matrix a = Matrix::Zero(m_lin_, n_);
        Vector b(m_lin_);
        for (int i = 0; i < m_lin_; ++i) {
            for (const auto& [idx, c] : p_.linear_eqs[i].coeffs) a(i, idx) += c;
            b(i) = -p_.linear_eqs[i].constant;
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(a);
        if (qr.rank() == m_lin_) return;
        const Vector residual = a * qr.solve(b) - b;
        const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
        if (residual.cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw InvalidInput("nlp solve: linear equalities are infeasible");
    }

    /**
     * Factorization of the symmetric indefinite KKT matrix with inertia
     * correction. Too few positive pivots raise the Hessian-block shift on a
     * 1e-8, x10 ladder; zero pivots (rank-deficient constraint gradients)
     * raise the dual-block shift instead. The matrix is symmetrically
     * equilibrated before factoring; inertia is invariant under the
     * congruence, and the scaling keeps the barrier-induced magnitude spread
     * out of the pivot classification.
     */
    bool factorize_kkt(const Matrix& hess, const Matrix& jac, const Vector& sigma) {
        const int total = n_ + m_;
        Matrix kkt(total, total);
        scale_.resize(total);
        double delta_x = 0.0;
        double delta_c = 0.0;
        for (int attempt = 0; attempt < 60; ++attempt) {
            kkt.setZero();
            kkt.topLeftCorner(n_, n_) = hess;
            kkt.topLeftCorner(n_, n_).diagonal() += sigma;
            kkt.topLeftCorner(n_, n_).diagonal().array() += delta_x;
            kkt.topRightCorner(n_, m_) = jac.transpose();
            kkt.bottomLeftCorner(m_, n_) = jac;
            kkt.bottomRightCorner(m_, m_).diagonal().array() = -delta_c;

            for (int i = 0; i < total; ++i)
                scale_(i) = 1.0 / std::sqrt(std::max(1.0, std::abs(kkt(i, i))));
            for (int r = 0; r < total; ++r)
                for (int c = 0; c < total; ++c) kkt(r, c) *= scale_(r) * scale_(c);

            bool factor_ok = false;
            int pos = 0, neg = 0, zero = 0;
            ldlt_.compute(kkt);
            if (ldlt_.info() == Eigen::Success) {
                factor_ok = true;
                const Vector d = ldlt_.vectorD();
                constexpr double kZeroTol = 1e-10;
                for (int i = 0; i < total; ++i) {
                    if (d(i) > kZeroTol)
                        ++pos;
                    else if (d(i) < -kZeroTol)
                        ++neg;
                    else
                        ++zero;
                }
                if (pos == n_ && neg == m_ && zero == 0) {
                    last_delta_x_ = delta_x;
                    last_delta_c_ = delta_c;
                    return true;
                }
            }

            if (!factor_ok) {
                delta_x = delta_x == 0.0 ? 1e-8 : delta_x * 10.0;
                if (delta_c == 0.0) delta_c = 1e-8;
            } else {
                if (zero > 0 || pos > n_) delta_c = delta_c == 0.0 ? 1e-8 : delta_c * 10.0;
                if (pos < n_) delta_x = delta_x == 0.0 ? 1e-8 : delta_x * 10.0;
            }
            if (delta_x > 1e32 || delta_c > 1e4) return false;
        }
        return false;
    }

    bool solve_with_factor(const Vector& rhs, Vector& step) const {
        step = scale_.cwiseProduct(ldlt_.solve(rhs.cwiseProduct(scale_)));
        return step.allFinite();
    }

    /// Least-squares equality multipliers at the current point:
    /// argmin || J^T lam - (objective + z) ||.
    void refresh_multipliers(const Matrix& jac, const Vector& z, Vector& lam) const {
        if (m_ == 0) return;
        Matrix normal = jac * jac.transpose();
        normal.diagonal().array() += 1e-10;
        const Vector target = jac * (p_.objective + z);
        const Vector candidate = normal.ldlt().solve(target);
        if (candidate.allFinite()) lam = candidate;
    }

    /// Gauss-Newton descent on 0.5*||g||^2 plus a weak barrier; used as a
    /// fallback when the merit line search stalls.
    bool restore_feasibility(Vector& x, double mu) const {
        Vector g(m_);
        Matrix jac(m_, n_);
        if (!eval_constraints(x, g)) return false;
        const double initial = m_ > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
        if (initial == 0.0) return false;
        const double target = std::max(0.1 * initial, opt_.kkt_tol);
        // The barrier weight is tied to the violation so that reducing ||g||
        // dominates the subproblem.
        const double mu_r = std::min(mu, 0.5 * g.squaredNorm());

        Vector y = x;
        for (int it = 0; it < 30; ++it) {
            if (!eval_constraints(y, g)) return false;
            const double viol = g.cwiseAbs().maxCoeff();
            if (viol <= target) {
                x = y;
                return true;
            }
            eval_jacobian(y, jac);
            Matrix h = jac.transpose() * jac;
            Vector rhs = -jac.transpose() * g;
            for (int i : bounded_) {
                const double slack = y(i) - p_.lower_bounds(i);
                h(i, i) += mu_r / (slack * slack);
                rhs(i) += mu_r / slack;
            }

            Vector dy;
            bool solved = false;
            for (int attempt = 0; attempt < 40 && !solved; ++attempt) {
                Matrix reg = h;
                reg.diagonal().array() += attempt == 0 ? 0.0 : 1e-8 * std::pow(10.0, attempt - 1);
                Eigen::LDLT<Matrix> ldlt(reg);
                if (ldlt.info() != Eigen::Success) continue;
                if ((ldlt.vectorD().array() <= 0.0).any()) continue;
                dy = ldlt.solve(rhs);
                solved = dy.allFinite();
            }
            if (!solved) return false;

            const double theta0 = 0.5 * g.squaredNorm() + barrier(y, mu_r);
            const double slope = -rhs.dot(dy);
            double alpha = fraction_to_boundary(y, dy);
            bool accepted = false;
            Vector y_trial(n_), g_trial(m_);
            for (int backtrack = 0; backtrack < 40; ++backtrack) {
                y_trial = y + alpha * dy;
                if (eval_constraints(y_trial, g_trial)) {
                    const double theta =
                        0.5 * g_trial.squaredNorm() + barrier(y_trial, mu_r);
                    if (std::isfinite(theta) && theta <= theta0 + 1e-4 * alpha * slope) {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!accepted) return false;
            y = y_trial;
        }
        return false;
    }

    const NlpProblem& p_;
    const SolveOptions& opt_;
    int n_;
    int m_lin_;
    int m_;
    std::vector<int> bounded_;
    Vector cscale_;  // per-constraint scale factors (1 for linear rows)
    double last_delta_x_ = 0.0;
    double last_delta_c_ = 0.0;
    Eigen::LDLT<Matrix> ldlt_;
    Vector scale_;
};

}  // namespace detail

/// Solves the problem to local first-order stationarity. Deterministic for
/// fixed inputs; a converged solution satisfies the KKT conditions to kkt_tol
/// as verifiable by check_kkt.
inline NlpSolution solve(const NlpProblem& problem, const SolveOptions& options = {}) {
    problem.validate();
    options.validate();
    detail::InteriorPoint ipm(problem, options);
    return ipm.run();
}

}  // namespace rosa
