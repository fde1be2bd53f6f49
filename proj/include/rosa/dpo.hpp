#pragma once

#include "rosa/nlp.hpp"
#include "rosa/pomdp.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <utility>
#include <vector>

namespace rosa {

/// Unconstrained softmax parameters theta[o][a] of a tabular policy.
struct SoftmaxParams {
    Matrix theta;  // n_obs x n_actions

    SoftmaxParams() = default;
    explicit SoftmaxParams(Matrix t) : theta(std::move(t)) {
        if (!theta.allFinite()) throw InvalidInput("SoftmaxParams: non-finite entries");
    }
};

inline ObservationPolicy softmax_policy(const SoftmaxParams& params) {
    Matrix pi(params.theta.rows(), params.theta.cols());
    for (Eigen::Index o = 0; o < pi.rows(); ++o) {
        const double shift = params.theta.row(o).maxCoeff();
        pi.row(o) = (params.theta.row(o).array() - shift).exp();
        pi.row(o) /= pi.row(o).sum();
    }
    return ObservationPolicy(std::move(pi), true);
}

namespace detail {

/**
 * Exact reward and gradient in one pass via the adjoint method: with
 * M = P_pi and q solving (I - gamma M) q = r,
 *   dR = (1-gamma) (d eta0)^T q + gamma eta^T (dM) q,
 * which collapses to dR/dpi(a|o) = sum_{s in S_o} w(s) q(s,a) with
 * w = (1-gamma) mu + gamma alpha^T eta, then chains through the softmax
 * Jacobian. One LU factorization serves both linear solves.
 */
inline std::pair<double, Matrix> dpo_value_and_gradient(const PomdpModel& model,
                                                        const SoftmaxParams& params) {
    const int n = model.n_states * model.n_actions;
    const ObservationPolicy pi = softmax_policy(params);
    const StatePolicy tau = compose_policy(model, pi);

    Vector r_flat(n), eta0(n);
    for (int s = 0; s < model.n_states; ++s)
        for (int a = 0; a < model.n_actions; ++a) {
            const int k = model.sa_index(s, a);
            r_flat(k) = model.reward(s, a);
            eta0(k) = model.mu(s) * tau.tau(s, a);
        }

    const Matrix system = Matrix::Identity(n, n) - model.gamma * transition_kernel(model, pi);
    const Eigen::PartialPivLU<Matrix> lu(system);
    const Vector q = detail::refined_solve(lu, system, r_flat);
    const Vector eta = detail::refined_solve_transposed(lu, system, (1.0 - model.gamma) * eta0);
    const double reward = r_flat.dot(eta);

    // w(s) = (1-gamma) mu(s) + gamma sum_{s',a'} eta(s',a') alpha(s|s',a')
    Vector w = (1.0 - model.gamma) * model.mu;
    w += model.gamma * model.alpha.transpose() * eta;

    Matrix grad_pi = Matrix::Zero(model.n_obs, model.n_actions);
    for (int s = 0; s < model.n_states; ++s)
        for (int a = 0; a < model.n_actions; ++a)
            grad_pi(model.obs_of[s], a) += w(s) * q(model.sa_index(s, a));

    Matrix grad_theta(model.n_obs, model.n_actions);
    for (int o = 0; o < model.n_obs; ++o) {
        const double inner = grad_pi.row(o).dot(pi.pi.row(o));
        for (int a = 0; a < model.n_actions; ++a)
            grad_theta(o, a) = pi.pi(o, a) * (grad_pi(o, a) - inner);
    }
    return {reward, grad_theta};
}

}  // namespace detail

/// Exact gradient of the discounted reward with respect to the softmax
/// parameters. Two dense linear solves per call.
inline Matrix dpo_gradient(const PomdpModel& model, const SoftmaxParams& params) {
    if (params.theta.rows() != model.n_obs || params.theta.cols() != model.n_actions)
        throw InvalidInput("dpo_gradient: parameter dimensions do not match model");
    return detail::dpo_value_and_gradient(model, params).second;
}

struct DpoOptions {
    double grad_tol = 1e-6;    // stop at gradient infinity norm below this
    int max_iters = 1000;
    int memory = 10;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    double max_wall_seconds = 300.0;
};

struct DpoTracePoint {
    double reward = 0.0;
    double grad_norm = 0.0;
};

struct DpoResult {
    ObservationPolicy policy;
    double reward = 0.0;
    SolveStatus status = SolveStatus::max_iters;
    int iterations = 0;
    double wall_seconds = 0.0;
    std::vector<DpoTracePoint> trace;  // one entry per iterate, starting point included
};

/**
 * Direct policy optimization: L-BFGS ascent on the exact discounted reward of
 * a tabular softmax policy, strong Wolfe line search, theta = 0 start. On line
 * search failure the best iterate found is returned.
 */
inline DpoResult dpo_solve(const PomdpModel& model, const DpoOptions& options = {}) {
    if (options.max_iters <= 0 || options.memory <= 0 || !(options.grad_tol > 0.0))
        throw InvalidInput("DpoOptions: iterations, memory, and tolerance must be positive");
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };
    const int n = model.n_obs * model.n_actions;

    auto unflatten = [&](const Vector& v) {
        Matrix t(model.n_obs, model.n_actions);
        for (int o = 0; o < model.n_obs; ++o)
            for (int a = 0; a < model.n_actions; ++a) t(o, a) = v(o * model.n_actions + a);
        return t;
    };
    auto flatten = [&](const Matrix& t) {
        Vector v(n);
        for (int o = 0; o < model.n_obs; ++o)
            for (int a = 0; a < model.n_actions; ++a) v(o * model.n_actions + a) = t(o, a);
        return v;
    };
    // Minimization convention: f = -R.
    auto eval = [&](const Vector& v, Vector& grad) {
        auto [reward, grad_theta] = detail::dpo_value_and_gradient(model, SoftmaxParams(unflatten(v)));
        grad = -flatten(grad_theta);
        return -reward;
    };

    Vector x = Vector::Zero(n);
    Vector grad(n);
    double f = eval(x, grad);

    DpoResult result;
    result.status = SolveStatus::max_iters;
    result.trace.push_back({-f, grad.cwiseAbs().maxCoeff()});

    Vector best_x = x;
    double best_f = f;

    std::deque<std::pair<Vector, Vector>> history;  // (s, y) pairs
    auto two_loop = [&](const Vector& g) {
        Vector q = g;
        std::vector<double> alpha(history.size());
        std::vector<double> rho(history.size());
        for (int i = static_cast<int>(history.size()) - 1; i >= 0; --i) {
            const auto& [s, y] = history[i];
            rho[i] = 1.0 / y.dot(s);
            alpha[i] = rho[i] * s.dot(q);
            q -= alpha[i] * y;
        }
        if (!history.empty()) {
            const auto& [s, y] = history.back();
            q *= s.dot(y) / y.dot(y);
        }
        for (std::size_t i = 0; i < history.size(); ++i) {
            const auto& [s, y] = history[i];
            const double beta = rho[i] * y.dot(q);
            q += (alpha[i] - beta) * s;
        }
        return q;
    };

    // Strong Wolfe line search (bracket then bisection zoom) on f(x + a*p).
    auto wolfe_search = [&](const Vector& p, double f0, double slope0, Vector& x_out,
                            double& f_out, Vector& g_out) {
        const double c1 = options.wolfe_c1, c2 = options.wolfe_c2;
        auto phi = [&](double a, double& dphi, Vector& g) {
            x_out = x + a * p;
            const double v = eval(x_out, g);
            dphi = g.dot(p);
            return v;
        };
        double lo = 0.0, f_lo = f0, d_lo = slope0;
        double hi = -1.0, f_hi = 0.0;
        double a_prev = 0.0, f_prev = f0;
        double a = 1.0;
        Vector g(n);
        for (int i = 0; i < 25 && hi < 0.0; ++i) {
            double da;
            const double fa = phi(a, da, g);
            if (!std::isfinite(fa) || fa > f0 + c1 * a * slope0 || (i > 0 && fa >= f_prev)) {
                lo = a_prev;
                f_lo = f_prev;
                hi = a;
                f_hi = fa;
                break;
            }
            if (std::abs(da) <= -c2 * slope0) {
                f_out = fa;
                g_out = g;
                return true;
            }
            if (da >= 0.0) {
                lo = a;
                f_lo = fa;
                d_lo = da;
                hi = a_prev;
                f_hi = f_prev;
                break;
            }
            a_prev = a;
            f_prev = fa;
            a *= 2.0;
        }
        if (hi < 0.0) return false;
        (void)d_lo;
        for (int i = 0; i < 40; ++i) {
            a = 0.5 * (lo + hi);
            double da;
            const double fa = phi(a, da, g);
            if (!std::isfinite(fa) || fa > f0 + c1 * a * slope0 || fa >= f_lo) {
                hi = a;
                f_hi = fa;
                (void)f_hi;
            } else {
                if (std::abs(da) <= -c2 * slope0) {
                    f_out = fa;
                    g_out = g;
                    return true;
                }
                if (da * (hi - lo) >= 0.0) {
                    hi = lo;
                }
                lo = a;
                f_lo = fa;
            }
            if (std::abs(hi - lo) < 1e-16) break;
        }
        return false;
    };

    int iter = 0;
    for (; iter < options.max_iters; ++iter) {
        if (grad.cwiseAbs().maxCoeff() <= options.grad_tol) {
            result.status = SolveStatus::converged;
            break;
        }
        if (elapsed() > options.max_wall_seconds) {
            result.status = SolveStatus::time_limit;
            break;
        }

        Vector p = -two_loop(grad);
        double slope = grad.dot(p);
        if (slope >= 0.0) {  // not a descent direction; fall back to steepest
            history.clear();
            p = -grad;
            slope = grad.dot(p);
        }

        Vector x_new(n), g_new(n);
        double f_new = 0.0;
        bool ok = wolfe_search(p, f, slope, x_new, f_new, g_new);
        if (!ok && !history.empty()) {
            history.clear();
            p = -grad;
            slope = grad.dot(p);
            ok = wolfe_search(p, f, slope, x_new, f_new, g_new);
        }
        if (!ok) {
            result.status = SolveStatus::line_search_failure;
            break;
        }

        Vector s = x_new - x;
        Vector y = g_new - grad;
        if (y.dot(s) > 1e-10 * s.norm() * y.norm()) {
            history.emplace_back(std::move(s), std::move(y));
            if (static_cast<int>(history.size()) > options.memory) history.pop_front();
        }
        x = std::move(x_new);
        f = f_new;
        grad = std::move(g_new);
        result.trace.push_back({-f, grad.cwiseAbs().maxCoeff()});
        if (f < best_f) {
            best_f = f;
            best_x = x;
        }
    }

    if (f > best_f) {
        f = best_f;
        x = best_x;
    }
    result.policy = softmax_policy(SoftmaxParams(unflatten(x)));
    result.reward = reward_of_policy(model, result.policy);
    result.iterations = iter;
    result.wall_seconds = elapsed();
    return result;
}

}  // namespace rosa
