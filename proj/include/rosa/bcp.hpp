#pragma once

#include "rosa/nlp.hpp"
#include "rosa/pomdp.hpp"

#include <limits>
#include <memory>
#include <utility>
#include <vector>

namespace rosa {

/// Value vector v over states, the auxiliary variable of the Bellman program.
struct ValueVector {
    Vector v;
};

struct BcpResult {
    ObservationPolicy policy;
    double reward = 0.0;  // exact re-evaluated reward of the returned policy
    NlpSolution solver;
    ValueVector value;
};

namespace detail {

inline int bcp_pi_index(const PomdpModel& model, int o, int a) { return o * model.n_actions + a; }
inline int bcp_v_index(const PomdpModel& model, int s) {
    return model.n_obs * model.n_actions + s;
}

}  // namespace detail

/**
 * The Bellman-constrained program: variables (pi, v), maximize <mu, v> subject
 * to the normalized evaluation equation v = gamma p_pi v + (1-gamma) r_pi
 * (one bilinear equality per state) and row-simplex constraints on pi.
 * Start point: uniform pi with v from exact policy evaluation, so every
 * constraint holds exactly at the start.
 */
inline NlpProblem build_bcp_problem(const PomdpModel& model) {
    const int S = model.n_states, O = model.n_obs, A = model.n_actions;
    const int n = O * A + S;
    NlpProblem problem;
    problem.n_vars = n;

    problem.objective = Vector::Zero(n);
    for (int s = 0; s < S; ++s) problem.objective(detail::bcp_v_index(model, s)) = model.mu(s);

    // Row sums of pi equal one.
    for (int o = 0; o < O; ++o) {
        LinearEquality row;
        row.constant = -1.0;
        for (int a = 0; a < A; ++a) row.coeffs.emplace_back(detail::bcp_pi_index(model, o, a), 1.0);
        problem.linear_eqs.push_back(std::move(row));
    }

    // Bellman rows: v_s - gamma sum_{a,s'} pi(a|o(s)) alpha(s'|s,a) v_{s'}
    //                   - (1-gamma) sum_a r(s,a) pi(a|o(s)) = 0.
    for (int s = 0; s < S; ++s) {
        const int o = model.obs_of[s];
        std::vector<QuadTerm> quad;
        std::vector<std::pair<int, double>> lin;
        lin.emplace_back(detail::bcp_v_index(model, s), 1.0);
        for (int a = 0; a < A; ++a) {
            const int pi_idx = detail::bcp_pi_index(model, o, a);
            for (int s2 = 0; s2 < S; ++s2) {
                const double p = model.transition(s, a, s2);
                if (p != 0.0)
                    quad.push_back({pi_idx, detail::bcp_v_index(model, s2), -model.gamma * p});
            }
            const double r = model.reward(s, a);
            if (r != 0.0) lin.emplace_back(pi_idx, -(1.0 - model.gamma) * r);
        }
        problem.smooth_eqs.push_back(
            std::make_shared<QuadraticConstraint>(std::move(quad), std::move(lin), 0.0));
    }

    problem.lower_bounds = Vector::Zero(n);
    for (int s = 0; s < S; ++s)
        problem.lower_bounds(detail::bcp_v_index(model, s)) =
            -std::numeric_limits<double>::infinity();

    const ObservationPolicy uniform = ObservationPolicy::uniform(O, A);
    const StatePolicy tau = compose_policy(model, uniform);
    Matrix p_pi = Matrix::Zero(S, S);
    Vector r_pi = Vector::Zero(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double w = tau.tau(s, a);
            r_pi(s) += w * model.reward(s, a);
            for (int s2 = 0; s2 < S; ++s2) p_pi(s, s2) += w * model.transition(s, a, s2);
        }
    const Vector v0 = (Matrix::Identity(S, S) - model.gamma * p_pi)
                          .partialPivLu()
                          .solve((1.0 - model.gamma) * r_pi);

    problem.start_point = Vector(n);
    for (int o = 0; o < O; ++o)
        for (int a = 0; a < A; ++a)
            problem.start_point(detail::bcp_pi_index(model, o, a)) = 1.0 / A;
    for (int s = 0; s < S; ++s) problem.start_point(detail::bcp_v_index(model, s)) = v0(s);
    return problem;
}

/// Solves the Bellman-constrained program; the reported reward is always the
/// exactly re-evaluated reward of the returned policy, whatever the solver
/// status.
inline BcpResult bcp_solve(const PomdpModel& model, const SolveOptions& options = {}) {
    const NlpProblem problem = build_bcp_problem(model);
    NlpSolution sol = solve(problem, options);

    Matrix pi(model.n_obs, model.n_actions);
    for (int o = 0; o < model.n_obs; ++o)
        for (int a = 0; a < model.n_actions; ++a)
            pi(o, a) = sol.x(detail::bcp_pi_index(model, o, a));

    BcpResult result;
    result.policy = ObservationPolicy(std::move(pi), true);
    result.reward = reward_of_policy(model, result.policy);
    result.value.v = sol.x.tail(model.n_states);
    result.solver = std::move(sol);
    return result;
}

}  // namespace rosa
