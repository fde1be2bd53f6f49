#pragma once

#include "rosa/constraints.hpp"
#include "rosa/nlp.hpp"
#include "rosa/pomdp.hpp"
#include "rosa/rng.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace rosa {

struct RosaOptions {
    SolveOptions nlp;
    int restarts = 1;     // deterministic multi-start; restart 0 is the uniform policy
    std::uint64_t seed = 0;
};

/// Recomputed certificate for a solve: constraint residuals at eta
/// and the gap between the claimed reward and the recovered policy's
/// exactly evaluated reward.
struct CertificateReport {
    ResidualReport feasibility;
    double reward_mismatch = 0.0;
};

struct RosaResult {
    StateActionFrequency eta_star;
    double reward_star = 0.0;
    StatePolicy state_policy;
    ObservationPolicy obs_policy;
    NlpSolution solver;
    CertificateReport certificate;
};

/**
 * Observation policy solving beta * pi = tau in the class-wise sense: each
 * observation's row is the eta-weighted average of tau over the states in
 * that class. Coincides with the exact solution when tau is constant on
 * classes, and is robust to tolerance-level violations of that.
 */
inline ObservationPolicy recover_observation_policy(const PomdpModel& model,
                                                    const StatePolicy& tau,
                                                    const StateActionFrequency& eta) {
    if (tau.tau.rows() != model.n_states || eta.eta.rows() != model.n_states)
        throw InvalidInput("recover_observation_policy: dimension mismatch");
    const auto classes = model.observation_classes();
    Matrix pi(model.n_obs, model.n_actions);
    for (int o = 0; o < model.n_obs; ++o) {
        double total = 0.0;
        for (int s : classes[o]) total += eta.eta.row(s).sum();
        if (!(total > 0.0))
            throw DegenerateMarginal("recover_observation_policy: observation " +
                                     std::to_string(o) + " has zero marginal");
        Vector row = Vector::Zero(model.n_actions);
        for (int s : classes[o])
            row += (eta.eta.row(s).sum() / total) * tau.tau.row(s).transpose();
        pi.row(o) = row.transpose() / row.sum();
    }
    return ObservationPolicy(std::move(pi), true);
}

/// The reward-maximization program over state-action frequencies: linear flow
/// equalities, quadratic observation equalities, eta >= 0, started from the
/// frequency of the given policy (feasible by construction).
inline NlpProblem build_rosa_problem(const PomdpModel& model, const ConstraintSystem& system,
                                     const ObservationPolicy& start_policy) {
    NlpProblem problem;
    problem.n_vars = system.n_vars;
    problem.objective = Vector(system.n_vars);
    for (int s = 0; s < model.n_states; ++s)
        for (int a = 0; a < model.n_actions; ++a)
            problem.objective(model.sa_index(s, a)) = model.reward(s, a);
    problem.linear_eqs = system.linear;
    problem.smooth_eqs.reserve(system.quadratic.size());
    for (const auto& q : system.quadratic)
        problem.smooth_eqs.push_back(std::make_shared<QuadraticConstraint>(q));
    problem.lower_bounds = Vector::Zero(system.n_vars);
    problem.start_point = state_action_frequency(model, start_policy).flat();
    return problem;
}

namespace detail {

/// Random row-stochastic policy for multi-start perturbations (Dirichlet(1)
/// rows via exponential spacings of the shared deterministic stream).
inline ObservationPolicy random_policy(int n_obs, int n_actions, Xoshiro256& rng) {
    Matrix pi(n_obs, n_actions);
    for (int o = 0; o < n_obs; ++o) {
        double sum = 0.0;
        for (int a = 0; a < n_actions; ++a) {
            pi(o, a) = -std::log(rng.uniform01());
            sum += pi(o, a);
        }
        pi.row(o) /= sum;
    }
    return ObservationPolicy(std::move(pi), true);
}

}  // namespace detail

/**
 * Reward optimization in state-action space: build the constraint system,
 * maximize <r, eta> over it starting from the uniform policy's frequency,
 * then recover the state policy by conditioning and the observation policy
 * by class-wise averaging. The certificate is recomputed from the returned
 * eta and policy, not copied from solver internals.
 */
inline RosaResult rosa_solve(const PomdpModel& model, const RosaOptions& options = {}) {
    if (options.restarts < 1) throw InvalidInput("rosa_solve: restarts must be >= 1");
    const ConstraintSystem system = build_constraint_system(model);

    NlpSolution best;
    bool have_solution = false;
    Xoshiro256 rng(options.seed);
    for (int restart = 0; restart < options.restarts; ++restart) {
        const ObservationPolicy start =
            restart == 0 ? ObservationPolicy::uniform(model.n_obs, model.n_actions)
                         : detail::random_policy(model.n_obs, model.n_actions, rng);
        const NlpProblem problem = build_rosa_problem(model, system, start);
        NlpSolution sol = solve(problem, options.nlp);
        const bool better =
            !have_solution ||
            (sol.status == SolveStatus::converged &&
             (best.status != SolveStatus::converged || sol.objective_value > best.objective_value));
        if (better) best = std::move(sol);
        have_solution = true;
    }

    RosaResult result;
    result.eta_star = StateActionFrequency::from_flat(best.x, model.n_states, model.n_actions);
    result.reward_star = best.objective_value;
    result.state_policy = condition_frequency(result.eta_star);
    result.obs_policy = recover_observation_policy(model, result.state_policy, result.eta_star);
    result.solver = std::move(best);
    result.certificate.feasibility = residuals(system, result.eta_star);
    result.certificate.reward_mismatch =
        std::abs(result.reward_star - reward_of_policy(model, result.obs_policy));
    return result;
}

}  // namespace rosa
