#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rosa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when user-supplied data fails validation (dimensions, stochasticity, ranges).
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a state or observation class carries no occupancy mass, so
/// conditioning on it is undefined.
struct DegenerateMarginal : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown on internal numerical failures (factorization breakdown and the like).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr double kProbTol = 1e-12;

/// Validates that every row of `m` is a probability vector. With `normalize`
/// set, rows are rescaled by their sum instead of rejected; entries below
/// -kProbTol are rejected either way, tiny negative dust is clamped to zero.
inline void check_rows_stochastic(Matrix& m, const std::string& what, bool normalize) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            if (!std::isfinite(v) || v < -kProbTol)
                throw InvalidInput(what + ": negative or non-finite entry at row " +
                                   std::to_string(i));
            if (v < 0.0) m(i, j) = 0.0;
        }
        const double sum = m.row(i).sum();
        if (std::abs(sum - 1.0) <= kProbTol) continue;
        if (!normalize)
            throw InvalidInput(what + ": row " + std::to_string(i) + " sums to " +
                               std::to_string(sum) + ", expected 1");
        if (sum <= 0.0)
            throw InvalidInput(what + ": row " + std::to_string(i) + " has zero mass");
        m.row(i) /= sum;
    }
}

}  // namespace detail

/**
 * Finite POMDP with a deterministic observation map.
 *
 * The transition mechanism is stored as an (n_states*n_actions) x n_states
 * matrix whose row s*n_actions + a holds the distribution alpha(.|s,a).
 * All state-action quantities in this library use that row-major flattening.
 */
struct PomdpModel {
    int n_states = 0;
    int n_obs = 0;
    int n_actions = 0;
    Matrix alpha;              // (n_states*n_actions) x n_states
    std::vector<int> obs_of;   // size n_states, values in [0, n_obs)
    Matrix reward;             // n_states x n_actions
    Vector mu;                 // initial state distribution
    double gamma = 0.0;        // discount factor, 0 < gamma < 1

    PomdpModel() = default;

    PomdpModel(int states, int obs, int actions, Matrix alpha_in, std::vector<int> obs_map,
               Matrix reward_in, Vector mu_in, double gamma_in, bool normalize = false)
        : n_states(states),
          n_obs(obs),
          n_actions(actions),
          alpha(std::move(alpha_in)),
          obs_of(std::move(obs_map)),
          reward(std::move(reward_in)),
          mu(std::move(mu_in)),
          gamma(gamma_in) {
        validate(normalize);
    }

    int sa_index(int s, int a) const { return s * n_actions + a; }

    double transition(int s, int a, int s_next) const { return alpha(sa_index(s, a), s_next); }

    /// States grouped by observation: result[o] lists the states with obs_of = o,
    /// in increasing state order.
    std::vector<std::vector<int>> observation_classes() const {
        std::vector<std::vector<int>> classes(n_obs);
        for (int s = 0; s < n_states; ++s) classes[obs_of[s]].push_back(s);
        return classes;
    }

    void validate(bool normalize) {
        if (n_states <= 0 || n_obs <= 0 || n_actions <= 0)
            throw InvalidInput("PomdpModel: state/observation/action counts must be positive");
        if (alpha.rows() != static_cast<Eigen::Index>(n_states) * n_actions ||
            alpha.cols() != n_states)
            throw InvalidInput("PomdpModel: alpha must be (n_states*n_actions) x n_states");
        if (reward.rows() != n_states || reward.cols() != n_actions)
            throw InvalidInput("PomdpModel: reward must be n_states x n_actions");
        if (!reward.allFinite()) throw InvalidInput("PomdpModel: reward has non-finite entries");
        if (mu.size() != n_states) throw InvalidInput("PomdpModel: mu must have n_states entries");
        if (static_cast<int>(obs_of.size()) != n_states)
            throw InvalidInput("PomdpModel: obs_of must have n_states entries");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw InvalidInput("PomdpModel: gamma must lie in (0, 1)");

        detail::check_rows_stochastic(alpha, "PomdpModel alpha", normalize);
        Matrix mu_row = mu.transpose();
        detail::check_rows_stochastic(mu_row, "PomdpModel mu", normalize);
        mu = mu_row.transpose();

        std::vector<bool> attained(n_obs, false);
        for (int s = 0; s < n_states; ++s) {
            const int o = obs_of[s];
            if (o < 0 || o >= n_obs)
                throw InvalidInput("PomdpModel: obs_of[" + std::to_string(s) +
                                   "] out of range");
            attained[o] = true;
        }
        for (int o = 0; o < n_obs; ++o)
            if (!attained[o])
                throw InvalidInput("PomdpModel: observation " + std::to_string(o) +
                                   " is attained by no state");
    }
};

/// Memoryless stochastic policy pi(a|o); rows indexed by observation.
struct ObservationPolicy {
    Matrix pi;  // n_obs x n_actions, row stochastic

    ObservationPolicy() = default;
    explicit ObservationPolicy(Matrix p, bool normalize = false) : pi(std::move(p)) {
        detail::check_rows_stochastic(pi, "ObservationPolicy", normalize);
    }

    static ObservationPolicy uniform(int n_obs, int n_actions) {
        return ObservationPolicy(
            Matrix::Constant(n_obs, n_actions, 1.0 / static_cast<double>(n_actions)));
    }
};

/// State policy tau(a|s); rows indexed by state.
struct StatePolicy {
    Matrix tau;  // n_states x n_actions, row stochastic

    StatePolicy() = default;
    explicit StatePolicy(Matrix t, bool normalize = false) : tau(std::move(t)) {
        detail::check_rows_stochastic(tau, "StatePolicy", normalize);
    }
};

/// Discounted state-action occupancy eta(s,a). Entrywise nonnegative; sums to
/// one when produced by exact evaluation or a converged solve.
struct StateActionFrequency {
    Matrix eta;  // n_states x n_actions

    StateActionFrequency() = default;
    explicit StateActionFrequency(Matrix e) : eta(std::move(e)) {
        for (Eigen::Index s = 0; s < eta.rows(); ++s)
            for (Eigen::Index a = 0; a < eta.cols(); ++a) {
                const double v = eta(s, a);
                if (!std::isfinite(v) || v < -detail::kProbTol)
                    throw InvalidInput("StateActionFrequency: negative entry at state " +
                                       std::to_string(s));
                if (v < 0.0) eta(s, a) = 0.0;
            }
    }

    Vector flat() const {
        Vector x(eta.rows() * eta.cols());
        for (Eigen::Index s = 0; s < eta.rows(); ++s)
            for (Eigen::Index a = 0; a < eta.cols(); ++a) x(s * eta.cols() + a) = eta(s, a);
        return x;
    }

    static StateActionFrequency from_flat(const Vector& x, int n_states, int n_actions) {
        Matrix e(n_states, n_actions);
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a) e(s, a) = x(s * n_actions + a);
        return StateActionFrequency(std::move(e));
    }
};

namespace detail {

inline void check_policy_dims(const PomdpModel& model, const ObservationPolicy& policy) {
    if (policy.pi.rows() != model.n_obs || policy.pi.cols() != model.n_actions)
        throw InvalidInput("policy dimensions do not match model");
}

/// LU solve with two steps of iterative refinement; the occupancy systems
/// have condition number on the order of 1/(1-gamma), and refinement keeps
/// the residual at machine level even for gamma close to 1.
inline Vector refined_solve(const Eigen::PartialPivLU<Matrix>& lu, const Matrix& a,
                            const Vector& b) {
    Vector x = lu.solve(b);
    for (int step = 0; step < 2; ++step) {
        const Vector residual = b - a * x;
        const Vector correction = lu.solve(residual);
        x += correction;
    }
    return x;
}

inline Vector refined_solve_transposed(const Eigen::PartialPivLU<Matrix>& lu, const Matrix& a,
                                       const Vector& b) {
    Vector x = lu.transpose().solve(b);
    for (int step = 0; step < 2; ++step) {
        const Vector residual = b - a.transpose() * x;
        const Vector correction = lu.transpose().solve(residual);
        x += correction;
    }
    return x;
}

}  // namespace detail

/// Effective state policy (pi o beta)(a|s); for a deterministic observation
/// map this is a row lookup.
inline StatePolicy compose_policy(const PomdpModel& model, const ObservationPolicy& policy) {
    detail::check_policy_dims(model, policy);
    Matrix tau(model.n_states, model.n_actions);
    for (int s = 0; s < model.n_states; ++s) tau.row(s) = policy.pi.row(model.obs_of[s]);
    return StatePolicy(std::move(tau));
}

/// Markov kernel on state-action pairs induced by a policy:
/// entry ((s,a),(s',a')) = alpha(s'|s,a) * pi(a'|obs_of[s']).
inline Matrix transition_kernel(const PomdpModel& model, const ObservationPolicy& policy) {
    detail::check_policy_dims(model, policy);
    const int n = model.n_states * model.n_actions;
    Matrix kernel(n, n);
    for (int k = 0; k < n; ++k)
        for (int s_next = 0; s_next < model.n_states; ++s_next) {
            const double p = model.alpha(k, s_next);
            for (int a_next = 0; a_next < model.n_actions; ++a_next)
                kernel(k, model.sa_index(s_next, a_next)) =
                    p * policy.pi(model.obs_of[s_next], a_next);
        }
    return kernel;
}

/**
 * Exact discounted state-action frequency of a policy, from the linear system
 * (I - gamma P^T) x = (1-gamma) eta0 with eta0(s,a) = mu(s) * (pi o beta)(a|s).
 */
inline StateActionFrequency state_action_frequency(const PomdpModel& model,
                                                   const ObservationPolicy& policy) {
    const int n = model.n_states * model.n_actions;
    const StatePolicy tau = compose_policy(model, policy);

    Vector eta0(n);
    for (int s = 0; s < model.n_states; ++s)
        for (int a = 0; a < model.n_actions; ++a)
            eta0(model.sa_index(s, a)) = model.mu(s) * tau.tau(s, a);

    const Matrix system =
        Matrix::Identity(n, n) - model.gamma * transition_kernel(model, policy).transpose();
    const Eigen::PartialPivLU<Matrix> lu(system);
    Vector x = detail::refined_solve(lu, system, (1.0 - model.gamma) * eta0);

    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(x(i)) || x(i) < -detail::kProbTol)
            throw NumericalError("state_action_frequency: solve produced entry " +
                                 std::to_string(x(i)));
        if (x(i) < 0.0) x(i) = 0.0;
        sum += x(i);
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw NumericalError("state_action_frequency: mass " + std::to_string(sum) +
                             " deviates from 1");
    return StateActionFrequency::from_flat(x, model.n_states, model.n_actions);
}

/// Expected discounted reward R(pi) = <r, eta^pi>.
inline double reward_of_policy(const PomdpModel& model, const ObservationPolicy& policy) {
    const StateActionFrequency eta = state_action_frequency(model, policy);
    return (model.reward.array() * eta.eta.array()).sum();
}

/// State policy obtained by conditioning a frequency on its state marginals.
/// Every state marginal must be strictly positive.
inline StatePolicy condition_frequency(const StateActionFrequency& frequency) {
    const Matrix& eta = frequency.eta;
    Matrix tau(eta.rows(), eta.cols());
    for (Eigen::Index s = 0; s < eta.rows(); ++s) {
        const double marginal = eta.row(s).sum();
        if (!(marginal > 0.0))
            throw DegenerateMarginal("condition_frequency: state " + std::to_string(s) +
                                     " has zero marginal");
        tau.row(s) = eta.row(s) / marginal;
    }
    return StatePolicy(std::move(tau), true);
}

}  // namespace rosa
