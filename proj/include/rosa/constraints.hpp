#pragma once

#include "rosa/pomdp.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rosa {

/// Affine equality <coeffs, x> + constant = 0 over flattened state-action space.
struct LinearEquality {
    std::vector<std::pair<int, double>> coeffs;  // (variable index, coefficient)
    double constant = 0.0;

    double value(const Vector& x) const {
        double v = constant;
        for (const auto& [idx, c] : coeffs) v += c * x(idx);
        return v;
    }
};

struct QuadTerm {
    int i = 0;
    int j = 0;
    double coeff = 0.0;
};

/// Monomial coeff * prod_k x_{vars[k]} (variables listed with multiplicity).
struct Monomial {
    std::vector<int> vars;
    double coeff = 0.0;
};

/// Sparse polynomial as a monomial list.
struct Polynomial {
    std::vector<Monomial> monomials;

    double value(const Vector& x) const {
        double total = 0.0;
        for (const auto& m : monomials) {
            double term = m.coeff;
            for (int v : m.vars) term *= x(v);
            total += term;
        }
        return total;
    }

    int degree() const {
        int d = 0;
        for (const auto& m : monomials) d = std::max(d, static_cast<int>(m.vars.size()));
        return d;
    }

    /// Sorts variables within monomials, merges like terms, drops zeros.
    void canonicalize() {
        std::map<std::vector<int>, double> merged;
        for (auto& m : monomials) {
            std::sort(m.vars.begin(), m.vars.end());
            merged[m.vars] += m.coeff;
        }
        monomials.clear();
        for (auto& [vars, coeff] : merged)
            if (std::abs(coeff) > 0.0) monomials.push_back({vars, coeff});
    }
};

/**
 * Homogeneous quadratic equality sum coeff * x_i * x_j = 0. These are the
 * conditions forcing the conditionals of eta to agree across states that share
 * an observation; each instance records the (o, s, a) triple it was built for.
 */
struct QuadraticEquality {
    std::vector<QuadTerm> terms;
    int obs = -1;
    int state = -1;
    int action = -1;

    double value(const Vector& x) const {
        double v = 0.0;
        for (const auto& t : terms) v += t.coeff * x(t.i) * x(t.j);
        return v;
    }

    /// out += w * gradient at x.
    void add_gradient(const Vector& x, double w, Vector& out) const {
        for (const auto& t : terms) {
            out(t.i) += w * t.coeff * x(t.j);
            out(t.j) += w * t.coeff * x(t.i);
        }
    }

    /// out += w * (constant) Hessian.
    void add_hessian(double w, Matrix& out) const {
        for (const auto& t : terms) {
            out(t.i, t.j) += w * t.coeff;
            out(t.j, t.i) += w * t.coeff;
        }
    }

    Polynomial polynomial() const {
        Polynomial p;
        for (const auto& t : terms) p.monomials.push_back({{t.i, t.j}, t.coeff});
        p.canonicalize();
        return p;
    }
};

/// Full description of the feasible set in state-action space: one linear
/// equality per state, the quadratic observation constraints, and
/// nonnegativity of all n_vars variables.
struct ConstraintSystem {
    int n_vars = 0;
    int n_states = 0;
    int n_actions = 0;
    std::vector<LinearEquality> linear;
    std::vector<QuadraticEquality> quadratic;
    int anchor_action = 0;
    std::vector<int> anchor_states;  // one representative state per observation
};

/// Flow equality for each state s:
/// coefficient of eta[s'][a'] is [s'=s] - gamma * alpha(s|s',a'),
/// constant is -(1-gamma) * mu(s).
inline std::vector<LinearEquality> build_linear_constraints(const PomdpModel& model) {
    const int A = model.n_actions;
    std::vector<LinearEquality> rows;
    rows.reserve(model.n_states);
    for (int s = 0; s < model.n_states; ++s) {
        LinearEquality eq;
        eq.constant = -(1.0 - model.gamma) * model.mu(s);
        for (int s2 = 0; s2 < model.n_states; ++s2)
            for (int a = 0; a < A; ++a) {
                double c = -model.gamma * model.transition(s2, a, s);
                if (s2 == s) c += 1.0;
                if (c != 0.0) eq.coeffs.emplace_back(model.sa_index(s2, a), c);
            }
        rows.push_back(std::move(eq));
    }
    return rows;
}

namespace detail {

inline QuadraticEquality make_pairwise_constraint(const PomdpModel& model, int o, int anchor_state,
                                                  int s, int a) {
    QuadraticEquality q;
    q.obs = o;
    q.state = s;
    q.action = a;
    for (int a2 = 0; a2 < model.n_actions; ++a2) {
        if (a2 == a) continue;
        q.terms.push_back({model.sa_index(anchor_state, a), model.sa_index(s, a2), 1.0});
        q.terms.push_back({model.sa_index(anchor_state, a2), model.sa_index(s, a), -1.0});
    }
    return q;
}

}  // namespace detail

/// Quadratic equalities cutting the observation-feasible frequencies out of
/// the flow polytope, with explicit anchors. Exactly
/// (n_states - n_obs) * (n_actions - 1) constraints.
inline std::vector<QuadraticEquality> build_quadratic_constraints(
    const PomdpModel& model, int anchor_action, const std::vector<int>& anchor_states) {
    if (anchor_action < 0 || anchor_action >= model.n_actions)
        throw InvalidInput("build_quadratic_constraints: anchor action out of range");
    const auto classes = model.observation_classes();
    std::vector<QuadraticEquality> out;
    for (int o = 0; o < model.n_obs; ++o) {
        const int s_o = anchor_states[o];
        for (int s : classes[o]) {
            if (s == s_o) continue;
            for (int a = 0; a < model.n_actions; ++a) {
                if (a == anchor_action) continue;
                out.push_back(detail::make_pairwise_constraint(model, o, s_o, s, a));
            }
        }
    }
    return out;
}

/// Default anchors: action 0 and the lowest state index of each class.
inline std::vector<QuadraticEquality> build_quadratic_constraints(const PomdpModel& model) {
    const auto classes = model.observation_classes();
    std::vector<int> anchors(model.n_obs);
    for (int o = 0; o < model.n_obs; ++o) anchors[o] = classes[o].front();
    return build_quadratic_constraints(model, 0, anchors);
}

inline ConstraintSystem build_constraint_system(const PomdpModel& model) {
    ConstraintSystem system;
    system.n_vars = model.n_states * model.n_actions;
    system.n_states = model.n_states;
    system.n_actions = model.n_actions;
    system.linear = build_linear_constraints(model);
    const auto classes = model.observation_classes();
    system.anchor_action = 0;
    system.anchor_states.resize(model.n_obs);
    for (int o = 0; o < model.n_obs; ++o) system.anchor_states[o] = classes[o].front();
    system.quadratic = build_quadratic_constraints(model, 0, system.anchor_states);
    return system;
}

struct ConstraintCounts {
    int n_linear = 0;
    int n_quadratic = 0;
    int n_nonneg = 0;
};

inline ConstraintCounts count_constraints(const PomdpModel& model) {
    return {model.n_states, (model.n_states - model.n_obs) * (model.n_actions - 1),
            model.n_states * model.n_actions};
}

/**
 * Transfers a linear inequality sum b[s][a] * tau[s][a] >= 0 on state policies
 * to the equivalent polynomial inequality on state-action frequencies:
 * for each supported (s,a), the coefficient multiplies eta[s][a] times the
 * product of state marginals over the remaining supported states.
 */
inline Polynomial transfer_inequality(const Matrix& b, const std::vector<int>& support_states) {
    if (support_states.empty()) throw InvalidInput("transfer_inequality: empty support");
    const int A = static_cast<int>(b.cols());
    std::vector<bool> in_support(b.rows(), false);
    for (int s : support_states) {
        if (s < 0 || s >= b.rows())
            throw InvalidInput("transfer_inequality: support state out of range");
        if (b.row(s).isZero(0.0))
            throw InvalidInput("transfer_inequality: support state " + std::to_string(s) +
                               " has all-zero coefficients");
        in_support[s] = true;
    }
    for (Eigen::Index s = 0; s < b.rows(); ++s)
        if (!in_support[s] && !b.row(s).isZero(0.0))
            throw InvalidInput("transfer_inequality: nonzero row outside declared support");

    Polynomial result;
    for (int s : support_states) {
        // Expand prod_{s' != s} (sum_a' eta[s'][a']) one factor at a time.
        std::vector<Monomial> partial{{std::vector<int>{}, 1.0}};
        for (int s2 : support_states) {
            if (s2 == s) continue;
            std::vector<Monomial> next;
            next.reserve(partial.size() * A);
            for (const auto& m : partial)
                for (int a2 = 0; a2 < A; ++a2) {
                    Monomial grown = m;
                    grown.vars.push_back(s2 * A + a2);
                    next.push_back(std::move(grown));
                }
            partial = std::move(next);
        }
        for (int a = 0; a < A; ++a) {
            const double coeff = b(s, a);
            if (coeff == 0.0) continue;
            for (const auto& m : partial) {
                Monomial term = m;
                term.vars.push_back(s * A + a);
                term.coeff = coeff;
                result.monomials.push_back(std::move(term));
            }
        }
    }
    result.canonicalize();
    return result;
}

struct ResidualReport {
    double max_linear = 0.0;
    double max_quadratic = 0.0;
    double min_entry = 0.0;
};

/// Exact constraint residuals at a candidate frequency.
inline ResidualReport residuals(const ConstraintSystem& system, const StateActionFrequency& eta) {
    const Vector x = eta.flat();
    if (x.size() != system.n_vars) throw InvalidInput("residuals: dimension mismatch");
    ResidualReport report;
    for (const auto& eq : system.linear)
        report.max_linear = std::max(report.max_linear, std::abs(eq.value(x)));
    for (const auto& q : system.quadratic)
        report.max_quadratic = std::max(report.max_quadratic, std::abs(q.value(x)));
    report.min_entry = x.size() > 0 ? x.minCoeff() : 0.0;
    return report;
}

}  // namespace rosa
