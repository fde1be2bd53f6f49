#pragma once

#include "rosa/constraints.hpp"
#include "rosa/pomdp.hpp"
#include "rosa/rosa.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace rosa {

using nlohmann::json;

namespace detail {

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j.front().is_array())
        throw InvalidInput(what + ": expected an array of arrays");
    const auto rows = j.size();
    const auto cols = j.front().size();
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j[r].size() != cols) throw InvalidInput(what + ": ragged rows");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

inline const json& require_key(const json& j, const std::string& key, const std::string& what) {
    auto it = j.find(key);
    if (it == j.end()) throw InvalidInput(what + ": missing key '" + key + "'");
    return *it;
}

}  // namespace detail

/// Model file layout: {"n_states", "n_obs", "n_actions", "alpha" [s][a][s'],
/// "obs_of" [s], "reward" [s][a], "mu" [s], "gamma"}.
inline json model_to_json(const PomdpModel& model) {
    json alpha = json::array();
    for (int s = 0; s < model.n_states; ++s) {
        json per_action = json::array();
        for (int a = 0; a < model.n_actions; ++a) {
            json row = json::array();
            for (int s2 = 0; s2 < model.n_states; ++s2) row.push_back(model.transition(s, a, s2));
            per_action.push_back(std::move(row));
        }
        alpha.push_back(std::move(per_action));
    }
    return json{{"n_states", model.n_states}, {"n_obs", model.n_obs},
                {"n_actions", model.n_actions}, {"alpha", std::move(alpha)},
                {"obs_of", model.obs_of},       {"reward", detail::matrix_to_json(model.reward)},
                {"mu", std::vector<double>(model.mu.begin(), model.mu.end())},
                {"gamma", model.gamma}};
}

inline PomdpModel model_from_json(const json& j, bool normalize = false) {
    if (j.contains("beta"))
        throw InvalidInput(
            "model: stochastic observation mechanisms ('beta') are not supported; "
            "use the deterministic 'obs_of' map");
    const int S = detail::require_key(j, "n_states", "model").get<int>();
    const int O = detail::require_key(j, "n_obs", "model").get<int>();
    const int A = detail::require_key(j, "n_actions", "model").get<int>();
    if (S <= 0 || O <= 0 || A <= 0) throw InvalidInput("model: counts must be positive");

    const json& alpha_json = detail::require_key(j, "alpha", "model");
    if (!alpha_json.is_array() || static_cast<int>(alpha_json.size()) != S)
        throw InvalidInput("model: alpha must have n_states outer entries");
    Matrix alpha(S * A, S);
    for (int s = 0; s < S; ++s) {
        const json& per_action = alpha_json[s];
        if (!per_action.is_array() || static_cast<int>(per_action.size()) != A)
            throw InvalidInput("model: alpha[" + std::to_string(s) + "] must have n_actions rows");
        for (int a = 0; a < A; ++a) {
            const json& row = per_action[a];
            if (!row.is_array() || static_cast<int>(row.size()) != S)
                throw InvalidInput("model: alpha row has wrong length");
            for (int s2 = 0; s2 < S; ++s2) alpha(s * A + a, s2) = row[s2].get<double>();
        }
    }

    std::vector<int> obs_of =
        detail::require_key(j, "obs_of", "model").get<std::vector<int>>();
    Matrix reward = detail::matrix_from_json(detail::require_key(j, "reward", "model"), "reward");
    std::vector<double> mu_vec =
        detail::require_key(j, "mu", "model").get<std::vector<double>>();
    Vector mu = Eigen::Map<const Vector>(mu_vec.data(), static_cast<Eigen::Index>(mu_vec.size()));
    const double gamma = detail::require_key(j, "gamma", "model").get<double>();
    return PomdpModel(S, O, A, std::move(alpha), std::move(obs_of), std::move(reward),
                      std::move(mu), gamma, normalize);
}

/// Policy file layout: {"pi": [o][a]}.
inline json policy_to_json(const ObservationPolicy& policy) {
    return json{{"pi", detail::matrix_to_json(policy.pi)}};
}

inline ObservationPolicy policy_from_json(const json& j, bool normalize = false) {
    return ObservationPolicy(
        detail::matrix_from_json(detail::require_key(j, "pi", "policy"), "policy pi"), normalize);
}

/// Uniform result record for all three methods.
struct SolveReport {
    std::string method;
    double reward = 0.0;
    ObservationPolicy policy;
    StateActionFrequency eta;
    std::string status;
    double kkt_residual = 0.0;
    double constraint_residual = 0.0;
    int iterations = 0;
    double time_s = 0.0;
    CertificateReport certificate;
};

inline json report_to_json(const SolveReport& report) {
    return json{{"method", report.method},
                {"reward", report.reward},
                {"policy", detail::matrix_to_json(report.policy.pi)},
                {"eta", detail::matrix_to_json(report.eta.eta)},
                {"status", report.status},
                {"kkt_residual", report.kkt_residual},
                {"constraint_residual", report.constraint_residual},
                {"iterations", report.iterations},
                {"time_s", report.time_s},
                {"certificate",
                 {{"max_linear_residual", report.certificate.feasibility.max_linear},
                  {"max_quadratic_residual", report.certificate.feasibility.max_quadratic},
                  {"min_eta_entry", report.certificate.feasibility.min_entry},
                  {"reward_mismatch", report.certificate.reward_mismatch}}}};
}

/// Constraint dump layout: header counts plus explicit terms; variables are
/// indexed row-major by (state, action).
inline json constraints_to_json(const PomdpModel& model, const ConstraintSystem& system) {
    const ConstraintCounts counts = count_constraints(model);
    json linear = json::array();
    for (const auto& eq : system.linear) {
        json coeffs = json::array();
        for (const auto& [idx, c] : eq.coeffs) coeffs.push_back(json::array({idx, c}));
        linear.push_back(json{{"coeffs", std::move(coeffs)}, {"constant", eq.constant}});
    }
    json quadratic = json::array();
    for (const auto& q : system.quadratic) {
        json terms = json::array();
        for (const auto& t : q.terms) terms.push_back(json::array({t.i, t.j, t.coeff}));
        quadratic.push_back(json{{"terms", std::move(terms)},
                                 {"obs", q.obs},
                                 {"state", q.state},
                                 {"action", q.action}});
    }
    return json{{"n_vars", system.n_vars},
                {"n_states", system.n_states},
                {"n_actions", system.n_actions},
                {"n_linear", counts.n_linear},
                {"n_quadratic", counts.n_quadratic},
                {"n_nonneg", counts.n_nonneg},
                {"anchor_action", system.anchor_action},
                {"anchor_states", system.anchor_states},
                {"linear", std::move(linear)},
                {"quadratic", std::move(quadratic)}};
}

inline void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << contents;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline json load_json_file(const std::string& path) {
    return json::parse(read_text_file(path));
}

inline void save_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace rosa
