// Command-line front end: maze generation, the three solvers, policy
// evaluation, constraint dumps, and the benchmark sweep.

#include "rosa/bench.hpp"
#include "rosa/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

enum class LogLevel { quiet, info, debug };

LogLevel log_level() {
    const char* env = std::getenv("ROSA_LOG");
    if (env == nullptr) return LogLevel::info;
    const std::string value = env;
    if (value == "quiet") return LogLevel::quiet;
    if (value == "debug") return LogLevel::debug;
    return LogLevel::info;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, sep))
        if (!item.empty()) parts.push_back(item);
    return parts;
}

std::vector<int> parse_n_range(const std::string& text) {
    std::vector<int> ns;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const int lo = std::stoi(text.substr(0, dots));
        const int hi = std::stoi(text.substr(dots + 2));
        if (lo < 2 || hi < lo) throw rosa::InvalidInput("bad --n-range: " + text);
        for (int n = lo; n <= hi; ++n) ns.push_back(n);
        return ns;
    }
    for (const auto& part : split(text, ',')) ns.push_back(std::stoi(part));
    if (ns.empty()) throw rosa::InvalidInput("bad --n-range: " + text);
    return ns;
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> values;
    for (const auto& part : split(text, ',')) values.push_back(std::stod(part));
    return values;
}

rosa::PomdpModel load_model(const std::string& path) {
    return rosa::model_from_json(rosa::load_json_file(path));
}

rosa::SolveReport solve_with_method(const rosa::PomdpModel& model, const std::string& method,
                                    double tol, int max_iters, int restarts,
                                    std::ostream* solver_log) {
    rosa::SolveReport report;
    report.method = method;
    const rosa::ConstraintSystem system = rosa::build_constraint_system(model);
    const auto t0 = std::chrono::steady_clock::now();
    if (method == "rosa") {
        rosa::RosaOptions options;
        if (tol > 0.0) options.nlp.kkt_tol = tol;
        if (max_iters > 0) options.nlp.max_iters = max_iters;
        options.nlp.log = solver_log;
        options.restarts = restarts;
        const rosa::RosaResult result = rosa::rosa_solve(model, options);
        report.reward = result.reward_star;
        report.policy = result.obs_policy;
        report.eta = result.eta_star;
        report.status = rosa::to_string(result.solver.status);
        report.kkt_residual = result.solver.kkt_residual;
        report.constraint_residual = result.solver.constraint_residual;
        report.iterations = result.solver.iterations;
        report.certificate = result.certificate;
    } else if (method == "bcp") {
        rosa::SolveOptions options;
        if (tol > 0.0) options.kkt_tol = tol;
        if (max_iters > 0) options.max_iters = max_iters;
        options.log = solver_log;
        const rosa::BcpResult result = rosa::bcp_solve(model, options);
        report.reward = result.reward;
        report.policy = result.policy;
        report.eta = rosa::state_action_frequency(model, result.policy);
        report.status = rosa::to_string(result.solver.status);
        report.kkt_residual = result.solver.kkt_residual;
        report.constraint_residual = result.solver.constraint_residual;
        report.iterations = result.solver.iterations;
        report.certificate.feasibility = rosa::residuals(system, report.eta);
        report.certificate.reward_mismatch = 0.0;
    } else if (method == "dpo") {
        rosa::DpoOptions options;
        if (tol > 0.0) options.grad_tol = tol;
        if (max_iters > 0) options.max_iters = max_iters;
        const rosa::DpoResult result = rosa::dpo_solve(model, options);
        report.reward = result.reward;
        report.policy = result.policy;
        report.eta = rosa::state_action_frequency(model, result.policy);
        report.status = rosa::to_string(result.status);
        report.kkt_residual = result.trace.empty() ? 0.0 : result.trace.back().grad_norm;
        report.constraint_residual = 0.0;
        report.iterations = result.iterations;
        report.certificate.feasibility = rosa::residuals(system, report.eta);
        report.certificate.reward_mismatch = 0.0;
    } else {
        throw rosa::InvalidInput("unknown method: " + method);
    }
    report.time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"POMDP reward optimization in state-action space"};
    app.require_subcommand(1);
    const LogLevel level = log_level();

    // gen-maze
    auto* gen = app.add_subcommand("gen-maze", "Generate a random maze POMDP model file");
    int gen_n = 2;
    std::uint64_t gen_seed = 1;
    double gen_gamma = 0.99;
    std::string gen_out;
    bool gen_verbose = false;
    gen->add_option("--n", gen_n, "Maze size parameter (side length 2n-1)")->required();
    gen->add_option("--seed", gen_seed, "PRNG seed")->required();
    gen->add_option("--gamma", gen_gamma, "Discount factor")->required();
    gen->add_option("--out", gen_out, "Output model JSON path")->required();
    gen->add_flag("--verbose", gen_verbose, "Print the ASCII maze to stderr");

    // solve
    auto* solve_cmd = app.add_subcommand("solve", "Solve a model with rosa, bcp, or dpo");
    std::string solve_method = "rosa", solve_model, solve_out;
    double solve_tol = 0.0;
    int solve_max_iters = 0;
    int solve_restarts = 1;
    solve_cmd->add_option("--method", solve_method, "rosa|bcp|dpo")->required();
    solve_cmd->add_option("--model", solve_model, "Model JSON path")->required();
    solve_cmd->add_option("--tol", solve_tol, "Solver tolerance (0: method default)");
    solve_cmd->add_option("--max-iters", solve_max_iters, "Iteration cap (0: method default)");
    solve_cmd->add_option("--restarts", solve_restarts, "Multi-start count (rosa)");
    solve_cmd->add_option("--out", solve_out, "Report JSON path");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy file on a model");
    std::string eval_model, eval_policy;
    eval_cmd->add_option("--model", eval_model, "Model JSON path")->required();
    eval_cmd->add_option("--policy", eval_policy, "Policy JSON path")->required();

    // dump-constraints
    auto* dump_cmd = app.add_subcommand("dump-constraints",
                                        "Write the constraint system of a model as JSON");
    std::string dump_model, dump_out;
    dump_cmd->add_option("--model", dump_model, "Model JSON path")->required();
    dump_cmd->add_option("--out", dump_out, "Output JSON path")->required();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Benchmark sweep over random mazes");
    std::string bench_methods = "rosa,bcp,dpo";
    std::string bench_n_range = "2..6";
    std::string bench_gammas = "0.9999";
    std::string bench_quantiles = "0.16,0.84";
    std::string bench_csv;
    int bench_reps = 10;
    int bench_dpo_reps = -1;
    std::uint64_t bench_seed0 = 1;
    double bench_tol = 0.0;
    int bench_max_iters = 0;
    int bench_restarts = 1;
    int bench_jobs = 1;
    bench_cmd->add_option("--methods", bench_methods, "Comma-separated subset of rosa,bcp,dpo");
    bench_cmd->add_option("--n-range", bench_n_range, "Maze sizes, e.g. 2..10 or 2,5,7");
    bench_cmd->add_option("--gammas", bench_gammas,
                          "Comma-separated discounts, or 'sweep' for 1-10^(-k/8), k=8..40");
    bench_cmd->add_option("--reps", bench_reps, "Mazes per (method, n, gamma)");
    bench_cmd->add_option("--dpo-reps", bench_dpo_reps, "Reduced rep count for dpo (-1: same)");
    bench_cmd->add_option("--seed0", bench_seed0, "First seed; rep r uses seed0 + r");
    bench_cmd->add_option("--quantiles", bench_quantiles, "Quantiles for the summary block");
    bench_cmd->add_option("--csv", bench_csv, "Output CSV path")->required();
    bench_cmd->add_option("--tol", bench_tol, "Solver tolerance (0: method default)");
    bench_cmd->add_option("--max-iters", bench_max_iters, "Iteration cap (0: method default)");
    bench_cmd->add_option("--restarts", bench_restarts, "rosa multi-start count");
    bench_cmd->add_option("--jobs", bench_jobs, "Parallel cells");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const rosa::Maze maze = rosa::generate_maze(gen_n, gen_seed);
            const rosa::MazePomdp maze_pomdp = rosa::build_maze_pomdp(maze, gen_gamma);
            rosa::save_json_file(gen_out, rosa::model_to_json(maze_pomdp.model));
            if (gen_verbose) std::cerr << rosa::render_maze(maze);
            if (level != LogLevel::quiet)
                std::cerr << "wrote " << gen_out << " (" << maze_pomdp.model.n_states
                          << " states, " << maze_pomdp.model.n_obs << " observations)\n";
        } else if (*solve_cmd) {
            const rosa::PomdpModel model = load_model(solve_model);
            std::ostream* solver_log = level == LogLevel::debug ? &std::cerr : nullptr;
            const rosa::SolveReport report = solve_with_method(
                model, solve_method, solve_tol, solve_max_iters, solve_restarts, solver_log);
            const rosa::json j = rosa::report_to_json(report);
            if (!solve_out.empty()) rosa::save_json_file(solve_out, j);
            if (level != LogLevel::quiet || solve_out.empty())
                std::cout << j.dump(2) << '\n';
        } else if (*eval_cmd) {
            const rosa::PomdpModel model = load_model(eval_model);
            const rosa::ObservationPolicy policy =
                rosa::policy_from_json(rosa::load_json_file(eval_policy));
            const rosa::StateActionFrequency eta = rosa::state_action_frequency(model, policy);
            const double reward = (model.reward.array() * eta.eta.array()).sum();
            const rosa::ConstraintSystem system = rosa::build_constraint_system(model);
            const rosa::ResidualReport report = rosa::residuals(system, eta);
            double min_marginal = std::numeric_limits<double>::infinity();
            for (int s = 0; s < model.n_states; ++s)
                min_marginal = std::min(min_marginal, eta.eta.row(s).sum());
            char line[512];
            std::snprintf(line, sizeof(line),
                          "reward %.17g\nmax_linear_residual %.3e\nmax_quadratic_residual %.3e\n"
                          "min_eta_entry %.3e\nmin_state_marginal %.3e\n",
                          reward, report.max_linear, report.max_quadratic, report.min_entry,
                          min_marginal);
            std::cout << line;
            if (!(min_marginal > 0.0)) {
                std::cerr << "warning: some state marginal is zero; conditioning on this "
                             "frequency is undefined\n";
            }
        } else if (*dump_cmd) {
            const rosa::PomdpModel model = load_model(dump_model);
            const rosa::ConstraintSystem system = rosa::build_constraint_system(model);
            rosa::save_json_file(dump_out, rosa::constraints_to_json(model, system));
            const rosa::ConstraintCounts counts = rosa::count_constraints(model);
            if (level != LogLevel::quiet)
                std::cerr << "wrote " << dump_out << " (" << counts.n_linear << " linear, "
                          << counts.n_quadratic << " quadratic, " << counts.n_nonneg
                          << " nonnegativity)\n";
        } else if (*bench_cmd) {
            rosa::BenchConfig config;
            config.methods = split(bench_methods, ',');
            config.ns = parse_n_range(bench_n_range);
            config.gammas = bench_gammas == "sweep" ? rosa::default_gamma_sweep()
                                                    : parse_doubles(bench_gammas);
            config.reps = bench_reps;
            config.dpo_reps = bench_dpo_reps;
            config.seed0 = bench_seed0;
            config.quantiles = parse_doubles(bench_quantiles);
            config.tol = bench_tol;
            config.max_iters = bench_max_iters;
            config.restarts = bench_restarts;
            config.jobs = bench_jobs;

            std::ostream* progress = level == LogLevel::quiet ? nullptr : &std::cerr;
            const std::vector<rosa::BenchRecord> records = rosa::run_bench(config, progress);
            std::ofstream csv(bench_csv, std::ios::binary);
            if (!csv) throw std::runtime_error("cannot open for writing: " + bench_csv);
            rosa::write_csv(records, csv);
            std::cout << rosa::summarize(records, config.quantiles);
        }
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << '\n';
        return 1;
    }
    return 0;
}
