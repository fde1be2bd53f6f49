#pragma once

#include "rosa/bcp.hpp"
#include "rosa/dpo.hpp"
#include "rosa/maze.hpp"
#include "rosa/rosa.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace rosa {

/// One benchmark measurement. reward is always the exactly re-evaluated
/// reward of the policy the method returned.
struct BenchRecord {
    std::string method;
    int n = 0;
    int states = 0;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    double reward = 0.0;
    double time_s = 0.0;
    std::string status;
    int iters = 0;
};

struct BenchConfig {
    std::vector<std::string> methods{"rosa", "bcp", "dpo"};
    std::vector<int> ns{2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<double> gammas{0.9999};
    int reps = 100;
    int dpo_reps = -1;  // override for dpo; -1 means same as reps
    std::uint64_t seed0 = 1;
    std::vector<double> quantiles{0.16, 0.84};
    double tol = 0.0;        // 0: per-method default
    int max_iters = 0;       // 0: per-method default
    int restarts = 1;
    int jobs = 1;

    int reps_for(const std::string& method) const {
        if (method == "dpo" && dpo_reps >= 0) return dpo_reps;
        return reps;
    }
};

/// The discount-sweep grid used when a gamma list is not given explicitly:
/// gamma = 1 - 10^(-k/8) for k = 8..40, approaching 1 from 0.9 to ~1 - 1e-5.
inline std::vector<double> default_gamma_sweep() {
    std::vector<double> gammas;
    for (int k = 8; k <= 40; ++k) gammas.push_back(1.0 - std::pow(10.0, -k / 8.0));
    return gammas;
}

/// Linear-interpolation quantile of an unsorted sample (the convention used
/// by numpy's default): h = (count-1)*p, interpolated between order statistics.
inline double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw InvalidInput("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

namespace detail {

inline BenchRecord run_bench_cell(const std::string& method, int n, double gamma,
                                  std::uint64_t seed, const BenchConfig& config) {
    BenchRecord record;
    record.method = method;
    record.n = n;
    record.gamma = gamma;
    record.seed = seed;

    const Maze maze = generate_maze(n, seed);
    const MazePomdp maze_pomdp = build_maze_pomdp(maze, gamma);
    const PomdpModel& model = maze_pomdp.model;
    record.states = model.n_states;

    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (method == "rosa") {
            RosaOptions options;
            if (config.tol > 0.0) options.nlp.kkt_tol = config.tol;
            if (config.max_iters > 0) options.nlp.max_iters = config.max_iters;
            options.restarts = config.restarts;
            options.seed = seed;
            const RosaResult result = rosa_solve(model, options);
            record.reward = reward_of_policy(model, result.obs_policy);
            record.status = to_string(result.solver.status);
            record.iters = result.solver.iterations;
        } else if (method == "bcp") {
            SolveOptions options;
            if (config.tol > 0.0) options.kkt_tol = config.tol;
            if (config.max_iters > 0) options.max_iters = config.max_iters;
            const BcpResult result = bcp_solve(model, options);
            record.reward = result.reward;
            record.status = to_string(result.solver.status);
            record.iters = result.solver.iterations;
        } else if (method == "dpo") {
            DpoOptions options;
            if (config.tol > 0.0) options.grad_tol = config.tol;
            if (config.max_iters > 0) options.max_iters = config.max_iters;
            const DpoResult result = dpo_solve(model, options);
            record.reward = result.reward;
            record.status = to_string(result.status);
            record.iters = result.iterations;
        } else {
            throw InvalidInput("unknown method: " + method);
        }
    } catch (const std::exception& error) {
        record.reward = std::numeric_limits<double>::quiet_NaN();
        record.status = std::string("error: ") + error.what();
        record.iters = 0;
    }
    record.time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return record;
}

}  // namespace detail

/**
 * Runs the sweep over (method, n, gamma, rep) cells with seeds seed0 + rep.
 * Individual failures become records with a failure status; the sweep never
 * aborts. With jobs > 1 the cells run on a thread pool, but the records come
 * back in deterministic (method, n, gamma, seed) order regardless.
 */
inline std::vector<BenchRecord> run_bench(const BenchConfig& config,
                                          std::ostream* progress = nullptr) {
    struct Cell {
        std::string method;
        int n;
        double gamma;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& method : config.methods)
        for (int n : config.ns)
            for (double gamma : config.gammas)
                for (int rep = 0; rep < config.reps_for(method); ++rep)
                    cells.push_back({method, n, gamma, config.seed0 + static_cast<std::uint64_t>(rep)});

    std::vector<BenchRecord> records(cells.size());
    const int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& cell = cells[i];
            records[i] = detail::run_bench_cell(cell.method, cell.n, cell.gamma, cell.seed, config);
            if (progress)
                (*progress) << records[i].method << " n=" << records[i].n
                            << " gamma=" << records[i].gamma << " seed=" << records[i].seed
                            << " status=" << records[i].status << " time=" << records[i].time_s
                            << "s\n";
        }
        return records;
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const auto& cell = cells[i];
            records[i] = detail::run_bench_cell(cell.method, cell.n, cell.gamma, cell.seed, config);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return records;
}

namespace detail {

inline std::string format_double(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

}  // namespace detail

/// CSV columns: method,n,states,gamma,seed,reward,time_s,status,iters.
inline void write_csv(const std::vector<BenchRecord>& records, std::ostream& out) {
    out << "method,n,states,gamma,seed,reward,time_s,status,iters\n";
    for (const auto& r : records) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        out << r.method << ',' << r.n << ',' << r.states << ','
            << detail::format_double(r.gamma) << ',' << r.seed << ','
            << detail::format_double(r.reward) << ',' << detail::format_double(r.time_s) << ','
            << status << ',' << r.iters << '\n';
    }
}

/// Per-(method, n, gamma) summary with means and the requested quantiles of
/// reward and solution time; non-finite rewards are excluded from the reward
/// statistics but counted in the status tally.
inline std::string summarize(const std::vector<BenchRecord>& records,
                             const std::vector<double>& quantiles_wanted) {
    struct Group {
        std::string method;
        int n;
        double gamma;
        std::vector<double> rewards;
        std::vector<double> times;
        int converged = 0;
        int total = 0;
    };
    std::vector<Group> groups;
    auto find_group = [&](const BenchRecord& r) -> Group& {
        for (auto& g : groups)
            if (g.method == r.method && g.n == r.n && g.gamma == r.gamma) return g;
        groups.push_back({r.method, r.n, r.gamma, {}, {}, 0, 0});
        return groups.back();
    };
    for (const auto& r : records) {
        Group& g = find_group(r);
        ++g.total;
        if (std::isfinite(r.reward)) g.rewards.push_back(r.reward);
        g.times.push_back(r.time_s);
        if (r.status == "converged") ++g.converged;
    }

    std::ostringstream out;
    out << "method        n  gamma         conv/total  mean_reward";
    for (double q : quantiles_wanted) out << "  reward_q" << q;
    out << "  mean_time_s";
    for (double q : quantiles_wanted) out << "  time_q" << q;
    out << '\n';
    for (const auto& g : groups) {
        const double mean_reward =
            g.rewards.empty()
                ? std::numeric_limits<double>::quiet_NaN()
                : std::accumulate(g.rewards.begin(), g.rewards.end(), 0.0) / g.rewards.size();
        const double mean_time =
            std::accumulate(g.times.begin(), g.times.end(), 0.0) / g.times.size();
        char line[256];
        std::snprintf(line, sizeof(line), "%-12s %2d  %-12.6g %4d/%-5d  %11.6g", g.method.c_str(),
                      g.n, g.gamma, g.converged, g.total, mean_reward);
        out << line;
        for (double q : quantiles_wanted)
            out << "  " << (g.rewards.empty() ? std::numeric_limits<double>::quiet_NaN()
                                              : quantile(g.rewards, q));
        out << "  " << mean_time;
        for (double q : quantiles_wanted) out << "  " << quantile(g.times, q);
        out << '\n';
    }
    return out.str();
}

}  // namespace rosa
