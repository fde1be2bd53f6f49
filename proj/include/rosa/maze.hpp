#pragma once

#include "rosa/pomdp.hpp"
#include "rosa/rng.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rosa {

/**
 * Square maze on a (2n-1) x (2n-1) grid. Cells with both coordinates even are
 * the n^2 rooms and are always open; cells with both coordinates odd are
 * always walls; exactly n^2 - 1 of the edge cells between rooms are opened by
 * the carving, for 2n^2 - 1 open cells forming one connected component.
 */
struct Maze {
    int n = 0;
    int side = 0;  // 2n - 1
    std::vector<std::uint8_t> open;  // side*side, row major
    int goal_r = 0;
    int goal_c = 0;
    std::uint64_t seed = 0;

    bool is_open(int r, int c) const {
        if (r < 0 || c < 0 || r >= side || c >= side) return false;
        return open[static_cast<std::size_t>(r) * side + c] != 0;
    }

    int open_count() const {
        int count = 0;
        for (auto cell : open) count += cell != 0;
        return count;
    }

    bool operator==(const Maze&) const = default;
};

/**
 * Random depth-first-search maze. The room graph is carved by an iterative
 * DFS whose unvisited-neighbor order is reshuffled at every step with a
 * xoshiro256** stream seeded from `seed` via splitmix64; the goal is then
 * drawn uniformly from the open cells with the same stream. Deterministic
 * for fixed (n, seed).
 */
inline Maze generate_maze(int n, std::uint64_t seed) {
    if (n < 2) throw InvalidInput("generate_maze: n must be at least 2");
    Maze maze;
    maze.n = n;
    maze.side = 2 * n - 1;
    maze.seed = seed;
    maze.open.assign(static_cast<std::size_t>(maze.side) * maze.side, 0);

    auto open_cell = [&](int r, int c) {
        maze.open[static_cast<std::size_t>(r) * maze.side + c] = 1;
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) open_cell(2 * i, 2 * j);

    Xoshiro256 rng(seed);
    std::vector<bool> visited(static_cast<std::size_t>(n) * n, false);
    std::vector<int> stack;
    const int start = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n) * n));
    visited[start] = true;
    stack.push_back(start);

    constexpr int kDr[4] = {-1, 1, 0, 0};
    constexpr int kDc[4] = {0, 0, -1, 1};
    std::vector<int> neighbors;
    while (!stack.empty()) {
        const int cur = stack.back();
        const int ci = cur / n, cj = cur % n;
        neighbors.clear();
        for (int d = 0; d < 4; ++d) {
            const int ni = ci + kDr[d], nj = cj + kDc[d];
            if (ni < 0 || nj < 0 || ni >= n || nj >= n) continue;
            if (!visited[static_cast<std::size_t>(ni) * n + nj]) neighbors.push_back(ni * n + nj);
        }
        if (neighbors.empty()) {
            stack.pop_back();
            continue;
        }
        rng.shuffle(neighbors);
        const int next = neighbors.front();
        const int ni = next / n, nj = next % n;
        open_cell(ci + ni, cj + nj);  // the edge cell between the two rooms
        visited[next] = true;
        stack.push_back(next);
    }

    std::vector<std::pair<int, int>> cells;
    for (int r = 0; r < maze.side; ++r)
        for (int c = 0; c < maze.side; ++c)
            if (maze.is_open(r, c)) cells.emplace_back(r, c);
    const auto goal = cells[rng.bounded(cells.size())];
    maze.goal_r = goal.first;
    maze.goal_c = goal.second;
    return maze;
}

/// ASCII rendering: '#' wall, '.' open, 'G' goal.
inline std::string render_maze(const Maze& maze) {
    std::string out;
    out.reserve(static_cast<std::size_t>(maze.side) * (maze.side + 1));
    for (int r = 0; r < maze.side; ++r) {
        for (int c = 0; c < maze.side; ++c) {
            if (r == maze.goal_r && c == maze.goal_c)
                out += 'G';
            else
                out += maze.is_open(r, c) ? '.' : '#';
        }
        out += '\n';
    }
    return out;
}

/// Navigation POMDP of a maze plus the bookkeeping linking states to cells
/// and observation ids to 8-neighborhood patterns.
struct MazePomdp {
    PomdpModel model;
    std::vector<std::pair<int, int>> cell_of_state;
    std::vector<int> state_of_cell;           // row*side + col -> state index, -1 for walls
    std::vector<std::uint8_t> pattern_of_obs;  // observation id -> neighborhood bits
    int goal_state = 0;
};

namespace detail {

// Neighbor offsets in row-major order; bit k of a pattern is set when the
// k-th neighbor cell is open (out-of-grid counts as wall).
constexpr int kNeighborhood[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                     {0, 1},   {1, -1}, {1, 0},  {1, 1}};

inline std::uint8_t neighborhood_pattern(const Maze& maze, int r, int c) {
    std::uint8_t bits = 0;
    for (int k = 0; k < 8; ++k)
        if (maze.is_open(r + kNeighborhood[k][0], c + kNeighborhood[k][1]))
            bits |= static_cast<std::uint8_t>(1u << k);
    return bits;
}

}  // namespace detail

/**
 * POMDP of the navigation task: states are the open cells; the four actions
 * move right, left, up, down, staying in place against walls; the goal state
 * pays |S| on every action and then resets (uniformly over all states by
 * default, over non-goal states with the flag cleared); the agent observes
 * the open/wall pattern of the 8 neighboring cells, with observation ids
 * assigned by first occurrence in row-major state order; the start
 * distribution is uniform.
 */
inline MazePomdp build_maze_pomdp(const Maze& maze, double gamma,
                                  bool reset_includes_goal = true) {
    MazePomdp out;
    const int side = maze.side;
    out.state_of_cell.assign(static_cast<std::size_t>(side) * side, -1);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            if (maze.is_open(r, c)) {
                out.state_of_cell[static_cast<std::size_t>(r) * side + c] =
                    static_cast<int>(out.cell_of_state.size());
                out.cell_of_state.emplace_back(r, c);
            }
    const int S = static_cast<int>(out.cell_of_state.size());
    const int A = 4;
    out.goal_state = out.state_of_cell[static_cast<std::size_t>(maze.goal_r) * side + maze.goal_c];

    // Actions: 0 right, 1 left, 2 up, 3 down.
    constexpr int kMoveR[4] = {0, 0, -1, 1};
    constexpr int kMoveC[4] = {1, -1, 0, 0};

    Matrix alpha = Matrix::Zero(S * A, S);
    Matrix reward = Matrix::Zero(S, A);
    const double reset_mass = reset_includes_goal ? 1.0 / S : 1.0 / (S - 1);
    for (int s = 0; s < S; ++s) {
        const auto [r, c] = out.cell_of_state[s];
        for (int a = 0; a < A; ++a) {
            const int row = s * A + a;
            if (s == out.goal_state) {
                reward(s, a) = static_cast<double>(S);
                for (int s2 = 0; s2 < S; ++s2)
                    alpha(row, s2) = (reset_includes_goal || s2 != s) ? reset_mass : 0.0;
                continue;
            }
            const int nr = r + kMoveR[a], nc = c + kMoveC[a];
            const int target =
                maze.is_open(nr, nc) ? out.state_of_cell[static_cast<std::size_t>(nr) * side + nc]
                                     : s;
            alpha(row, target) = 1.0;
        }
    }

    std::vector<int> obs_of(S);
    std::vector<int> id_of_pattern(256, -1);
    for (int s = 0; s < S; ++s) {
        const auto [r, c] = out.cell_of_state[s];
        const std::uint8_t pattern = detail::neighborhood_pattern(maze, r, c);
        if (id_of_pattern[pattern] < 0) {
            id_of_pattern[pattern] = static_cast<int>(out.pattern_of_obs.size());
            out.pattern_of_obs.push_back(pattern);
        }
        obs_of[s] = id_of_pattern[pattern];
    }

    out.model = PomdpModel(S, static_cast<int>(out.pattern_of_obs.size()), A, std::move(alpha),
                           std::move(obs_of), std::move(reward),
                           Vector::Constant(S, 1.0 / S), gamma);
    return out;
}

/**
 * Two-state, one-observation, two-action fixture: action 0 stays, action 1
 * swaps the states; only state 1 pays reward; the chain starts in state 0.
 * Policies are parameterized by the single probability p of playing action 1.
 */
inline PomdpModel blind_controller_fixture(double gamma) {
    Matrix alpha = Matrix::Zero(4, 2);
    alpha(0, 0) = 1.0;  // state 0, stay
    alpha(1, 1) = 1.0;  // state 0, swap
    alpha(2, 1) = 1.0;  // state 1, stay
    alpha(3, 0) = 1.0;  // state 1, swap
    Matrix reward(2, 2);
    reward << 0.0, 0.0, 1.0, 1.0;
    Vector mu(2);
    mu << 1.0, 0.0;
    return PomdpModel(2, 1, 2, std::move(alpha), {0, 0}, std::move(reward), std::move(mu), gamma);
}

}  // namespace rosa
