#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajstitch/jsonio.hpp"
#include "trajstitch/rng.hpp"

namespace trajstitch::maze {

// Grid world with exact dynamics: 8 compass moves plus stay, walls block,
// diagonal moves additionally require both orthogonal neighbors free.
struct MazeSpec {
    int width = 0;
    int height = 0;
    double cell_size = 1.0;
    std::vector<std::uint8_t> walls;  // row-major [y * width + x], 1 = blocked

    bool in_bounds(int cx, int cy) const { return cx >= 0 && cx < width && cy >= 0 && cy < height; }
    bool free_cell(int cx, int cy) const { return in_bounds(cx, cy) && walls[static_cast<size_t>(cy) * width + cx] == 0; }
    int free_count() const;
    void validate() const;  // border walled, >= 1 free cell
};

struct EnvState {
    double x = 0.0;
    double y = 0.0;
};

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell& o) const { return x == o.x && y == o.y; }
};

using ActionId = int;  // 0..8
inline constexpr int kNumActions = 9;
inline constexpr ActionId kStayAction = 4;

// Action id <-> displacement bijection: dx = id % 3 - 1, dy = id / 3 - 1.
inline int action_dx(ActionId a) { return a % 3 - 1; }
inline int action_dy(ActionId a) { return a / 3 - 1; }
inline ActionId action_from_delta(int dx, int dy) { return (dy + 1) * 3 + (dx + 1); }

Cell cell_of(const MazeSpec& spec, const EnvState& s);
EnvState center_of(const MazeSpec& spec, const Cell& c);

// Exact dynamics f*. Returns the center of the target cell when the move is
// legal, otherwise s unchanged. Throws InvalidStateError if s is not on a
// free cell.
EnvState step(const MazeSpec& spec, const EnvState& s, ActionId a);

inline constexpr int kUnreachable = -1;

// BFS distances (in steps) from `from` to every cell; kUnreachable where no
// path exists. Indexed [y * width + x].
std::vector<int> bfs_distances(const MazeSpec& spec, const Cell& from);

// Exact temporal distance d*(a, b) under step() connectivity.
int temporal_distance_oracle(const MazeSpec& spec, const Cell& a, const Cell& b);

// One BFS-shortest-path action sequence from a to b (empty if a == b).
// Deterministic: neighbors expanded in action-id order.
std::vector<ActionId> shortest_path_actions(const MazeSpec& spec, const Cell& a, const Cell& b);

struct Trajectory {
    std::vector<EnvState> states;
    std::vector<ActionId> actions;  // same length as states; last action may be stay
    std::int64_t episode_id = 0;

    size_t length() const { return states.size(); }
};

struct Dataset {
    MazeSpec spec;
    std::vector<Trajectory> trajectories;
    json meta = json::object();

    std::int64_t transition_count() const;
    // All states stacked into an N x 2 matrix (for normalizer fitting etc.).
    std::vector<EnvState> all_states() const;
};

// One Stitch-style episode: short BFS hops (<= max_span apart) concatenated
// until ep_len states, padded with stay. hop_bounds (optional) receives the
// state indices where each hop starts/ends, for verification.
Trajectory stitch_episode(const MazeSpec& spec, int max_span, int ep_len, Rng& rng,
                          std::vector<std::pair<int, int>>* hop_bounds = nullptr);

Dataset generate_stitch_dataset(const MazeSpec& spec, int n_episodes, int max_span, int ep_len, std::uint64_t seed);

Dataset generate_explore_dataset(const MazeSpec& spec, int n_episodes, int ep_len, int resample_interval,
                                 double noise_prob, std::uint64_t seed);

bool is_success(const EnvState& s, const EnvState& g, double delta_g);

// Maze text format: one row per line, '#' blocked, '.' free.
MazeSpec parse_maze_text(const std::string& text);
std::string maze_to_text(const MazeSpec& spec);

// Built-in layouts: open5, open8, medium, large.
bool is_builtin_maze(const std::string& name);
MazeSpec builtin_maze(const std::string& name);
// Open w x h interior surrounded by a wall ring.
MazeSpec open_maze(int interior_w, int interior_h, double cell_size = 1.0);
// Resolves a builtin name or a path to a maze text file.
MazeSpec load_maze(const std::string& name_or_path);

// Newline-delimited JSON dataset file: header record then one record per
// trajectory. Floats are written with 17 significant digits.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace trajstitch::maze
