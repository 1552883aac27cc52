#include "trajstitch/maze.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "trajstitch/errors.hpp"

namespace trajstitch::maze {

int MazeSpec::free_count() const {
    int n = 0;
    for (auto w : walls) n += (w == 0);
    return n;
}

void MazeSpec::validate() const {
    if (width < 3 || height < 3) throw ConfigError("maze must be at least 3x3");
    if (cell_size <= 0.0) throw ConfigError("cell_size must be positive");
    if (walls.size() != static_cast<size_t>(width) * height) throw ConfigError("walls size mismatch");
    for (int x = 0; x < width; ++x)
        if (free_cell(x, 0) || free_cell(x, height - 1)) throw ConfigError("maze border must be fully walled");
    for (int y = 0; y < height; ++y)
        if (free_cell(0, y) || free_cell(width - 1, y)) throw ConfigError("maze border must be fully walled");
    if (free_count() < 1) throw ConfigError("maze has no free cell");
}

Cell cell_of(const MazeSpec& spec, const EnvState& s) {
    return Cell{static_cast<int>(std::floor(s.x / spec.cell_size)), static_cast<int>(std::floor(s.y / spec.cell_size))};
}

EnvState center_of(const MazeSpec& spec, const Cell& c) {
    return EnvState{(c.x + 0.5) * spec.cell_size, (c.y + 0.5) * spec.cell_size};
}

EnvState step(const MazeSpec& spec, const EnvState& s, ActionId a) {
    if (a < 0 || a >= kNumActions) throw InvalidStateError("action id out of range");
    const Cell c = cell_of(spec, s);
    if (!spec.free_cell(c.x, c.y)) throw InvalidStateError("state is not on a free cell");
    const int dx = action_dx(a);
    const int dy = action_dy(a);
    if (dx == 0 && dy == 0) return s;
    const int tx = c.x + dx;
    const int ty = c.y + dy;
    if (!spec.free_cell(tx, ty)) return s;
    if (dx != 0 && dy != 0) {
        // corner-cut rule: both orthogonal neighbors must be free
        if (!spec.free_cell(c.x + dx, c.y) || !spec.free_cell(c.x, c.y + dy)) return s;
    }
    return center_of(spec, Cell{tx, ty});
}

namespace {

// Legal single-step moves from a free cell, in action-id order.
std::vector<Cell> legal_neighbors(const MazeSpec& spec, const Cell& c) {
    std::vector<Cell> out;
    for (ActionId a = 0; a < kNumActions; ++a) {
        if (a == kStayAction) continue;
        const int dx = action_dx(a);
        const int dy = action_dy(a);
        const int tx = c.x + dx;
        const int ty = c.y + dy;
        if (!spec.free_cell(tx, ty)) continue;
        if (dx != 0 && dy != 0 && (!spec.free_cell(c.x + dx, c.y) || !spec.free_cell(c.x, c.y + dy))) continue;
        out.push_back(Cell{tx, ty});
    }
    return out;
}

}  // namespace

std::vector<int> bfs_distances(const MazeSpec& spec, const Cell& from) {
    if (!spec.free_cell(from.x, from.y)) throw InvalidStateError("bfs from blocked cell");
    std::vector<int> dist(static_cast<size_t>(spec.width) * spec.height, kUnreachable);
    auto idx = [&](const Cell& c) { return static_cast<size_t>(c.y) * spec.width + c.x; };
    std::deque<Cell> queue{from};
    dist[idx(from)] = 0;
    while (!queue.empty()) {
        const Cell c = queue.front();
        queue.pop_front();
        const int d = dist[idx(c)];
        for (const Cell& n : legal_neighbors(spec, c)) {
            if (dist[idx(n)] == kUnreachable) {
                dist[idx(n)] = d + 1;
                queue.push_back(n);
            }
        }
    }
    return dist;
}

int temporal_distance_oracle(const MazeSpec& spec, const Cell& a, const Cell& b) {
    if (!spec.free_cell(a.x, a.y) || !spec.free_cell(b.x, b.y)) throw InvalidStateError("oracle on blocked cell");
    const auto dist = bfs_distances(spec, a);
    return dist[static_cast<size_t>(b.y) * spec.width + b.x];
}

std::vector<ActionId> shortest_path_actions(const MazeSpec& spec, const Cell& a, const Cell& b) {
    if (!spec.free_cell(a.x, a.y) || !spec.free_cell(b.x, b.y)) throw InvalidStateError("path on blocked cell");
    // BFS from b so distances decrease along the path from a; greedy descent
    // picks the smallest action id among distance-reducing moves.
    const auto dist = bfs_distances(spec, b);
    auto at = [&](const Cell& c) { return dist[static_cast<size_t>(c.y) * spec.width + c.x]; };
    if (at(a) == kUnreachable) throw Error("shortest_path_actions: unreachable pair");
    std::vector<ActionId> actions;
    Cell cur = a;
    while (!(cur == b)) {
        const int d = at(cur);
        bool moved = false;
        for (ActionId act = 0; act < kNumActions && !moved; ++act) {
            if (act == kStayAction) continue;
            const EnvState next = step(spec, center_of(spec, cur), act);
            const Cell nc = cell_of(spec, next);
            if (nc == cur) continue;
            if (at(nc) == d - 1) {
                actions.push_back(act);
                cur = nc;
                moved = true;
            }
        }
        if (!moved) throw Error("shortest_path_actions: descent stuck");  // cannot happen on valid BFS field
    }
    return actions;
}

std::int64_t Dataset::transition_count() const {
    std::int64_t n = 0;
    for (const auto& t : trajectories) n += static_cast<std::int64_t>(t.states.size()) - 1;
    return n;
}

std::vector<EnvState> Dataset::all_states() const {
    std::vector<EnvState> out;
    for (const auto& t : trajectories) out.insert(out.end(), t.states.begin(), t.states.end());
    return out;
}

namespace {

std::vector<Cell> free_cells(const MazeSpec& spec) {
    std::vector<Cell> cells;
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            if (spec.free_cell(x, y)) cells.push_back(Cell{x, y});
    return cells;
}

json state_stats(const Dataset& ds) {
    double sx = 0, sy = 0, sxx = 0, syy = 0;
    double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
    std::int64_t n = 0;
    for (const auto& t : ds.trajectories) {
        for (const auto& s : t.states) {
            sx += s.x; sy += s.y; sxx += s.x * s.x; syy += s.y * s.y;
            minx = std::min(minx, s.x); maxx = std::max(maxx, s.x);
            miny = std::min(miny, s.y); maxy = std::max(maxy, s.y);
            ++n;
        }
    }
    if (n == 0) return json::object();
    const double mx = sx / n, my = sy / n;
    return json{{"count", n},
                {"mean", {mx, my}},
                {"stddev", {std::sqrt(std::max(0.0, sxx / n - mx * mx)), std::sqrt(std::max(0.0, syy / n - my * my))}},
                {"min", {minx, miny}},
                {"max", {maxx, maxy}}};
}

}  // namespace

Trajectory stitch_episode(const MazeSpec& spec, int max_span, int ep_len, Rng& rng,
                          std::vector<std::pair<int, int>>* hop_bounds) {
    const auto cells = free_cells(spec);
    Trajectory traj;
    traj.states.reserve(ep_len);
    traj.actions.reserve(ep_len);

    Cell cur = cells[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
    traj.states.push_back(center_of(spec, cur));

    while (static_cast<int>(traj.states.size()) < ep_len) {
        // uniform target among free cells within max_span BFS steps (self included)
        const auto dist = bfs_distances(spec, cur);
        std::vector<Cell> eligible;
        for (const Cell& c : cells) {
            const int d = dist[static_cast<size_t>(c.y) * spec.width + c.x];
            if (d != kUnreachable && d <= max_span) eligible.push_back(c);
        }
        if (eligible.empty()) throw Error("stitch_episode: no reachable cell within max_span");
        const Cell target = eligible[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))];
        const int hop_start = static_cast<int>(traj.states.size()) - 1;

        auto actions = shortest_path_actions(spec, cur, target);
        if (actions.empty()) actions.push_back(kStayAction);  // zero-length hop records one stay step
        for (ActionId a : actions) {
            if (static_cast<int>(traj.states.size()) >= ep_len) break;
            const EnvState next = step(spec, traj.states.back(), a);
            traj.actions.push_back(a);
            traj.states.push_back(next);
        }
        cur = cell_of(spec, traj.states.back());
        if (hop_bounds) hop_bounds->emplace_back(hop_start, static_cast<int>(traj.states.size()) - 1);
    }
    // final dangling action
    traj.actions.push_back(kStayAction);
    return traj;
}

Dataset generate_stitch_dataset(const MazeSpec& spec, int n_episodes, int max_span, int ep_len, std::uint64_t seed) {
    spec.validate();
    if (ep_len < 1) throw ConfigError("ep_len must be >= 1");
    if (max_span < 0) throw ConfigError("max_span must be >= 0");
    if (spec.free_count() < 2) throw ConfigError("stitch generation needs at least 2 free cells");
    Dataset ds;
    ds.spec = spec;
    ds.trajectories.reserve(n_episodes);
    for (int e = 0; e < n_episodes; ++e) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
        Trajectory t = stitch_episode(spec, max_span, ep_len, rng);
        t.episode_id = e;
        ds.trajectories.push_back(std::move(t));
    }
    ds.meta = json{{"generator", "stitch"},
                   {"seed", seed},
                   {"n_episodes", n_episodes},
                   {"max_span", max_span},
                   {"ep_len", ep_len}};
    ds.meta["state_stats"] = state_stats(ds);
    return ds;
}

Dataset generate_explore_dataset(const MazeSpec& spec, int n_episodes, int ep_len, int resample_interval,
                                 double noise_prob, std::uint64_t seed) {
    spec.validate();
    if (ep_len < 1) throw ConfigError("ep_len must be >= 1");
    if (resample_interval < 1) throw ConfigError("resample_interval must be >= 1");
    if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) throw ConfigError("noise_prob must be in [0,1]");
    const auto cells = free_cells(spec);
    // 8 compass headings (stay excluded)
    const ActionId headings[8] = {0, 1, 2, 3, 5, 6, 7, 8};

    Dataset ds;
    ds.spec = spec;
    ds.trajectories.reserve(n_episodes);
    for (int e = 0; e < n_episodes; ++e) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
        Trajectory t;
        t.episode_id = e;
        Cell start = cells[static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
        t.states.push_back(center_of(spec, start));
        ActionId heading = headings[rng.uniform_int(0, 7)];
        for (int i = 0; i + 1 < ep_len; ++i) {
            if (i > 0 && i % resample_interval == 0) heading = headings[rng.uniform_int(0, 7)];
            ActionId a = heading;
            if (noise_prob > 0.0 && rng.uniform() < noise_prob) a = static_cast<ActionId>(rng.uniform_int(0, kNumActions - 1));
            const EnvState next = step(spec, t.states.back(), a);
            t.actions.push_back(a);
            t.states.push_back(next);
        }
        t.actions.push_back(kStayAction);
        ds.trajectories.push_back(std::move(t));
    }
    ds.meta = json{{"generator", "explore"},
                   {"seed", seed},
                   {"n_episodes", n_episodes},
                   {"ep_len", ep_len},
                   {"resample_interval", resample_interval},
                   {"noise_prob", noise_prob}};
    ds.meta["state_stats"] = state_stats(ds);
    return ds;
}

bool is_success(const EnvState& s, const EnvState& g, double delta_g) {
    if (!(delta_g > 0.0)) throw ConfigError("delta_g must be positive");
    const double dx = s.x - g.x;
    const double dy = s.y - g.y;
    return std::sqrt(dx * dx + dy * dy) <= delta_g;
}

MazeSpec parse_maze_text(const std::string& text) {
    std::vector<std::string> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(line);
    }
    if (rows.empty()) throw ConfigError("empty maze text");
    MazeSpec spec;
    spec.height = static_cast<int>(rows.size());
    spec.width = static_cast<int>(rows[0].size());
    spec.walls.assign(static_cast<size_t>(spec.width) * spec.height, 1);
    for (int y = 0; y < spec.height; ++y) {
        if (static_cast<int>(rows[y].size()) != spec.width) throw ConfigError("ragged maze rows");
        for (int x = 0; x < spec.width; ++x) {
            const char c = rows[y][x];
            if (c == '#') continue;
            if (c == '.') spec.walls[static_cast<size_t>(y) * spec.width + x] = 0;
            else throw ConfigError(std::string("bad maze character '") + c + "'");
        }
    }
    spec.validate();
    return spec;
}

std::string maze_to_text(const MazeSpec& spec) {
    std::string out;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) out += spec.free_cell(x, y) ? '.' : '#';
        out += '\n';
    }
    return out;
}

MazeSpec open_maze(int interior_w, int interior_h, double cell_size) {
    if (interior_w < 1 || interior_h < 1) throw ConfigError("open_maze interior must be >= 1x1");
    MazeSpec spec;
    spec.width = interior_w + 2;
    spec.height = interior_h + 2;
    spec.cell_size = cell_size;
    spec.walls.assign(static_cast<size_t>(spec.width) * spec.height, 1);
    for (int y = 1; y <= interior_h; ++y)
        for (int x = 1; x <= interior_w; ++x) spec.walls[static_cast<size_t>(y) * spec.width + x] = 0;
    return spec;
}

namespace {

const char* kMediumRows[] = {
    "############",
    "#....#.....#",
    "#.##.#.###.#",
    "#.#......#.#",
    "#.#.####.#.#",
    "#...#..#...#",
    "#.###..#.#.#",
    "#.#....#.#.#",
    "#.#.####.#.#",
    "#.#......#.#",
    "#....#.....#",
    "############",
};

const char* kLargeRows[] = {
    "################",
    "#......#.......#",
    "#.####.#.#####.#",
    "#.#..#.#.#...#.#",
    "#.#..#.#.#.#.#.#",
    "#.#..#...#.#.#.#",
    "#.#..#####.#.#.#",
    "#.#........#...#",
    "#.########.##.##",
    "#.#......#..##.#",
    "#.#.####.##.#..#",
    "#.#.#..#..#.#.##",
    "#...#..##.#.#..#",
    "#.###..#..#.##.#",
    "#......#..#....#",
    "################",
};

template <size_t N>
std::string join_rows(const char* const (&rows)[N]) {
    std::string text;
    for (const char* r : rows) {
        text += r;
        text += '\n';
    }
    return text;
}

}  // namespace

bool is_builtin_maze(const std::string& name) {
    return name == "open5" || name == "open8" || name == "medium" || name == "large";
}

MazeSpec builtin_maze(const std::string& name) {
    if (name == "open5") return open_maze(5, 5);
    if (name == "open8") return open_maze(8, 8);
    if (name == "medium") return parse_maze_text(join_rows(kMediumRows));
    if (name == "large") return parse_maze_text(join_rows(kLargeRows));
    throw ConfigError("unknown builtin maze: " + name);
}

MazeSpec load_maze(const std::string& name_or_path) {
    if (is_builtin_maze(name_or_path)) return builtin_maze(name_or_path);
    return parse_maze_text(read_file(name_or_path));
}

namespace {

constexpr int kDatasetFormatVersion = 1;

std::string walls_string(const MazeSpec& spec) {
    std::string s(spec.walls.size(), '0');
    for (size_t i = 0; i < spec.walls.size(); ++i) s[i] = spec.walls[i] ? '1' : '0';
    return s;
}

std::string trajectory_line(const Trajectory& t) {
    std::string line = "{\"episode_id\":" + std::to_string(t.episode_id) + ",\"states\":[";
    for (size_t i = 0; i < t.states.size(); ++i) {
        if (i) line += ',';
        line += '[';
        line += format_double(t.states[i].x);
        line += ',';
        line += format_double(t.states[i].y);
        line += ']';
    }
    line += "],\"actions\":[";
    for (size_t i = 0; i < t.actions.size(); ++i) {
        if (i) line += ',';
        line += std::to_string(t.actions[i]);
    }
    line += "]}";
    return line;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    json header{{"format_version", kDatasetFormatVersion},
                {"maze", {{"width", ds.spec.width},
                          {"height", ds.spec.height},
                          {"cell_size", ds.spec.cell_size},
                          {"walls", walls_string(ds.spec)}}},
                {"meta", ds.meta}};
    std::string out = dump_json(header);
    out += '\n';
    for (const auto& t : ds.trajectories) {
        out += trajectory_line(t);
        out += '\n';
    }
    write_file(path, out);
}

Dataset load_dataset(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("dataset file empty: " + path);
    const json header = parse_json(line);
    if (header.value("format_version", -1) != kDatasetFormatVersion)
        throw IoError("dataset format_version mismatch in " + path);

    Dataset ds;
    const json& m = header.at("maze");
    ds.spec.width = m.at("width").get<int>();
    ds.spec.height = m.at("height").get<int>();
    ds.spec.cell_size = m.at("cell_size").get<double>();
    const std::string walls = m.at("walls").get<std::string>();
    if (walls.size() != static_cast<size_t>(ds.spec.width) * ds.spec.height)
        throw IoError("dataset walls string length mismatch in " + path);
    ds.spec.walls.resize(walls.size());
    for (size_t i = 0; i < walls.size(); ++i) ds.spec.walls[i] = walls[i] == '1';
    ds.meta = header.at("meta");

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = parse_json(line);
        Trajectory t;
        t.episode_id = rec.at("episode_id").get<std::int64_t>();
        for (const auto& st : rec.at("states")) t.states.push_back(EnvState{st.at(0).get<double>(), st.at(1).get<double>()});
        for (const auto& a : rec.at("actions")) t.actions.push_back(a.get<int>());
        if (t.states.empty() || t.actions.size() != t.states.size())
            throw IoError("dataset trajectory with inconsistent lengths in " + path);
        ds.trajectories.push_back(std::move(t));
    }
    return ds;
}

}  // namespace trajstitch::maze
