#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "trajstitch/errors.hpp"
#include "trajstitch/maze.hpp"

using namespace trajstitch;
using namespace trajstitch::maze;

namespace {

// interior cell of an open maze (border ring adds +1)
Cell interior(int x, int y) { return Cell{x + 1, y + 1}; }

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("step: stay is the identity") {
    const MazeSpec spec = open_maze(5, 5);
    const EnvState center = center_of(spec, interior(2, 2));
    const EnvState next = step(spec, center, kStayAction);
    CHECK(next.x == center.x);
    CHECK(next.y == center.y);
}

TEST_CASE("step: moving into a wall keeps the state") {
    const MazeSpec spec = open_maze(5, 5);
    const EnvState s = center_of(spec, interior(0, 2));  // next to the west border wall
    const EnvState next = step(spec, s, action_from_delta(-1, 0));
    CHECK(next.x == s.x);
    CHECK(next.y == s.y);
}

TEST_CASE("step: diagonal from the corner of an open 3x3") {
    // hand enumeration of the 3x3 adjacency: from corner (0,0) the diagonal
    // move is legal because both orthogonal neighbors are free
    const MazeSpec spec = open_maze(3, 3);
    const EnvState s = center_of(spec, interior(0, 0));
    const EnvState next = step(spec, s, action_from_delta(1, 1));
    const Cell c = cell_of(spec, next);
    CHECK(c == interior(1, 1));
}

TEST_CASE("step: corner-cut rule blocks diagonals through wall corners") {
    // free cells at (1,1), (2,2); (2,1) and (1,2) blocked: diagonal must not cut through
    const MazeSpec spec = parse_maze_text("####\n#.##\n##.#\n####\n");
    const EnvState s = center_of(spec, Cell{1, 1});
    const EnvState next = step(spec, s, action_from_delta(1, 1));
    CHECK(cell_of(spec, next) == Cell{1, 1});
}

TEST_CASE("step: blocked-cell input is an error") {
    const MazeSpec spec = open_maze(3, 3);
    CHECK_THROWS_AS(step(spec, EnvState{0.5, 0.5}, kStayAction), InvalidStateError);
    CHECK_THROWS_AS(step(spec, EnvState{-3.0, 1.5}, kStayAction), InvalidStateError);
}

TEST_CASE("action ids are a bijection with displacements") {
    std::set<std::pair<int, int>> seen;
    for (ActionId a = 0; a < kNumActions; ++a) {
        seen.insert({action_dx(a), action_dy(a)});
        CHECK(action_from_delta(action_dx(a), action_dy(a)) == a);
    }
    CHECK(seen.size() == 9);
    CHECK(action_dx(kStayAction) == 0);
    CHECK(action_dy(kStayAction) == 0);
}

TEST_CASE("oracle: zero distance to self") {
    const MazeSpec spec = open_maze(4, 4);
    CHECK(temporal_distance_oracle(spec, interior(1, 1), interior(1, 1)) == 0);
}

TEST_CASE("oracle: open 3x3 corner to opposite corner is 2") {
    // BFS by hand on 9 cells: two diagonal steps
    const MazeSpec spec = open_maze(3, 3);
    CHECK(temporal_distance_oracle(spec, interior(0, 0), interior(2, 2)) == 2);
}

TEST_CASE("oracle: disjoint components are unreachable") {
    const MazeSpec spec = parse_maze_text("#####\n#.#.#\n#####\n");
    CHECK(temporal_distance_oracle(spec, Cell{1, 1}, Cell{3, 1}) == kUnreachable);
    CHECK_THROWS_AS(temporal_distance_oracle(spec, Cell{2, 1}, Cell{1, 1}), InvalidStateError);
}

TEST_CASE("oracle: symmetric and satisfies the triangle inequality") {
    // random wall grids; property over all free-cell triples
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        MazeSpec spec = open_maze(6, 6);
        for (int y = 1; y <= 6; ++y)
            for (int x = 1; x <= 6; ++x)
                if (rng.uniform() < 0.25) spec.walls[static_cast<size_t>(y) * spec.width + x] = 1;
        if (spec.free_count() < 3) continue;
        std::vector<Cell> cells;
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                if (spec.free_cell(x, y)) cells.push_back(Cell{x, y});
        std::vector<std::vector<int>> dist;
        for (const Cell& c : cells) dist.push_back(bfs_distances(spec, c));
        auto d = [&](size_t i, size_t j) {
            return dist[i][static_cast<size_t>(cells[j].y) * spec.width + cells[j].x];
        };
        for (size_t i = 0; i < cells.size(); ++i)
            for (size_t j = 0; j < cells.size(); ++j) {
                CHECK(d(i, j) == d(j, i));
                for (size_t k = 0; k < cells.size(); ++k) {
                    if (d(i, j) == kUnreachable || d(j, k) == kUnreachable || d(i, k) == kUnreachable) continue;
                    CHECK(d(i, k) <= d(i, j) + d(j, k));
                }
            }
    }
}

TEST_CASE("stitch episode: hops stay within max_span and dynamics close") {
    const MazeSpec spec = builtin_maze("medium");
    Rng rng(42);
    std::vector<std::pair<int, int>> hops;
    const Trajectory t = stitch_episode(spec, 4, 120, rng, &hops);
    REQUIRE(t.states.size() == 120);
    REQUIRE(t.actions.size() == 120);
    for (size_t i = 0; i + 1 < t.states.size(); ++i) {
        const EnvState next = step(spec, t.states[i], t.actions[i]);
        CHECK(next.x == t.states[i + 1].x);
        CHECK(next.y == t.states[i + 1].y);
    }
    CHECK(!hops.empty());
    for (const auto& [a, b] : hops) {
        if (b >= 120) continue;  // final hop may be truncated by the episode budget
        const int d = temporal_distance_oracle(spec, cell_of(spec, t.states[static_cast<size_t>(a)]),
                                               cell_of(spec, t.states[static_cast<size_t>(b)]));
        CHECK(d >= 0);
        CHECK(d <= 4);
    }
}

TEST_CASE("stitch dataset: max_span=0 degenerates to stay-only episodes") {
    const MazeSpec spec = open_maze(4, 4);
    const Dataset ds = generate_stitch_dataset(spec, 3, 0, 10, 5);
    for (const auto& t : ds.trajectories) {
        REQUIRE(t.states.size() == 10);
        for (const auto& a : t.actions) CHECK(a == kStayAction);
        for (const auto& s : t.states) {
            CHECK(s.x == t.states[0].x);
            CHECK(s.y == t.states[0].y);
        }
    }
}

TEST_CASE("stitch dataset: shape and determinism") {
    const MazeSpec spec = builtin_maze("open5");
    const Dataset a = generate_stitch_dataset(spec, 8, 4, 50, 123);
    const Dataset b = generate_stitch_dataset(spec, 8, 4, 50, 123);
    REQUIRE(a.trajectories.size() == 8);
    const std::string pa = tmp_path("ts_stitch_a.ndjson");
    const std::string pb = tmp_path("ts_stitch_b.ndjson");
    save_dataset(a, pa);
    save_dataset(b, pb);
    CHECK(read_file(pa) == read_file(pb));
}

TEST_CASE("explore dataset: transition consistency and heading behaviour") {
    const MazeSpec spec = builtin_maze("medium");
    const Dataset ds = generate_explore_dataset(spec, 6, 80, 10, 0.2, 99);
    REQUIRE(ds.trajectories.size() == 6);
    for (const auto& t : ds.trajectories) {
        REQUIRE(t.states.size() == 80);
        for (size_t i = 0; i + 1 < t.states.size(); ++i) {
            const EnvState next = step(spec, t.states[i], t.actions[i]);
            CHECK(next.x == t.states[i + 1].x);
            CHECK(next.y == t.states[i + 1].y);
        }
    }

    // no noise + a single heading per episode: all recorded actions equal
    const Dataset line = generate_explore_dataset(spec, 4, 30, 30, 0.0, 7);
    for (const auto& t : line.trajectories) {
        for (size_t i = 0; i + 1 < t.actions.size(); ++i) CHECK(t.actions[i] == t.actions[0]);
        CHECK(t.actions[0] != kStayAction);
    }
}

TEST_CASE("is_success: threshold semantics") {
    const EnvState s{2.5, 2.5};
    CHECK(is_success(s, s, 1e-9));
    CHECK_FALSE(is_success(s, EnvState{3.5, 2.5}, 0.5));     // adjacent cells, distance 1.0
    CHECK(is_success(s, EnvState{3.5, 3.5}, 1.5));           // sqrt(2) < 1.5
    CHECK_THROWS_AS(is_success(s, s, 0.0), ConfigError);
}

TEST_CASE("dataset file round-trips bit-exactly") {
    const MazeSpec spec = builtin_maze("open5");
    Dataset ds = generate_stitch_dataset(spec, 4, 3, 30, 11);
    // exercise non-representable-looking floats too
    ds.trajectories[0].states[0].x = 0.1 + 0.2;
    const std::string p1 = tmp_path("ts_roundtrip1.ndjson");
    const std::string p2 = tmp_path("ts_roundtrip2.ndjson");
    save_dataset(ds, p1);
    const Dataset loaded = load_dataset(p1);
    REQUIRE(loaded.trajectories.size() == ds.trajectories.size());
    for (size_t t = 0; t < ds.trajectories.size(); ++t) {
        for (size_t i = 0; i < ds.trajectories[t].states.size(); ++i) {
            CHECK(loaded.trajectories[t].states[i].x == ds.trajectories[t].states[i].x);
            CHECK(loaded.trajectories[t].states[i].y == ds.trajectories[t].states[i].y);
        }
        CHECK(loaded.trajectories[t].actions == ds.trajectories[t].actions);
    }
    save_dataset(loaded, p2);
    CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("dataset loader rejects corrupt files") {
    const std::string p = tmp_path("ts_corrupt.ndjson");
    write_file(p, "{\"format_version\":99}\n");
    CHECK_THROWS_AS(load_dataset(p), IoError);
    write_file(p, "not json\n");
    CHECK_THROWS_AS(load_dataset(p), IoError);
    CHECK_THROWS_AS(load_dataset(tmp_path("ts_missing_nope.ndjson")), IoError);
}

TEST_CASE("maze text parsing validates structure") {
    CHECK_THROWS_AS(parse_maze_text(""), ConfigError);
    CHECK_THROWS_AS(parse_maze_text("###\n#.#\n##"), ConfigError);     // ragged
    CHECK_THROWS_AS(parse_maze_text("###\n#x#\n###"), ConfigError);    // bad char
    CHECK_THROWS_AS(parse_maze_text("...\n...\n...\n"), ConfigError);  // open border
    const MazeSpec spec = parse_maze_text("####\n#..#\n####\n");
    CHECK(spec.free_count() == 2);
    CHECK(maze_to_text(spec) == "####\n#..#\n####\n");
}

TEST_CASE("builtin mazes are valid and connected") {
    for (const char* name : {"open5", "open8", "medium", "large"}) {
        const MazeSpec spec = builtin_maze(name);
        CHECK_NOTHROW(spec.validate());
        // connectivity: BFS from the first free cell reaches every free cell
        Cell first{-1, -1};
        for (int y = 0; y < spec.height && first.x < 0; ++y)
            for (int x = 0; x < spec.width && first.x < 0; ++x)
                if (spec.free_cell(x, y)) first = Cell{x, y};
        const auto dist = bfs_distances(spec, first);
        int reached = 0;
        for (int v : dist) reached += (v != kUnreachable);
        CHECK(reached == spec.free_count());
    }
    CHECK(builtin_maze("medium").free_count() == 66);
    CHECK_THROWS_AS(builtin_maze("nope"), ConfigError);

    // the medium maze must offer long-range tasks (>= 2x the stitch span)
    const MazeSpec medium = builtin_maze("medium");
    int max_d = 0;
    const auto dist = bfs_distances(medium, Cell{1, 1});
    for (int v : dist) max_d = std::max(max_d, v);
    CHECK(max_d >= 16);
}
