#pragma once

#include <string>
#include <vector>

#include "trajstitch/maze.hpp"

namespace trajstitch::svg {

struct Polyline {
    std::vector<maze::EnvState> points;
    std::string color = "#1f77b4";
    double width = 0.08;  // world units
};

struct Marker {
    maze::EnvState at;
    std::string color = "#d62728";
    double radius = 0.18;
};

// Standalone SVG: maze walls as filled squares plus overlay polylines and
// markers, in world coordinates.
std::string render_maze_svg(const maze::MazeSpec& spec, const std::vector<Polyline>& lines,
                            const std::vector<Marker>& markers = {});

void write_maze_svg(const std::string& path, const maze::MazeSpec& spec, const std::vector<Polyline>& lines,
                    const std::vector<Marker>& markers = {});

// Deterministic categorical palette.
std::string palette_color(size_t i);

}  // namespace trajstitch::svg
