#include "trajstitch/svg.hpp"

#include <cstdio>

#include "trajstitch/jsonio.hpp"

namespace trajstitch::svg {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

std::string palette_color(size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

std::string render_maze_svg(const maze::MazeSpec& spec, const std::vector<Polyline>& lines,
                            const std::vector<Marker>& markers) {
    const double cs = spec.cell_size;
    const double w = spec.width * cs;
    const double h = spec.height * cs;
    const double px = 48.0;  // pixels per world unit
    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w * px) + "\" height=\"" + num(h * px) +
           "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" fill=\"#ffffff\"/>\n";
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            if (spec.free_cell(x, y)) continue;
            out += "<rect x=\"" + num(x * cs) + "\" y=\"" + num(y * cs) + "\" width=\"" + num(cs) + "\" height=\"" +
                   num(cs) + "\" fill=\"#30343a\"/>\n";
        }
    }
    for (const auto& line : lines) {
        if (line.points.size() < 2) continue;
        out += "<polyline fill=\"none\" stroke=\"" + line.color + "\" stroke-width=\"" + num(line.width) +
               "\" stroke-linejoin=\"round\" stroke-linecap=\"round\" points=\"";
        for (size_t i = 0; i < line.points.size(); ++i) {
            if (i) out += ' ';
            out += num(line.points[i].x) + "," + num(line.points[i].y);
        }
        out += "\"/>\n";
    }
    for (const auto& m : markers) {
        out += "<circle cx=\"" + num(m.at.x) + "\" cy=\"" + num(m.at.y) + "\" r=\"" + num(m.radius) + "\" fill=\"" +
               m.color + "\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

void write_maze_svg(const std::string& path, const maze::MazeSpec& spec, const std::vector<Polyline>& lines,
                    const std::vector<Marker>& markers) {
    write_file(path, render_maze_svg(spec, lines, markers));
}

}  // namespace trajstitch::svg
