#pragma once

#include <string>

#include <json.hpp>

namespace trajstitch {

using json = nlohmann::json;

// Formats a double with up to 17 significant digits ("%.17g"), enough to
// round-trip any IEEE-754 double exactly through text.
std::string format_double(double v);

// Serializes a json value with format_double applied to every float.
// Object keys come out in nlohmann's storage order (lexicographic), so the
// output is byte-deterministic for equal inputs.
std::string dump_json(const json& v);

json parse_json(const std::string& text);

// Whole-file helpers. Throw IoError on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace trajstitch
