#pragma once

#include <string>

#include "json.hpp"

namespace t4d {

// Parses a practical TOML subset into a JSON document: comments, [table] and
// [[array-of-table]] headers, bare/quoted/dotted keys, basic and literal
// strings, integers, floats, booleans, and (possibly multiline) arrays.
// Dates, inline tables, and multiline strings are not supported. Throws
// Error("toml.syntax") with a line number on malformed input.
nlohmann::json parse_toml(const std::string& text);

}  // namespace t4d
