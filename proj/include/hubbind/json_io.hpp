#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "hubbind/numerics.hpp"

namespace hubbind {

/// Insertion-ordered JSON: documents we write keep a fixed field order.
using ojson = nlohmann::ordered_json;

ojson matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const ojson& j);

/// Parses text, converting parse failures into IoError tagged with what.
ojson parse_json(std::string_view text, std::string_view what);
/// Throws IoError unless j["format"] == format and j["version"] == version.
void require_format(const ojson& j, std::string_view format, int version);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace hubbind
