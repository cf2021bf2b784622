#include "hubbind/json_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hubbind/errors.hpp"

namespace hubbind {

ojson matrix_to_json(const Matrix& m) {
  ojson j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.data();
  return j;
}

Matrix matrix_from_json(const ojson& j) {
  try {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) {
      throw IoError("matrix: data length " + std::to_string(data.size()) + " != " +
                    std::to_string(rows) + "x" + std::to_string(cols));
    }
    return Matrix(rows, cols, std::move(data));
  } catch (const ojson::exception& e) {
    throw IoError(std::string("matrix: malformed: ") + e.what());
  }
}

ojson parse_json(std::string_view text, std::string_view what) {
  try {
    return ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw IoError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

void require_format(const ojson& j, std::string_view format, int version) {
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string() ||
      j["format"].get<std::string>() != format) {
    throw IoError("expected a '" + std::string(format) + "' document");
  }
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != version) {
    throw IoError("'" + std::string(format) + "' version mismatch: expected " +
                  std::to_string(version));
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace hubbind
