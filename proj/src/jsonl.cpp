// SPDX-License-Identifier: Apache-2.0
#include "vgrft/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "vgrft/errors.hpp"

namespace vgrft::jsonl {

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of four numbers");
  std::array<double, 4> a{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw DataError("box must be an array of four numbers");
    a[i] = j[i].get<double>();
  }
  return Box::from_array(a);
}

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, std::string_view)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(n, line);
  }
  if (in.bad()) throw DataError("read failure on " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("write failure on " + path.string());
}

}  // namespace vgrft::jsonl
