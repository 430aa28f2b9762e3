// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vgrft/geometry.hpp"

namespace vgrft::jsonl {

using json = nlohmann::ordered_json;

/// [x1,y1,x2,y2]. Throws DataError when `j` is not a 4-element numeric array.
Box box_from_json(const json& j);
json box_to_json(const Box& b);

/// Calls `fn(line_number, line)` for every non-blank line (1-based numbering).
/// Throws DataError naming the path when the file cannot be opened.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, std::string_view)>& fn);

/// Reads the entire file. Throws DataError on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes `contents` atomically enough for our purposes (truncate + write).
/// Throws DataError naming the path on I/O failure.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace vgrft::jsonl
