#pragma once

#include <json.hpp>

#include <string>

namespace dbill {

/// Compact JSON with sorted keys and every floating value printed with 17
/// significant digits. Identical values always give identical bytes.
std::string canonical_dump(const nlohmann::json& j);

/// Formats a double with 17 significant digits ("%.17g").
std::string format_double(double v);

/// Writes to a temporary sibling file, then renames over the target.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace dbill
