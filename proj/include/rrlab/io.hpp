#pragma once

#include <filesystem>
#include <string>

namespace rrlab {

// Shortest text that round-trips the double ("%.17g" family, locale-free).
std::string format_double(double v);
std::string format_fixed(double v, int decimals);

// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace rrlab
