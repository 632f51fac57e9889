#pragma once
#include <string>

namespace wcalc {

// Writes to `<path>.tmp` and renames over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace wcalc
