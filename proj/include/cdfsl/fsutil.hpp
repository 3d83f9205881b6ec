#pragma once

#include <string>
#include <vector>

namespace cdfsl {

std::string read_text_file(const std::string& path);
std::vector<char> read_binary_file(const std::string& path);

/// Writes to a sibling temp file first, then renames over the target.
void write_file_atomic(const std::string& path, const char* data, std::size_t size);
void write_file_atomic(const std::string& path, const std::string& text);

bool file_exists(const std::string& path);
void ensure_directory(const std::string& path);

}  // namespace cdfsl
