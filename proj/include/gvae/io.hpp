#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace gvae {

std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Shortest decimal form that round-trips the double exactly.
std::string format_double(double x);

std::string join_csv(const std::vector<std::string>& cells);

}  // namespace gvae
