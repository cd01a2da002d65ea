#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace pharmvig {

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Write-temp-then-rename. The target either keeps its old content or holds
// the complete new content; readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// One JSON object per line. Parse errors carry the 1-based line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

}  // namespace pharmvig
