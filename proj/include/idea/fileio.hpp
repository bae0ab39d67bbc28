#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace idea {

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path);
std::string ReadFileText(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over the target, so
/// readers never observe a partially written file.
void WriteFileAtomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void WriteFileAtomic(const std::filesystem::path& path, const std::string& text);

/// One non-negative integer per line; blank lines are ignored.
std::vector<std::size_t> LoadLabels(const std::filesystem::path& path);
void SaveLabels(std::span<const std::size_t> labels, const std::filesystem::path& path);

}  // namespace idea
