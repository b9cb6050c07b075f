#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace conva {

/// Writes to a sibling temp file, then renames over `path`, so a crash never
/// leaves a truncated artifact behind. Throws Error(kIo).
void atomic_write(const std::filesystem::path& path,
                  std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, std::string_view text);

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

}  // namespace conva
