#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace callrisk {

// Writes via a sibling temp file and renames into place, so readers never see
// a half-written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Hex-encoded SHA-256 of a byte string; used for the run manifest.
std::string sha256_hex(std::string_view data);

}  // namespace callrisk
