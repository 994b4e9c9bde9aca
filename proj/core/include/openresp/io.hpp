#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace openresp::io {

std::string read_file(const std::filesystem::path& path);

/// Splits on '\n', dropping a trailing '\r' from each line. A final empty
/// line produced by a terminating newline is not returned.
std::vector<std::string> split_lines(std::string_view text);

/// Writes `content` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Writes an output artifact. Rewriting identical bytes is a no-op success;
/// replacing different content requires `force`, otherwise ConfigError.
void write_artifact(const std::filesystem::path& path, std::string_view content, bool force);

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// 64-bit FNV-1a. Stable across platforms; used for seeding and mock hashing.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

} // namespace openresp::io
