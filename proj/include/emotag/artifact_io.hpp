// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace emotag {

inline constexpr int kFormatVersion = 1;

/// Provenance stamped on every text artifact as leading `# ` comment lines.
struct ArtifactHeader {
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
  int format_version = kFormatVersion;

  std::string render() const;
};

/// True for metadata lines. Data lines in every format carry a tab or
/// comma, so a leading `# ` line without either is never data.
bool is_comment_line(std::string_view line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Splits content into lines, dropping `\r` and the leading comment block.
std::vector<std::string> data_lines(std::string_view content);

/// FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

std::vector<std::string> split(std::string_view s, char sep);
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

/// `%.9g`; lossless for 32-bit floats.
std::string format_g9(double v);

}  // namespace emotag
