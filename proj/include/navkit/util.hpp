#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace navkit {

/// Code-point count of a UTF-8 string. Invalid bytes count as one each.
std::size_t utf8_length(std::string_view s);

/// Runs of ASCII whitespace become a single space; leading/trailing
/// whitespace is removed.
std::string collapse_whitespace(std::string_view s);

/// Maximal runs of non-whitespace characters.
std::vector<std::string> split_whitespace(std::string_view s);

std::uint64_t fnv1a64(std::string_view s);

std::string to_lower(std::string_view s);

bool is_ascii_space(char c);

/// Whole-file read; throws Errc::LoadError when the file cannot be opened.
std::string read_file(const std::string& path);

void write_file(const std::string& path, std::string_view contents);

} // namespace navkit
